"""Encoders, residual dense Swin blocks, the residual group, decoder and the full model."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError, DimensionError
from .attention import SwinLayer
from .scma import SCMA, ConvFusion


@dataclass
class NetworkConfig:
    scale: int = 4
    in_channels: int = 3
    embed_dim: int = 144
    num_rdstb: int = 4
    stl_per_rdstb: int = 4
    window_size: int = 8
    num_heads: int = 4
    scma_heads: int = 1
    mlp_ratio: float = 2.0
    mcer_channels: int = 12
    use_scma: bool = True
    use_irg: bool = True

    def __post_init__(self):
        if self.scale not in (2, 4):
            raise ConfigError(f"scale must be 2 or 4, got {self.scale}")
        if self.in_channels not in (1, 3):
            raise ConfigError(f"in_channels must be 1 or 3, got {self.in_channels}")
        for name in ("embed_dim", "window_size", "num_heads", "scma_heads", "mcer_channels",
                     "num_rdstb", "stl_per_rdstb"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.embed_dim % self.num_heads or self.embed_dim % self.scma_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} must be divisible by the head counts")
        if self.mlp_ratio <= 0:
            raise ConfigError("mlp_ratio must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown network config keys: {sorted(unknown)}")
        return cls(**d)


def toy_config(**overrides) -> NetworkConfig:
    """Small configuration (~200K parameters) for desk-scale experiments."""
    base = dict(scale=2, in_channels=1, embed_dim=36, num_rdstb=2, stl_per_rdstb=2,
                window_size=8, num_heads=4, scma_heads=1, mlp_ratio=2.0, mcer_channels=12)
    base.update(overrides)
    return NetworkConfig(**base)


class ConvEncoder(nn.Module):
    """Two 3x3 convolutions lifting an input raster to ``dim`` feature channels."""

    def __init__(self, in_channels, dim):
        super().__init__()
        self.in_channels = in_channels
        self.conv1 = nn.Conv2d(in_channels, dim, 3, padding=1)
        self.act = nn.LeakyReLU(0.2)
        self.conv2 = nn.Conv2d(dim, dim, 3, padding=1)

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise DimensionError(f"encoder expects {self.in_channels} channels, got {x.shape[1]}")
        return self.conv2(self.act(self.conv1(x)))


class RDSTB(nn.Module):
    """Densely connected Swin layers closed by a 3x3 conv and a block residual.

    Before layer ``d`` the concatenation ``[F(d-1), ..., F(1), F_in]`` (d*C
    channels) is compressed back to C channels by a 1x1 conv. Layers alternate
    plain and shifted windows.
    """

    def __init__(self, dim, depth=4, window_size=8, num_heads=4, mlp_ratio=2.0):
        super().__init__()
        self.compress = nn.ModuleList(nn.Conv2d(d * dim, dim, 1) for d in range(1, depth + 1))
        self.layers = nn.ModuleList(
            SwinLayer(dim, window_size, num_heads, mlp_ratio, shifted=(d % 2 == 0)) for d in range(1, depth + 1)
        )
        self.conv = nn.Conv2d(dim, dim, 3, padding=1)

    def dense_features(self, x):
        feats = [x]
        for compress, layer in zip(self.compress, self.layers):
            feats.append(layer(compress(torch.cat(feats[::-1], dim=1))))
        return feats[1:]

    def forward(self, x):
        return self.conv(self.dense_features(x)[-1]) + x


class IRG(nn.Module):
    """Chain of RDSTBs, two 3x3 convs and a group residual."""

    def __init__(self, dim, num_blocks=4, depth=4, window_size=8, num_heads=4, mlp_ratio=2.0):
        super().__init__()
        self.blocks = nn.ModuleList(
            RDSTB(dim, depth, window_size, num_heads, mlp_ratio) for _ in range(num_blocks)
        )
        self.conv1 = nn.Conv2d(dim, dim, 3, padding=1)
        self.act = nn.LeakyReLU(0.2)
        self.conv2 = nn.Conv2d(dim, dim, 3, padding=1)

    def forward(self, x):
        y = x
        for block in self.blocks:
            y = block(y)
        return self.conv2(self.act(self.conv1(y))) + x


class ConvGroup(nn.Module):
    """Convolutional stand-in for the IRG used in ablations: one conv per block."""

    def __init__(self, dim, num_blocks=4):
        super().__init__()
        self.blocks = nn.ModuleList(
            nn.Sequential(nn.Conv2d(dim, dim, 3, padding=1), nn.LeakyReLU(0.2)) for _ in range(num_blocks)
        )
        self.conv1 = nn.Conv2d(dim, dim, 3, padding=1)
        self.act = nn.LeakyReLU(0.2)
        self.conv2 = nn.Conv2d(dim, dim, 3, padding=1)

    def forward(self, x):
        y = x
        for block in self.blocks:
            y = block(y)
        return self.conv2(self.act(self.conv1(y))) + x


class Decoder(nn.Module):
    """log2(scale) stages of (3x3 conv -> pixel shuffle x2 -> LeakyReLU), then a 3x3 conv."""

    def __init__(self, dim, out_channels, scale):
        super().__init__()
        stages = []
        for _ in range(int(math.log2(scale))):
            stages += [nn.Conv2d(dim, 4 * dim, 3, padding=1), nn.PixelShuffle(2), nn.LeakyReLU(0.2)]
        self.upsample = nn.Sequential(*stages)
        self.conv_last = nn.Conv2d(dim, out_channels, 3, padding=1)

    def forward(self, x):
        return self.conv_last(self.upsample(x))


def bilinear_upsample(x, scale):
    return F.interpolate(x, scale_factor=scale, mode="bilinear", align_corners=False)


class EBSRNet(nn.Module):
    """Blurry LR image + event representation -> sharp HR image.

    ``forward(blurry, mcer)`` takes (B, in_channels, H, W) and
    (B, mcer_channels, H, W) and returns (B, in_channels, scale*H, scale*W).
    """

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        c = cfg.embed_dim
        self.image_encoder = ConvEncoder(cfg.in_channels, c)
        self.event_encoder = ConvEncoder(cfg.mcer_channels, c)
        if cfg.use_scma:
            self.fusion = SCMA(c, cfg.window_size, cfg.scma_heads, cfg.mlp_ratio)
        else:
            self.fusion = ConvFusion(c)
        if cfg.use_irg:
            self.irg = IRG(c, cfg.num_rdstb, cfg.stl_per_rdstb, cfg.window_size, cfg.num_heads, cfg.mlp_ratio)
        else:
            self.irg = ConvGroup(c, cfg.num_rdstb)
        self.decoder = Decoder(c, cfg.in_channels, cfg.scale)

    def features(self, blurry, mcer):
        if blurry.shape[-2:] != mcer.shape[-2:]:
            raise DimensionError(
                f"blurry image {tuple(blurry.shape[-2:])} and events {tuple(mcer.shape[-2:])} differ spatially"
            )
        f_s = self.fusion(self.image_encoder(blurry), self.event_encoder(mcer))
        return self.irg(f_s)

    def forward(self, blurry, mcer):
        return self.decoder(self.features(blurry, mcer)) + bilinear_upsample(blurry, self.cfg.scale)


def _init_weights(module):
    if isinstance(module, nn.Linear):
        nn.init.trunc_normal_(module.weight, std=0.02)
        nn.init.zeros_(module.bias)
    elif isinstance(module, nn.LayerNorm):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


def residual_closing_convs(model: EBSRNet):
    """Convs whose zeroing turns their enclosing residual into an identity."""
    convs = [model.decoder.conv_last, model.irg.conv2]
    if isinstance(model.irg, IRG):
        convs += [block.conv for block in model.irg.blocks]
    return convs


def build_model(cfg: NetworkConfig, seed: int = 0, zero_residuals: bool = True,
                dtype=torch.float32) -> EBSRNet:
    """Construct and deterministically initialize a model.

    With ``zero_residuals`` the model starts as exactly the bilinear upsampler.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = EBSRNet(cfg)
        model.apply(_init_weights)
        for attn in (m for m in model.modules() if hasattr(m, "relative_position_bias_table")):
            nn.init.trunc_normal_(attn.relative_position_bias_table, std=0.02)
    if zero_residuals:
        with torch.no_grad():
            for conv in residual_closing_convs(model):
                conv.weight.zero_()
                conv.bias.zero_()
    return model.to(dtype)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
