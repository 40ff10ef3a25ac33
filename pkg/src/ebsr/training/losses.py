"""Weighted L1 + perceptual reconstruction loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import torch
import torch.nn as nn

from ..errors import ConfigError, DimensionError

DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 0.1


@dataclass
class LossConfig:
    """``perceptual`` maps (prediction, target) to a scalar distance tensor."""

    alpha: float = DEFAULT_ALPHA
    beta: float = 0.0
    perceptual: Optional[Callable] = None

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.beta > 0 and self.perceptual is None:
            raise ConfigError("beta > 0 requires a perceptual feature extractor")


class FeaturePerceptualLoss(nn.Module):
    """Mean L1 distance between feature maps of a frozen extractor.

    ``extractor`` returns a tensor or a list of tensors for a (B, C, H, W)
    batch. Single-channel inputs are repeated to ``in_channels`` first.
    """

    def __init__(self, extractor, in_channels=3):
        super().__init__()
        self.extractor = extractor
        self.in_channels = in_channels
        for p in extractor.parameters():
            p.requires_grad_(False)

    def _features(self, x):
        if x.shape[1] == 1 and self.in_channels != 1:
            x = x.repeat(1, self.in_channels, 1, 1)
        feats = self.extractor(x)
        return feats if isinstance(feats, (list, tuple)) else [feats]

    def forward(self, pred, target):
        fp, ft = self._features(pred), self._features(target)
        return sum((a - b).abs().mean() for a, b in zip(fp, ft)) / len(fp)


def compute_loss(pred, target, cfg: LossConfig):
    """Return ``(total, {"l1": ..., "perceptual": ...})``; ``total`` keeps the graph."""
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {tuple(pred.shape)} vs target {tuple(target.shape)}")
    l1 = (pred - target).abs().mean()
    if cfg.beta > 0:
        if cfg.perceptual is None:
            raise ConfigError("beta > 0 requires a perceptual feature extractor")
        per = cfg.perceptual(pred, target)
    else:
        per = torch.zeros((), dtype=pred.dtype, device=pred.device)
    total = cfg.alpha * l1 + cfg.beta * per
    return total, {"l1": float(l1.detach()), "perceptual": float(torch.as_tensor(per).detach())}
