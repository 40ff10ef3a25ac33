"""Windowed attention primitives and the shifted-window transformer layer."""

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import NumericError


def check_finite(x, what):
    if not torch.isfinite(x).all():
        raise NumericError(f"non-finite values in {what}")


def pad_to_multiple(x, multiple):
    """Reflect-pad a (B, C, H, W) tensor on the bottom/right to window multiples."""
    h, w = x.shape[-2:]
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph == 0 and pw == 0:
        return x
    mode = "reflect" if ph < h and pw < w else "replicate"
    return F.pad(x, (0, pw, 0, ph), mode=mode)


def window_partition(x, window_size):
    """(B, H, W, C) -> (B * nW, w*w, C)"""
    b, h, w, c = x.shape
    x = x.view(b, h // window_size, window_size, w // window_size, window_size, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window_size * window_size, c)


def window_reverse(windows, window_size, h, w):
    """(B * nW, w*w, C) -> (B, H, W, C)"""
    c = windows.shape[-1]
    b = windows.shape[0] // ((h // window_size) * (w // window_size))
    x = windows.view(b, h // window_size, w // window_size, window_size, window_size, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(b, h, w, c)


def window_attention(q, k, v, scale, bias=None, mask=None, return_weights=False):
    """softmax(q k^T * scale + bias + mask) v over the last two axes.

    q, k, v: (B_, heads, N, d). ``mask`` is (nW, N, N) with 0 or -inf and is
    broadcast over batches whose leading size is a multiple of nW.
    """
    logits = torch.matmul(q, k.transpose(-2, -1)) * scale
    if bias is not None:
        logits = logits + bias
    if mask is not None:
        nw = mask.shape[0]
        b_, nh, n, _ = logits.shape
        logits = logits.view(b_ // nw, nw, nh, n, n) + mask[None, :, None]
        logits = logits.view(b_, nh, n, n)
    weights = torch.softmax(logits, dim=-1)
    out = torch.matmul(weights, v)
    return (out, weights) if return_weights else out


def split_heads(x, num_heads):
    b_, n, c = x.shape
    return x.view(b_, n, num_heads, c // num_heads).transpose(1, 2)


def merge_heads(x):
    b_, nh, n, d = x.shape
    return x.transpose(1, 2).reshape(b_, n, nh * d)


def relative_position_index(window_size):
    coords = torch.stack(torch.meshgrid(torch.arange(window_size), torch.arange(window_size), indexing="ij"))
    flat = coords.flatten(1)
    rel = (flat[:, :, None] - flat[:, None, :]).permute(1, 2, 0)
    rel = rel + (window_size - 1)
    return rel[..., 0] * (2 * window_size - 1) + rel[..., 1]


def shifted_window_mask(h, w, window_size, shift, device=None):
    """Additive (nW, N, N) mask that blocks attention across the roll seams."""
    labels = torch.zeros(1, h, w, 1, device=device)
    spans = (slice(0, -window_size), slice(-window_size, -shift), slice(-shift, None))
    region = 0
    for hs in spans:
        for ws in spans:
            labels[:, hs, ws, :] = region
            region += 1
    win = window_partition(labels, window_size).squeeze(-1)
    diff = win[:, None, :] - win[:, :, None]
    mask = torch.zeros_like(diff)
    return mask.masked_fill(diff != 0, float("-inf"))


class Mlp(nn.Module):
    def __init__(self, dim, hidden):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class WindowMSA(nn.Module):
    """Multi-head self-attention inside w x w windows with relative position bias."""

    def __init__(self, dim, window_size, num_heads):
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"embed dim {dim} not divisible by {num_heads} heads")
        self.window_size = window_size
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5
        self.relative_position_bias_table = nn.Parameter(torch.zeros((2 * window_size - 1) ** 2, num_heads))
        self.register_buffer("relative_position_index", relative_position_index(window_size), persistent=False)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def position_bias(self):
        n = self.window_size ** 2
        bias = self.relative_position_bias_table[self.relative_position_index.view(-1)]
        return bias.view(n, n, -1).permute(2, 0, 1)

    def forward(self, windows, mask=None, return_weights=False):
        b_, n, c = windows.shape
        qkv = self.qkv(windows).view(b_, n, 3, self.num_heads, c // self.num_heads).permute(2, 0, 3, 1, 4)
        out = window_attention(qkv[0], qkv[1], qkv[2], self.scale, self.position_bias(), mask, return_weights)
        if return_weights:
            out, weights = out
            return self.proj(merge_heads(out)), weights
        return self.proj(merge_heads(out))


class SwinLayer(nn.Module):
    """Pre-norm windowed transformer layer, optionally on cyclically shifted windows.

    Input and output are (B, C, H, W); spatial size is preserved.
    """

    def __init__(self, dim, window_size=8, num_heads=4, mlp_ratio=2.0, shifted=False):
        super().__init__()
        self.window_size = window_size
        self.shift = window_size // 2 if shifted else 0
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowMSA(dim, window_size, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))
        self._masks = {}

    def attention_mask(self, h, w, device):
        if not self.shift:
            return None
        key = (h, w, str(device))
        if key not in self._masks:
            self._masks[key] = shifted_window_mask(h, w, self.window_size, self.shift, device)
        return self._masks[key]

    def forward(self, x, return_weights=False):
        check_finite(x, "transformer layer input")
        h, w = x.shape[-2:]
        ws = self.window_size
        x = pad_to_multiple(x, ws).permute(0, 2, 3, 1)
        b, hp, wp, c = x.shape

        y = self.norm1(x)
        if self.shift:
            y = torch.roll(y, shifts=(-self.shift, -self.shift), dims=(1, 2))
        mask = self.attention_mask(hp, wp, x.device).to(x.dtype) if self.shift else None
        y = self.attn(window_partition(y, ws), mask, return_weights)
        if return_weights:
            y, weights = y
        y = window_reverse(y, ws, hp, wp)
        if self.shift:
            y = torch.roll(y, shifts=(self.shift, self.shift), dims=(1, 2))
        x = x + y
        x = x + self.mlp(self.norm2(x))
        x = x[:, :h, :w].permute(0, 3, 1, 2).contiguous()
        return (x, weights) if return_weights else x
