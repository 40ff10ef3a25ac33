"""Symmetric cross-modal attention between image and event features."""

import torch
import torch.nn as nn

from ..errors import DimensionError
from .attention import Mlp, check_finite, merge_heads, pad_to_multiple, split_heads, window_attention, \
    window_partition, window_reverse


class ModalityProjection(nn.Module):
    """LayerNorm over channels followed by 1x1 projections to Q, K and V."""

    def __init__(self, dim):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)

    def forward(self, tokens):
        t = self.norm(tokens)
        return self.q(t), self.k(t), self.v(t)


class CrossBranch(nn.Module):
    """Residual add of the attended features, then LayerNorm + MLP with residual."""

    def __init__(self, dim, mlp_ratio):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, query_input, attended):
        x = query_input + attended
        return x + self.mlp(self.norm(x))


class SCMA(nn.Module):
    """Two cross-attention branches, image->events and events->image, fused by a 1x1 conv.

    Attention runs inside non-overlapping ``window_size`` windows; every window
    token attends to the other modality's tokens of the same window.
    """

    def __init__(self, dim, window_size=8, num_heads=1, mlp_ratio=2.0):
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"embed dim {dim} not divisible by {num_heads} heads")
        self.dim = dim
        self.window_size = window_size
        self.num_heads = num_heads
        self.d_k = dim // num_heads
        self.proj_b = ModalityProjection(dim)
        self.proj_e = ModalityProjection(dim)
        self.branch_be = CrossBranch(dim, mlp_ratio)
        self.branch_eb = CrossBranch(dim, mlp_ratio)
        self.fuse = nn.Conv2d(2 * dim, dim, 1)

    def _windows(self, x):
        return window_partition(x.permute(0, 2, 3, 1), self.window_size)

    def attend(self, q, k, v, return_weights=False):
        out = window_attention(split_heads(q, self.num_heads), split_heads(k, self.num_heads),
                               split_heads(v, self.num_heads), self.d_k ** -0.5,
                               return_weights=return_weights)
        if return_weights:
            return merge_heads(out[0]), out[1]
        return merge_heads(out)

    def branches(self, f_b, f_e, return_weights=False):
        """Return the two fused-branch features (B, C, H, W) before the 1x1 fusion."""
        if f_b.shape != f_e.shape:
            raise DimensionError(f"image features {tuple(f_b.shape)} vs event features {tuple(f_e.shape)}")
        check_finite(f_b, "image features")
        check_finite(f_e, "event features")
        h, w = f_b.shape[-2:]
        xb = pad_to_multiple(f_b, self.window_size)
        xe = pad_to_multiple(f_e, self.window_size)
        hp, wp = xb.shape[-2:]
        tb, te = self._windows(xb), self._windows(xe)
        q_b, k_b, v_b = self.proj_b(tb)
        q_e, k_e, v_e = self.proj_e(te)
        att_be = self.attend(q_b, k_e, v_e, return_weights)
        att_eb = self.attend(q_e, k_b, v_b, return_weights)
        if return_weights:
            (att_be, w_be), (att_eb, w_eb) = att_be, att_eb
        out_be = self.branch_be(tb, att_be)
        out_eb = self.branch_eb(te, att_eb)

        def back(t):
            return window_reverse(t, self.window_size, hp, wp)[:, :h, :w].permute(0, 3, 1, 2).contiguous()

        if return_weights:
            return back(out_be), back(out_eb), (w_be, w_eb)
        return back(out_be), back(out_eb)

    def forward(self, f_b, f_e):
        out_be, out_eb = self.branches(f_b, f_e)
        return self.fuse(torch.cat([out_be, out_eb], dim=1))


class ConvFusion(nn.Module):
    """Plain convolutional stand-in for SCMA used in ablations."""

    def __init__(self, dim):
        super().__init__()
        self.conv = nn.Conv2d(2 * dim, dim, 3, padding=1)

    def forward(self, f_b, f_e):
        if f_b.shape != f_e.shape:
            raise DimensionError(f"image features {tuple(f_b.shape)} vs event features {tuple(f_e.shape)}")
        return self.conv(torch.cat([f_b, f_e], dim=1))
