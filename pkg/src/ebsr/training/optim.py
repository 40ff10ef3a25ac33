"""Adam with bias correction and the step-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from ..errors import NumericError

BASE_LR = 1e-4
LR_DECAY = 0.98
LR_DECAY_EVERY = 5

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def lr_at(epoch: int, base_lr: float = BASE_LR, decay: float = LR_DECAY, every: int = LR_DECAY_EVERY) -> float:
    """Learning rate ``base_lr * decay ** (epoch // every)``."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return base_lr * decay ** (epoch // every)


@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0
    lr: float = BASE_LR
    seed: int = 0
    best_val_psnr: float = float("-inf")
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def meta(self) -> dict:
        return {"step": self.step, "epoch": self.epoch, "lr": self.lr, "seed": self.seed,
                "best_val_psnr": self.best_val_psnr}


def adam_step(params: dict, grads: dict, state: TrainState, beta1=BETA1, beta2=BETA2, eps=EPS):
    """One Adam update of ``params`` (name -> tensor), in place.

    Moments are created lazily with the parameter's shape. Returns
    ``(params, state)``.
    """
    for name, g in grads.items():
        if g is not None and not torch.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    with torch.no_grad():
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                g = torch.zeros_like(p)
            m = state.m.setdefault(name, torch.zeros_like(p))
            v = state.v.setdefault(name, torch.zeros_like(p))
            m.mul_(beta1).add_(g, alpha=1.0 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            denom = (v / bc2).sqrt_().add_(eps)
            p.addcdiv_(m, denom, value=-state.lr / bc1)
    return params, state
