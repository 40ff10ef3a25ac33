"""Training and evaluation loops over prepared examples."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..data import TrainingExample, sample_batch
from ..errors import ConfigError, DimensionError, NumericError
from ..network.checkpoint import load_model, load_state_into, read_checkpoint, save_checkpoint
from ..network.model import EBSRNet, NetworkConfig, bilinear_upsample, build_model
from .losses import LossConfig, compute_loss
from .metrics import psnr, ssim
from .optim import BASE_LR, LR_DECAY, LR_DECAY_EVERY, TrainState, adam_step, lr_at

log = logging.getLogger(__name__)

LOG_FIELDS = ["epoch", "step", "loss", "l1", "perceptual", "lr", "val_psnr", "val_ssim"]
EVAL_FIELDS = ["id", "psnr", "ssim"]


@dataclass
class TrainConfig:
    epochs: int = 1
    batch: int = 4
    crop: int | None = 64
    lr: float = BASE_LR
    lr_decay: float = LR_DECAY
    lr_decay_every: int = LR_DECAY_EVERY
    steps_per_epoch: int | None = None
    flip: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1:
            raise ConfigError("epochs must be >= 0 and batch >= 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")


@dataclass
class TrainResult:
    model: EBSRNet
    state: TrainState
    log: list = field(default_factory=list)


def _tensor(a):
    return torch.from_numpy(np.ascontiguousarray(a))


def predict(model: EBSRNet, blurry, events) -> np.ndarray:
    """Single (C, h, w) example -> clipped (C, sh, sw) prediction."""
    dtype = next(model.parameters()).dtype
    model.eval()
    with torch.no_grad():
        out = model(_tensor(blurry[None]).to(dtype), _tensor(events[None]).to(dtype))
    return np.clip(out[0].double().numpy(), 0.0, 1.0)


def score_rows(pairs):
    """``pairs`` yields (id, prediction, target); returns per-sample metric rows."""
    return [{"id": name, "psnr": psnr(pred, target), "ssim": ssim(pred, target)} for name, pred, target in pairs]


def summarize(rows):
    return {"psnr": float(np.mean([r["psnr"] for r in rows])), "ssim": float(np.mean([r["ssim"] for r in rows])),
            "count": len(rows)}


def evaluate_model(model: EBSRNet, examples, csv_path=None):
    """Mean PSNR/SSIM of ``model`` over examples, optionally writing per-sample CSV."""
    for ex in examples:
        if ex.blurry.shape[0] != model.cfg.in_channels or ex.events.shape[0] != model.cfg.mcer_channels:
            raise DimensionError(
                f"{ex.name}: data has {ex.blurry.shape[0]} image / {ex.events.shape[0]} event channels, "
                f"model expects {model.cfg.in_channels} / {model.cfg.mcer_channels}"
            )
        expected = tuple(model.cfg.scale * s for s in ex.blurry.shape[1:])
        if tuple(ex.sharp.shape[1:]) != expected:
            raise DimensionError(f"{ex.name}: target {ex.sharp.shape[1:]} but scale implies {expected}")
    rows = score_rows((ex.name, predict(model, ex.blurry, ex.events), ex.sharp.astype(np.float64))
                      for ex in examples)
    if csv_path is not None:
        write_csv(csv_path, EVAL_FIELDS, rows)
    return {**summarize(rows), "rows": rows}


def evaluate(examples, checkpoint, csv_path=None):
    """Evaluate a stored checkpoint on prepared examples."""
    model, _ = load_model(checkpoint)
    return evaluate_model(model, examples, csv_path)


def bilinear_baseline(examples, scale):
    """Metrics of plain bilinear upsampling of the blurry input."""
    def pairs():
        for ex in examples:
            up = bilinear_upsample(_tensor(ex.blurry[None]).double(), scale)[0].numpy()
            yield ex.name, np.clip(up, 0.0, 1.0), ex.sharp.astype(np.float64)
    rows = score_rows(pairs())
    return {**summarize(rows), "rows": rows}


def write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _index_stream(n, rng):
    while True:
        yield from rng.permutation(n)


def _state_from_checkpoint(path, model, seed):
    _, tensors, meta = read_checkpoint(path)
    load_state_into(model, tensors)
    names = [n for n, _ in model.named_parameters()]
    st = meta["state"]
    state = TrainState(step=st["step"], epoch=st["epoch"], lr=st["lr"], seed=st["seed"],
                       best_val_psnr=st["best_val_psnr"] if st["best_val_psnr"] is not None else float("-inf"))
    if st["seed"] != seed:
        raise ConfigError(f"resume seed {seed} differs from checkpoint seed {st['seed']}")
    dtype = next(model.parameters()).dtype
    for group, target in (("adam_m", state.m), ("adam_v", state.v)):
        for n in names:
            key = f"{group}/{n}"
            if key in tensors:
                target[n] = torch.from_numpy(tensors[key]).to(dtype)
    return state, list(meta.get("log", []))


def _save(path, model, state, rows, extra=None):
    meta = {"state": {**state.meta(),
                      "best_val_psnr": None if math.isinf(state.best_val_psnr) else state.best_val_psnr},
            "log": rows, **(extra or {})}
    save_checkpoint(path, model, meta, {"adam_m": state.m, "adam_v": state.v})


def train_loop(train: list[TrainingExample], net_cfg: NetworkConfig, loss_cfg: LossConfig,
               cfg: TrainConfig, val: list[TrainingExample] | None = None, run_dir=None,
               resume=None, model: EBSRNet | None = None, extra_meta: dict | None = None) -> TrainResult:
    """Optimize a model with Adam; validate, log and checkpoint after every epoch.

    ``run_dir`` receives ``log.csv``, ``last.ckpt`` and ``best.ckpt``. With
    ``resume`` (a ``last.ckpt``) training continues at the following epoch and
    reproduces an uninterrupted run exactly. Without ``val`` the training
    examples are scored. ``extra_meta`` is stored alongside the training
    state in every checkpoint.
    """
    if not train:
        raise ConfigError("training set is empty")
    val = val if val is not None else train
    model = model if model is not None else build_model(net_cfg, cfg.seed)
    params = dict(model.named_parameters())
    dtype = next(model.parameters()).dtype
    state = TrainState(lr=lr_at(0, cfg.lr, cfg.lr_decay, cfg.lr_decay_every), seed=cfg.seed)
    rows = []
    start = 0
    if resume is not None:
        state, rows = _state_from_checkpoint(resume, model, cfg.seed)
        start = state.epoch + 1
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)

    n = len(train)
    for epoch in range(start, cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        state.epoch = epoch
        state.lr = lr_at(epoch, cfg.lr, cfg.lr_decay, cfg.lr_decay_every)
        steps = cfg.steps_per_epoch or math.ceil(n / cfg.batch)
        order = _index_stream(n, rng)
        sums = {"loss": 0.0, "l1": 0.0, "perceptual": 0.0}
        model.train()
        for _ in range(steps):
            idx = [next(order) for _ in range(min(cfg.batch, n) if cfg.steps_per_epoch is None else cfg.batch)]
            b, e, s, names = sample_batch(train, idx, net_cfg.scale, rng, cfg.crop, cfg.flip)
            pred = model(_tensor(b).to(dtype), _tensor(e).to(dtype))
            total, parts = compute_loss(pred, _tensor(s).to(dtype), loss_cfg)
            if not torch.isfinite(total):
                raise NumericError(f"non-finite loss at epoch {epoch}, step {state.step + 1}, batch {names}")
            model.zero_grad(set_to_none=True)
            total.backward()
            adam_step(params, {k: p.grad for k, p in params.items()}, state)
            sums["loss"] += float(total.detach())
            sums["l1"] += parts["l1"]
            sums["perceptual"] += parts["perceptual"]
        metrics = summarize(score_rows((ex.name, predict(model, ex.blurry, ex.events), ex.sharp.astype(np.float64))
                                       for ex in val))
        row = {"epoch": epoch, "step": state.step, **{k: v / steps for k, v in sums.items()}, "lr": state.lr,
               "val_psnr": metrics["psnr"], "val_ssim": metrics["ssim"]}
        rows.append(row)
        log.info("epoch %d step %d loss %.5f val_psnr %.3f val_ssim %.4f", epoch, state.step, row["loss"],
                 row["val_psnr"], row["val_ssim"])
        improved = metrics["psnr"] > state.best_val_psnr
        if improved:
            state.best_val_psnr = metrics["psnr"]
        if run_dir is not None:
            _save(run_dir / "last.ckpt", model, state, rows, extra_meta)
            if improved:
                _save(run_dir / "best.ckpt", model, state, rows, extra_meta)
            write_csv(run_dir / "log.csv", LOG_FIELDS, rows)
    return TrainResult(model, state, rows)
