"""Command-line entry point: ``ebsr simulate|train|eval|infer|params``.

Exit codes: 0 ok, 2 configuration or geometry error, 3 I/O or file-format
error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import torch

from . import config as runcfg
from .data import (load_dataset, match_channels, prepare_example, read_manifest, save_sample, simulate_sample,
                   write_manifest)
from .errors import ConfigError, DimensionError, FormatError, NumericError
from .event_sim import TimeInterval, VideoSequence, read_events
from .imageio import read_png, write_png
from .mcer import MCERConfig, encode_mcer
from .network.checkpoint import load_model
from .network.model import build_model, count_parameters
from .training.loop import (EVAL_FIELDS, TrainConfig, evaluate_model, predict, score_rows, summarize, train_loop,
                            write_csv)
from .training.losses import LossConfig

log = logging.getLogger("ebsr")

CONFIG_NAME = "config.ini"
EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


# --- helpers --------------------------------------------------------------

def _require(cfg, *keys):
    missing = [k for k in keys if cfg[k] is None]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _existing(path, what) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _fresh_dir(path) -> Path:
    """Create the output directory; refuse to reuse a non-empty one."""
    p = Path(path)
    if p.exists() and (not p.is_dir() or any(p.iterdir())):
        raise ConfigError(f"output directory {p} exists and is not empty")
    p.mkdir(parents=True, exist_ok=True)
    return p


def _manifest_file(path) -> Path:
    p = _existing(path, "manifest")
    if p.is_dir():
        p = _existing(p / "manifest.json", "manifest")
    return p


def _scales_from_meta(meta, model_cfg):
    scales = meta.get("mcer_scales")
    if scales is not None:
        return MCERConfig(tuple(scales))
    # checkpoints written outside the CLI: infer the layout from the channel count
    k = model_cfg.mcer_channels // 4
    default = MCERConfig()
    if k == len(default.scales):
        return default
    if k == 1:
        return MCERConfig((1.0,))
    raise ConfigError(f"checkpoint lacks mcer_scales and has {model_cfg.mcer_channels} event channels")


# --- simulate ---------------------------------------------------------------

def _sequence_dirs(root: Path):
    dirs = sorted(d for d in root.iterdir() if d.is_dir() and any(d.glob("*.png")))
    if not dirs:
        raise FileNotFoundError(f"no frame-sequence subdirectories with PNG files in {root}")
    return dirs


def _chunks(n, m):
    if n < 2:
        return []
    if n < m:
        return [(0, n)]
    return [(k * m, (k + 1) * m) for k in range(n // m)]


def _simulate_job(job):
    name, paths, t0, dt, scale, c, log_eps = job
    frames = []
    for p in paths:
        f = read_png(p)
        h, w = (f.shape[1] // scale) * scale, (f.shape[2] // scale) * scale
        if h == 0 or w == 0:
            raise DimensionError(f"{p}: frame {f.shape[1:]} smaller than scale {scale}")
        frames.append(f[:, :h, :w])
    ts = t0 + dt * np.arange(len(frames))
    seq = VideoSequence(frames, ts, TimeInterval(float(ts[0]), float(ts[-1])))
    return simulate_sample(seq, scale, c, log_eps, name)


def cmd_simulate(cfg):
    _require(cfg, "input", "output")
    root = _existing(cfg["input"], "input directory")
    net = runcfg.network_config(cfg)
    jobs = []
    for d in _sequence_dirs(root):
        paths = sorted(d.glob("*.png"))
        for k, (a, b) in enumerate(_chunks(len(paths), cfg["frames_per_sample"])):
            jobs.append((f"{d.name}_{k:03d}", paths[a:b], a * cfg["frame_interval"], cfg["frame_interval"],
                         net.scale, cfg["threshold_c"], cfg["log_eps"]))
    if not jobs:
        raise FileNotFoundError(f"no sequence in {root} has at least two frames")
    out = _fresh_dir(cfg["output"])
    runcfg.dump_ini(cfg, out / CONFIG_NAME)
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(cfg["jobs"]) as pool:
            samples = pool.map(_simulate_job, jobs)
            entries = [save_sample(out, s) for s in samples]
    else:
        entries = [save_sample(out, _simulate_job(j)) for j in jobs]
    write_manifest(out, entries)
    log.info("wrote %d samples to %s", len(entries), out)
    return out


# --- train / eval -----------------------------------------------------------

def _examples(manifest, mcer_cfg, net_cfg):
    samples = load_dataset(manifest)
    for s in samples:
        if s.scale != net_cfg.scale:
            raise DimensionError(f"{s.name}: sample scale {s.scale} but model scale {net_cfg.scale}")
    return [prepare_example(s, mcer_cfg, net_cfg.in_channels) for s in samples]


def cmd_train(cfg):
    _require(cfg, "manifest", "output")
    manifest = _manifest_file(cfg["manifest"])
    val_manifest = _manifest_file(cfg["val_manifest"]) if cfg["val_manifest"] else None
    resume = _existing(cfg["resume"], "resume checkpoint") if cfg["resume"] else None
    net_cfg, mcer_cfg = runcfg.network_config(cfg), runcfg.mcer_config(cfg)
    loss_cfg = LossConfig(cfg["alpha"], cfg["beta"])
    train_cfg = TrainConfig(epochs=cfg["epochs"], batch=cfg["batch"], crop=cfg["crop"], lr=cfg["lr"],
                            lr_decay=cfg["lr_decay"], lr_decay_every=cfg["lr_decay_every"],
                            steps_per_epoch=cfg["steps_per_epoch"], flip=cfg["flip"], seed=cfg["seed"])
    train = _examples(manifest, mcer_cfg, net_cfg)
    val = _examples(val_manifest, mcer_cfg, net_cfg) if val_manifest else None
    out = _fresh_dir(cfg["output"])
    runcfg.dump_ini(cfg, out / CONFIG_NAME)
    log.info("training %d parameters on %d samples", count_parameters(build_model(net_cfg, cfg["seed"])),
             len(train))
    result = train_loop(train, net_cfg, loss_cfg, train_cfg, val=val, run_dir=out, resume=resume,
                        extra_meta={"mcer_scales": list(mcer_cfg.scales)})
    if result.log:
        last = result.log[-1]
        print(f"epoch {last['epoch']} val_psnr {last['val_psnr']:.4f} val_ssim {last['val_ssim']:.4f}")
    return out


def _prediction_rows(manifest, pred_dir, channels):
    root, entries = read_manifest(manifest)
    pairs = []
    for e in entries:
        target = read_png(root / e["hr"])
        pred = read_png(_existing(Path(pred_dir) / f"{e['id']}.png", "prediction"))
        if channels is not None:
            target, pred = match_channels(target, channels), match_channels(pred, channels)
        if pred.shape != target.shape:
            raise DimensionError(f"{e['id']}: prediction {pred.shape} vs target {target.shape}")
        pairs.append((e["id"], pred, target))
    return score_rows(pairs)


def cmd_eval(cfg):
    _require(cfg, "manifest", "output")
    manifest = _manifest_file(cfg["manifest"])
    if (cfg["checkpoint"] is None) == (cfg["predictions"] is None):
        raise ConfigError("eval needs exactly one of --checkpoint or --predictions")
    if cfg["checkpoint"]:
        model, meta = load_model(_existing(cfg["checkpoint"], "checkpoint"))
        examples = _examples(manifest, _scales_from_meta(meta, model.cfg), model.cfg)
        out = _fresh_dir(cfg["output"])
        runcfg.dump_ini(cfg, out / CONFIG_NAME)
        res = evaluate_model(model, examples, out / "metrics.csv")
    else:
        rows = _prediction_rows(manifest, _existing(cfg["predictions"], "prediction directory"),
                                cfg["in_channels"])
        out = _fresh_dir(cfg["output"])
        runcfg.dump_ini(cfg, out / CONFIG_NAME)
        write_csv(out / "metrics.csv", EVAL_FIELDS, rows)
        res = summarize(rows)
    print(f"samples {res['count']} psnr {res['psnr']:.4f} ssim {res['ssim']:.4f}")
    return out


# --- infer --------------------------------------------------------------------

def cmd_infer(cfg):
    _require(cfg, "checkpoint", "blurry", "events", "output")
    ckpt = _existing(cfg["checkpoint"], "checkpoint")
    blurry_path = _existing(cfg["blurry"], "blurry image")
    events_path = _existing(cfg["events"], "event file")
    sidecar_path = _existing(cfg["sidecar"] or Path(events_path).with_suffix(".json"), "sidecar")
    side = json.loads(sidecar_path.read_text())
    model, meta = load_model(ckpt)
    blurry = read_png(blurry_path)
    events = read_events(events_path, log_eps=side.get("log_eps", cfg["log_eps"]))
    exposure = TimeInterval(side["exposure_start"], side["exposure_end"])
    events.interval = exposure
    if blurry.shape[1:] != (events.height, events.width):
        raise DimensionError(f"blurry image {blurry.shape[1:]} vs event sensor {(events.height, events.width)}")
    if blurry.shape[0] != model.cfg.in_channels:
        if blurry.shape[0] == 3 and model.cfg.in_channels == 1:
            blurry = match_channels(blurry, 1)
        else:
            raise DimensionError(f"blurry image has {blurry.shape[0]} channels, model expects "
                                 f"{model.cfg.in_channels}")
    mcer = encode_mcer(events, exposure, _scales_from_meta(meta, model.cfg)).network_input()
    out = _fresh_dir(cfg["output"])
    runcfg.dump_ini(cfg, out / CONFIG_NAME)
    restored = predict(model, blurry.astype(np.float32), mcer)
    write_png(out / "restored.png", restored)
    print(f"wrote {out / 'restored.png'} ({restored.shape[2]}x{restored.shape[1]})")
    return out


def cmd_params(cfg):
    net = runcfg.network_config(cfg)
    n = count_parameters(build_model(net, cfg["seed"]))
    print(f"{n} parameters ({n / 1e6:.2f}M, preset {cfg['preset']}, embed_dim {net.embed_dim}, scale {net.scale})")
    return n


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "eval": cmd_eval, "infer": cmd_infer,
            "params": cmd_params}


# --- argument parsing ---------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with a [run] section")
    common.add_argument("--no-mcer", dest="use_mcer", action="store_const", const=False,
                        help="replace the multi-scale event representation by a single window")
    common.add_argument("--no-scma", dest="use_scma", action="store_const", const=False,
                        help="fuse modalities with a convolution instead of cross attention")
    common.add_argument("--no-irg", dest="use_irg", action="store_const", const=False,
                        help="replace the Swin residual group by convolutions")
    common.add_argument("-v", "--verbose", action="store_true")
    for key, spec in runcfg.SCHEMA.items():
        if key.startswith("use_"):
            continue
        common.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="VALUE", help=spec.help)
    parser = argparse.ArgumentParser(prog="ebsr", description="Event-guided blurry image super-resolution.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"simulate": "frame sequences -> blurry LR images, events and HR targets",
             "train": "train a network on a simulated dataset",
             "eval": "score a checkpoint (or prediction PNGs) on a dataset",
             "infer": "restore one blurry image with its events",
             "params": "print the parameter count of the configured network"}
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = runcfg.read_ini(_existing(args.config, "config file")) if args.config else {}
        overrides = {k: v for k, v in vars(args).items() if k in runcfg.SCHEMA and v is not None}
        cfg = runcfg.resolve(file_values, overrides)
        torch.set_num_threads(cfg["jobs"])
        torch.manual_seed(cfg["seed"])
        COMMANDS[args.command](cfg)
    except (ConfigError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
