"""Paired (sharp HR, blurry LR, events) samples: synthesis, storage and batching."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .event_sim import (DEFAULT_LOG_EPS, DEFAULT_THRESHOLD, EventStream, TimeInterval, VideoSequence, downsample,
                        read_events, simulate_events, synthesize_blur, to_luminance, write_events)
from .errors import ConfigError, DimensionError
from .imageio import read_png, write_png
from .mcer import MCERConfig, encode_mcer

MANIFEST_NAME = "manifest.json"


@dataclass
class SimulatedSample:
    sharp: np.ndarray        # (C, sH, sW) latent sharp frame at the exposure midpoint
    blurry: np.ndarray       # (C, H, W)
    events: EventStream
    exposure: TimeInterval
    scale: int
    frame_count: int
    name: str = "sample"

    def sidecar(self) -> dict:
        return {
            "exposure_start": self.exposure.start,
            "exposure_end": self.exposure.end,
            "scale": self.scale,
            "c": self.events.c,
            "log_eps": self.events.log_eps,
            "frame_count": self.frame_count,
        }


def midpoint_frame(frames) -> np.ndarray:
    m = len(frames)
    if m % 2:
        return frames[m // 2]
    return 0.5 * (frames[m // 2 - 1] + frames[m // 2])


def simulate_sample(seq: VideoSequence, scale: int, c: float = DEFAULT_THRESHOLD,
                    log_eps: float = DEFAULT_LOG_EPS, name: str = "sample") -> SimulatedSample:
    """Blur and events from the downsampled frames; the HR target is the midpoint frame."""
    lr_frames = [downsample(f, scale) for f in seq.frames]
    lr_seq = VideoSequence(lr_frames, seq.timestamps, seq.exposure)
    return SimulatedSample(
        sharp=midpoint_frame(seq.frames),
        blurry=synthesize_blur(lr_frames),
        events=simulate_events(lr_seq, c, log_eps),
        exposure=seq.exposure,
        scale=scale,
        frame_count=len(seq.frames),
        name=name,
    )


def render_scene(rng: np.random.Generator, height: int, width: int, num_frames: int = 13,
                 channels: int = 1, num_shapes: int = 4, max_shift: float = 0.3):
    """Soft-edged striped discs drifting over a smooth background.

    Returns ``num_frames`` HR frames (C, H, W) in [0.05, 0.95] evenly spaced
    over one exposure; each shape moves up to ``max_shift * min(H, W)`` pixels.
    """
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    size = min(height, width)
    base = rng.uniform(0.2, 0.8, channels)
    grad = rng.uniform(-0.3, 0.3, (channels, 2))
    k = rng.uniform(0.5, 2.0, 2) * 2 * np.pi / size
    phase = rng.uniform(0, 2 * np.pi)
    bg = (base[:, None, None]
          + grad[:, 0, None, None] * (yy / height - 0.5)
          + grad[:, 1, None, None] * (xx / width - 0.5)
          + 0.08 * np.sin(k[0] * yy + k[1] * xx + phase))
    shapes = []
    for _ in range(num_shapes):
        shapes.append(dict(
            center=rng.uniform(0.15, 0.85, 2) * (height, width),
            velocity=rng.uniform(-1, 1, 2) * max_shift * size,
            radius=rng.uniform(0.08, 0.22) * size,
            color=rng.uniform(0.0, 1.0, channels),
            stripe=2 * np.pi / rng.uniform(3.0, 8.0),
            angle=rng.uniform(0, np.pi),
        ))
    frames = []
    for tau in np.linspace(-0.5, 0.5, num_frames):
        img = bg.copy()
        for s in shapes:
            cy, cx = s["center"] + tau * s["velocity"]
            dist = np.hypot(yy - cy, xx - cx)
            alpha = 1.0 / (1.0 + np.exp(-(s["radius"] - dist) / 0.7))
            u = (yy - cy) * np.cos(s["angle"]) + (xx - cx) * np.sin(s["angle"])
            tex = s["color"][:, None, None] * (0.7 + 0.3 * np.sin(s["stripe"] * u))
            img = img * (1 - alpha) + tex * alpha
        frames.append(0.05 + 0.9 * np.clip(img, 0.0, 1.0))
    return frames


def synthetic_sequence(rng, height, width, num_frames=13, channels=1, exposure=(0.0, 1.0), **kw) -> VideoSequence:
    frames = render_scene(rng, height, width, num_frames, channels, **kw)
    ts = np.linspace(exposure[0], exposure[1], num_frames)
    return VideoSequence(frames, ts, TimeInterval(*exposure))


def synthetic_samples(count, hr_size, scale, seed=0, num_frames=13, channels=1,
                      c=DEFAULT_THRESHOLD, log_eps=DEFAULT_LOG_EPS, **kw):
    """``count`` simulated samples of ``hr_size`` (int or (H, W)) from one seed."""
    h, w = (hr_size, hr_size) if np.isscalar(hr_size) else hr_size
    rng = np.random.default_rng(seed)
    return [simulate_sample(synthetic_sequence(rng, h, w, num_frames, channels, **kw), scale, c, log_eps,
                            name=f"sample_{i:04d}")
            for i in range(count)]


# --- on-disk layout -------------------------------------------------------

def save_sample(directory, sample: SimulatedSample) -> dict:
    """Write ``<name>_hr.png``, ``<name>_blurry.png``, ``<name>.evt1``, ``<name>.json``."""
    d = Path(directory)
    entry = {
        "id": sample.name,
        "hr": f"{sample.name}_hr.png",
        "blurry": f"{sample.name}_blurry.png",
        "events": f"{sample.name}.evt1",
        "sidecar": f"{sample.name}.json",
    }
    write_png(d / entry["hr"], sample.sharp)
    write_png(d / entry["blurry"], sample.blurry)
    write_events(d / entry["events"], sample.events)
    (d / entry["sidecar"]).write_text(json.dumps(sample.sidecar(), indent=2, sort_keys=True) + "\n")
    return entry


def write_manifest(directory, entries):
    path = Path(directory) / MANIFEST_NAME
    path.write_text(json.dumps({"samples": list(entries)}, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path):
    """Return ``(root_dir, entries)``; ``path`` is a manifest file or its directory."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    data = json.loads(path.read_text())
    entries = data.get("samples", [])
    for e in entries:
        missing = {"id", "hr", "blurry", "events", "sidecar"} - set(e)
        if missing:
            raise ConfigError(f"manifest entry {e.get('id')} lacks {sorted(missing)}")
    return path.parent, entries


def load_sample(root, entry) -> SimulatedSample:
    root = Path(root)
    side = json.loads((root / entry["sidecar"]).read_text())
    events = read_events(root / entry["events"], log_eps=side["log_eps"])
    exposure = TimeInterval(side["exposure_start"], side["exposure_end"])
    events.interval = exposure
    sample = SimulatedSample(
        sharp=read_png(root / entry["hr"]),
        blurry=read_png(root / entry["blurry"]),
        events=events,
        exposure=exposure,
        scale=int(side["scale"]),
        frame_count=int(side["frame_count"]),
        name=entry["id"],
    )
    if sample.blurry.shape[1:] != (events.height, events.width):
        raise DimensionError(f"{entry['id']}: blurry {sample.blurry.shape[1:]} vs sensor "
                             f"{(events.height, events.width)}")
    return sample


def load_dataset(manifest_path):
    root, entries = read_manifest(manifest_path)
    return [load_sample(root, e) for e in entries]


# --- network-ready arrays -------------------------------------------------

@dataclass
class TrainingExample:
    blurry: np.ndarray   # (C, h, w) float32
    events: np.ndarray   # (K, h, w) float32, normalized MCER
    sharp: np.ndarray    # (C, sh, sw) float32
    name: str


def match_channels(img, channels):
    if img.shape[0] == channels:
        return img
    if channels == 1:
        return to_luminance(img)
    if img.shape[0] == 1:
        return np.repeat(img, channels, axis=0)
    raise DimensionError(f"cannot map {img.shape[0]} channels to {channels}")


def prepare_example(sample: SimulatedSample, mcer_cfg: MCERConfig | None = None,
                    in_channels: int | None = None) -> TrainingExample:
    channels = in_channels or sample.blurry.shape[0]
    mcer = encode_mcer(sample.events, sample.exposure, mcer_cfg or MCERConfig())
    return TrainingExample(
        blurry=match_channels(sample.blurry, channels).astype(np.float32),
        events=mcer.network_input(),
        sharp=match_channels(sample.sharp, channels).astype(np.float32),
        name=sample.name,
    )


def crop_example(ex: TrainingExample, scale: int, top: int, left: int, lr_size: int) -> TrainingExample:
    hr = slice(top * scale, (top + lr_size) * scale), slice(left * scale, (left + lr_size) * scale)
    lr = slice(top, top + lr_size), slice(left, left + lr_size)
    return TrainingExample(ex.blurry[:, lr[0], lr[1]], ex.events[:, lr[0], lr[1]],
                           ex.sharp[:, hr[0], hr[1]], f"{ex.name}@{top},{left}")


def sample_batch(examples, indices, scale, rng: np.random.Generator, crop=None, flip=True):
    """Stack a batch; with ``crop`` take a random HR crop of that size from each example."""
    bl, ev, sh, names = [], [], [], []
    for i in indices:
        ex = examples[i]
        if crop is not None:
            if crop % scale:
                raise ConfigError(f"crop {crop} must be divisible by scale {scale}")
            lr_size = crop // scale
            h, w = ex.blurry.shape[1:]
            if lr_size > min(h, w):
                raise DimensionError(f"crop {crop} larger than example {ex.name}")
            top = int(rng.integers(0, h - lr_size + 1))
            left = int(rng.integers(0, w - lr_size + 1))
            ex = crop_example(ex, scale, top, left, lr_size)
        b, e, s = ex.blurry, ex.events, ex.sharp
        if flip and rng.random() < 0.5:
            b, e, s = b[..., ::-1], e[..., ::-1], s[..., ::-1]
        bl.append(b)
        ev.append(e)
        sh.append(s)
        names.append(ex.name)
    return (np.ascontiguousarray(np.stack(bl)), np.ascontiguousarray(np.stack(ev)),
            np.ascontiguousarray(np.stack(sh)), names)
