"""Multi-scale center-surround event representation.

Nested temporal windows share one center, the exposure midpoint ``f``. Every
window is quantized into per-polarity count maps and timesurfaces, and the
windows are stacked along the channel axis, widest first.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, FormatError
from .event_sim import EventStream, TimeInterval

DEFAULT_SCALES = (1.0, 0.5, 0.25)
COUNT_NORMALIZER = 10.0


@dataclass(frozen=True)
class MCERConfig:
    scales: tuple = DEFAULT_SCALES
    include_counts: bool = True
    include_timesurface: bool = True

    def __post_init__(self):
        scales = tuple(float(s) for s in self.scales)
        object.__setattr__(self, "scales", scales)
        if not scales:
            raise ConfigError("MCER needs at least one temporal scale")
        if scales[0] != 1.0:
            raise ConfigError("the first MCER scale must be 1.0 (the whole exposure)")
        if any(not 0.0 < s <= 1.0 for s in scales):
            raise ConfigError(f"scales must lie in (0, 1], got {scales}")
        if any(b >= a for a, b in zip(scales, scales[1:])):
            raise ConfigError(f"scales must be strictly decreasing, got {scales}")
        if not (self.include_counts or self.include_timesurface):
            raise ConfigError("enable at least one of counts / timesurface")

    @property
    def channels_per_scale(self) -> int:
        return 2 * int(self.include_counts) + 2 * int(self.include_timesurface)

    @property
    def num_channels(self) -> int:
        return len(self.scales) * self.channels_per_scale


@dataclass
class MCERTensor:
    data: np.ndarray
    exposure: TimeInterval
    config: MCERConfig = field(default_factory=MCERConfig)

    @property
    def f(self) -> float:
        return self.exposure.midpoint

    @property
    def shape(self):
        return self.data.shape

    def count_channels(self) -> np.ndarray:
        if not self.config.include_counts:
            return np.zeros((0,) + self.data.shape[1:])
        per = self.config.channels_per_scale
        idx = [k * per + i for k in range(len(self.config.scales)) for i in (0, 1)]
        return self.data[idx]

    def timesurface_channels(self) -> np.ndarray:
        if not self.config.include_timesurface:
            return np.zeros((0,) + self.data.shape[1:])
        per = self.config.channels_per_scale
        off = 2 if self.config.include_counts else 0
        idx = [k * per + off + i for k in range(len(self.config.scales)) for i in (0, 1)]
        return self.data[idx]

    def network_input(self, normalizer: float = COUNT_NORMALIZER) -> np.ndarray:
        """Float32 copy with counts scaled by ``1/normalizer`` and clamped at 1."""
        out = self.data.astype(np.float32)
        if self.config.include_counts:
            per = self.config.channels_per_scale
            for k in range(len(self.config.scales)):
                sl = slice(k * per, k * per + 2)
                out[sl] = np.minimum(out[sl] / normalizer, 1.0)
        return out


def window_events(events: EventStream, f: float, dt: float,
                  exposure: TimeInterval | None = None) -> EventStream:
    """Events with ``|f - t| <= dt / 2`` that also lie inside the exposure."""
    if not dt > 0:
        raise ValueError(f"window length must be positive, got {dt}")
    exposure = exposure or events.interval
    if exposure is not None and not exposure.contains(f):
        raise ValueError(f"window center {f} outside the exposure")
    t = events.t
    mask = np.abs(f - t) <= 0.5 * dt
    if exposure is not None:
        mask &= (t >= exposure.start) & (t <= exposure.end)
    return events.select(mask)


def count_map(window: EventStream) -> np.ndarray:
    """``(2, H, W)``: positive counts then negative counts."""
    out = np.zeros((2, window.height, window.width))
    ch = (window.p < 0).astype(np.intp)
    np.add.at(out, (ch, window.y.astype(np.intp), window.x.astype(np.intp)), 1.0)
    return out


def timesurface(window: EventStream, f: float, dt: float) -> np.ndarray:
    """``(2, H, W)`` normalized time of the latest event per pixel and polarity.

    A pixel with no event stays 0; otherwise the value is
    ``(t_last - (f - dt/2)) / dt``.
    """
    last = np.full((2, window.height, window.width), -np.inf)
    ch = (window.p < 0).astype(np.intp)
    np.maximum.at(last, (ch, window.y.astype(np.intp), window.x.astype(np.intp)), window.t)
    seen = np.isfinite(last)
    out = np.zeros_like(last)
    out[seen] = (last[seen] - (f - 0.5 * dt)) / dt
    return out


def encode_mcer(events: EventStream, exposure: TimeInterval,
                cfg: MCERConfig | None = None) -> MCERTensor:
    cfg = cfg or MCERConfig()
    f = exposure.midpoint
    planes = []
    for r in cfg.scales:
        dt = r * exposure.duration
        win = window_events(events, f, dt, exposure)
        if cfg.include_counts:
            planes.append(count_map(win))
        if cfg.include_timesurface:
            planes.append(timesurface(win, f, dt))
    return MCERTensor(np.concatenate(planes, axis=0), exposure, cfg)


_LEN = struct.Struct("<I")


def save_mcer(path, mcer: MCERTensor):
    """Length-prefixed JSON header followed by raw little-endian float32 data."""
    header = json.dumps({
        "shape": list(mcer.data.shape),
        "dtype": "<f4",
        "exposure": [mcer.exposure.start, mcer.exposure.end],
        "scales": list(mcer.config.scales),
        "include_counts": mcer.config.include_counts,
        "include_timesurface": mcer.config.include_timesurface,
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_LEN.pack(len(header)))
        fh.write(header)
        fh.write(mcer.data.astype("<f4").tobytes())


def load_mcer(path) -> MCERTensor:
    data = Path(path).read_bytes()
    if len(data) < _LEN.size:
        raise FormatError("truncated MCER header length", len(data))
    (n,) = _LEN.unpack_from(data)
    try:
        head = json.loads(data[_LEN.size:_LEN.size + n])
    except (ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"unreadable MCER header: {exc}", _LEN.size) from exc
    shape = tuple(head["shape"])
    expected = int(np.prod(shape)) * 4
    body = data[_LEN.size + n:]
    if len(body) != expected:
        raise FormatError(f"expected {expected} data bytes, found {len(body)}", _LEN.size + n)
    arr = np.frombuffer(body, dtype="<f4").reshape(shape).copy()
    cfg = MCERConfig(tuple(head["scales"]), head["include_counts"], head["include_timesurface"])
    if shape[0] != cfg.num_channels:
        raise DimensionError(f"{shape[0]} channels but config implies {cfg.num_channels}")
    return MCERTensor(arr, TimeInterval(*head["exposure"]), cfg)


def dump_mcer_png(path, mcer: MCERTensor, count_clip: float = COUNT_NORMALIZER):
    """Debug view: one 8-bit page per channel in an animated PNG."""
    from PIL import Image

    disp = mcer.data.astype(np.float64).copy()
    if mcer.config.include_counts:
        per = mcer.config.channels_per_scale
        for k in range(len(mcer.config.scales)):
            disp[k * per:k * per + 2] = np.clip(disp[k * per:k * per + 2] / count_clip, 0, 1)
    pages = [Image.fromarray(np.round(np.clip(ch, 0, 1) * 255).astype(np.uint8)) for ch in disp]
    pages[0].save(path, format="PNG", save_all=True, append_images=pages[1:])
