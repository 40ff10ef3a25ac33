"""Synthetic blur and event generation from sharp video.

Images are numpy arrays shaped ``(C, H, W)`` with values in ``[0, 1]``.
Events are stored in a structured array with fields ``t``, ``x``, ``y``, ``p``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError

EVENT_DTYPE = np.dtype([("t", "<f8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])

EVT_MAGIC = b"EVT1"
_HEADER = struct.Struct("<4sHHd")
_RECORD = struct.Struct("<dHHb")

DEFAULT_THRESHOLD = 0.2
DEFAULT_LOG_EPS = 1e-3
DEFAULT_FRAME_COUNT = 13

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class TimeInterval:
    start: float
    end: float

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError(f"interval end {self.end} must exceed start {self.start}")

    @property
    def duration(self) -> float:
        return self.end - self.start

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.start + self.end)

    def contains(self, t: float) -> bool:
        return self.start <= t <= self.end


@dataclass
class VideoSequence:
    """Sharp frames sampled over one exposure interval."""

    frames: list
    timestamps: list
    exposure: TimeInterval | None = None

    def __post_init__(self):
        self.frames = [as_image(f) for f in self.frames]
        self.timestamps = [float(t) for t in self.timestamps]
        if len(self.frames) < 2 or len(self.frames) != len(self.timestamps):
            raise ValueError("a sequence needs >= 2 frames and one timestamp per frame")
        shape = self.frames[0].shape
        if any(f.shape != shape for f in self.frames):
            raise DimensionError("all frames of a sequence must share one shape")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if self.exposure is None:
            self.exposure = TimeInterval(self.timestamps[0], self.timestamps[-1])
        elif (self.exposure.start, self.exposure.end) != (self.timestamps[0], self.timestamps[-1]):
            raise ValueError("exposure must span exactly the first to the last timestamp")
        for f in self.frames:
            if f.min() < 0.0 or f.max() > 1.0:
                raise ValueError("frame values must lie in [0, 1]")

    @property
    def shape(self):
        return self.frames[0].shape

    def stack(self) -> np.ndarray:
        return np.stack(self.frames)


@dataclass
class EventStream:
    """Events of one sensor, sorted by ``(t, y, x, p)``.

    ``interval`` is the time span the stream was recorded over. It is not part
    of the binary file layout and does not take part in equality.
    """

    records: np.ndarray
    width: int
    height: int
    c: float = DEFAULT_THRESHOLD
    log_eps: float = DEFAULT_LOG_EPS
    interval: TimeInterval | None = field(default=None, compare=False)

    def __post_init__(self):
        self.records = np.asarray(self.records, dtype=EVENT_DTYPE)
        if self.c <= 0:
            raise ValueError("event threshold c must be positive")

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            (self.width, self.height) == (other.width, other.height)
            and np.float64(self.c).tobytes() == np.float64(other.c).tobytes()
            and np.float64(self.log_eps).tobytes() == np.float64(other.log_eps).tobytes()
            and self.records.tobytes() == other.records.tobytes()
        )

    @property
    def t(self):
        return self.records["t"]

    @property
    def x(self):
        return self.records["x"]

    @property
    def y(self):
        return self.records["y"]

    @property
    def p(self):
        return self.records["p"]

    def select(self, mask) -> "EventStream":
        return EventStream(self.records[mask], self.width, self.height, self.c, self.log_eps, self.interval)

    def validate(self):
        r = self.records
        if len(r) == 0:
            return
        if np.any(r["x"] >= self.width) or np.any(r["y"] >= self.height):
            raise ValueError("event coordinates outside the sensor")
        if not np.all(np.isin(r["p"], (-1, 1))):
            raise ValueError("polarities must be +1 or -1")
        if not np.array_equal(sort_order(r), np.arange(len(r))):
            raise ValueError("events are not in canonical (t, y, x, p) order")


def as_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[None]
    if img.ndim != 3:
        raise DimensionError(f"expected a (C, H, W) image, got shape {img.shape}")
    return img


def sort_order(records: np.ndarray) -> np.ndarray:
    return np.lexsort((records["p"], records["x"], records["y"], records["t"]))


def make_stream(t, x, y, p, width, height, c=DEFAULT_THRESHOLD, log_eps=DEFAULT_LOG_EPS,
                interval=None) -> EventStream:
    """Build a canonically sorted stream from parallel arrays."""
    records = np.empty(len(t), dtype=EVENT_DTYPE)
    records["t"] = t
    records["x"] = x
    records["y"] = y
    records["p"] = p
    records = records[sort_order(records)]
    return EventStream(records, int(width), int(height), float(c), float(log_eps), interval)


def to_luminance(img) -> np.ndarray:
    """Collapse RGB to one BT.601 luma channel; single channel passes through."""
    img = as_image(img)
    if img.shape[0] == 1:
        return img
    if img.shape[0] != 3:
        raise DimensionError(f"luminance needs 1 or 3 channels, got {img.shape[0]}")
    return np.tensordot(LUMA_WEIGHTS, img, axes=1)[None]


def downsample(hr, scale: int) -> np.ndarray:
    """Area-average ``scale x scale`` blocks."""
    if int(scale) != scale or scale < 1:
        raise ValueError(f"scale must be a positive integer, got {scale}")
    hr = as_image(hr)
    c, h, w = hr.shape
    if h % scale or w % scale:
        raise DimensionError(f"image {h}x{w} is not divisible by scale {scale}")
    if scale == 1:
        return hr.copy()
    return hr.reshape(c, h // scale, scale, w // scale, scale).mean(axis=(2, 4))


def synthesize_blur(lr_frames) -> np.ndarray:
    """Mean of uniformly spaced latent frames over the exposure."""
    if len(lr_frames) == 0:
        raise ValueError("need at least one frame to synthesize blur")
    frames = [as_image(f) for f in lr_frames]
    if any(f.shape != frames[0].shape for f in frames):
        raise DimensionError("frames to blur must share one shape")
    stack = np.stack(frames)
    # offsets from the first frame keep static scenes bit-exact
    out = stack[0] + np.mean(stack - stack[0], axis=0)
    return np.clip(out, 0.0, 1.0)


def log_intensity(img, log_eps: float = DEFAULT_LOG_EPS) -> np.ndarray:
    return np.log(as_image(img) + log_eps)


def events_from_log_frames(log_frames, timestamps, c: float = DEFAULT_THRESHOLD):
    """Level-crossing events of a per-pixel piecewise-linear log signal.

    ``log_frames`` has shape ``(M, H, W)``. Each pixel keeps a reference level
    ``log_frames[0] + n * c``; an event fires whenever the signal reaches the
    next level above or below, and the reference moves to that level.

    Returns unsorted parallel arrays ``(t, x, y, p)``.
    """
    log_frames = np.asarray(log_frames, dtype=np.float64)
    ts = np.asarray(timestamps, dtype=np.float64)
    if log_frames.ndim != 3 or len(ts) != log_frames.shape[0]:
        raise DimensionError("log_frames must be (M, H, W) with one timestamp per frame")
    if c <= 0:
        raise ValueError("event threshold c must be positive")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("timestamps must be strictly increasing")

    m, h, w = log_frames.shape
    sig = log_frames.reshape(m, -1)
    base = sig[0]
    n = np.zeros(sig.shape[1], dtype=np.int64)
    pix = np.arange(sig.shape[1])
    out_t, out_pix, out_p = [], [], []

    for k in range(m - 1):
        a, b = sig[k], sig[k + 1]
        ta, tb = ts[k], ts[k + 1]
        slope = b - a
        for pol in (1, -1):
            moving = slope > 0 if pol > 0 else slope < 0
            if not moving.any():
                continue
            idx = pix[moving]
            bi, ni, b0 = b[idx], n[idx], base[idx]
            # crossings = largest j with level(n + pol*j) on the near side of b
            j = np.floor(pol * (bi - b0) / c).astype(np.int64) - pol * ni
            j = np.maximum(j, 0)
            for _ in range(2):
                over = pol * (b0 + (ni + pol * j) * c - bi) > 0
                j = np.where(over & (j > 0), j - 1, j)
                under = pol * (b0 + (ni + pol * (j + 1)) * c - bi) <= 0
                j = np.where(under, j + 1, j)
            for step in range(1, int(j.max(initial=0)) + 1):
                sel = j >= step
                q = idx[sel]
                level = base[q] + (n[q] + pol * step) * c
                out_t.append(ta + (level - a[q]) / slope[q] * (tb - ta))
                out_pix.append(q)
                out_p.append(np.full(len(q), pol, dtype=np.int8))
            n[idx] += pol * j

    if not out_t:
        empty = np.zeros(0)
        return empty, empty.astype(np.int64), empty.astype(np.int64), empty.astype(np.int8)
    t = np.concatenate(out_t)
    q = np.concatenate(out_pix)
    p = np.concatenate(out_p)
    return t, q % w, q // w, p


def simulate_events(seq: VideoSequence, c: float = DEFAULT_THRESHOLD,
                    log_eps: float = DEFAULT_LOG_EPS) -> EventStream:
    """Idealized event camera driven by the log intensity of ``seq``."""
    if c <= 0:
        raise ValueError("event threshold c must be positive")
    if log_eps <= 0:
        raise ValueError("log_eps must be positive")
    lum = np.stack([to_luminance(f)[0] for f in seq.frames])
    log_frames = np.log(lum + log_eps)
    t, x, y, p = events_from_log_frames(log_frames, seq.timestamps, c)
    _, h, w = lum.shape
    return make_stream(t, x, y, p, w, h, c, log_eps, seq.exposure)


def reconstruct_log_intensity(events: EventStream, initial, t: float,
                              interval: TimeInterval | None = None) -> np.ndarray:
    """Integrate polarities up to ``t`` on top of the initial log frame.

    Returns a ``(1, H, W)`` log-domain image.
    """
    interval = interval or events.interval
    if interval is not None and not interval.contains(t):
        raise ValueError(f"t={t} lies outside [{interval.start}, {interval.end}]")
    initial = to_luminance(initial)
    if initial.shape[1:] != (events.height, events.width):
        raise DimensionError(
            f"initial frame {initial.shape[1:]} does not match sensor {(events.height, events.width)}"
        )
    r = events.records[events.records["t"] <= t]
    net = np.zeros((events.height, events.width), dtype=np.int64)
    np.add.at(net, (r["y"].astype(np.intp), r["x"].astype(np.intp)), r["p"].astype(np.int64))
    return np.log(initial + events.log_eps) + net[None] * events.c


def write_events(path, events: EventStream):
    """Write the little-endian ``EVT1`` layout: header then fixed 13-byte records."""
    header = _HEADER.pack(EVT_MAGIC, events.width, events.height, events.c)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(events.records.astype(EVENT_DTYPE).tobytes())


def read_events(path, log_eps: float = DEFAULT_LOG_EPS) -> EventStream:
    """Read an ``EVT1`` file.

    ``log_eps`` is not stored in the file; it travels in the sample sidecar.
    """
    data = Path(path).read_bytes()
    if len(data) < len(EVT_MAGIC) or data[: len(EVT_MAGIC)] != EVT_MAGIC:
        raise FormatError("bad magic, expected b'EVT1'", 0)
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", len(data))
    _, width, height, c = _HEADER.unpack_from(data)
    body = len(data) - _HEADER.size
    if body % _RECORD.size:
        whole = body // _RECORD.size
        raise FormatError("truncated event record", _HEADER.size + whole * _RECORD.size)
    if not c > 0:
        raise FormatError(f"non-positive threshold {c}", 8)
    records = np.frombuffer(data, dtype=EVENT_DTYPE, offset=_HEADER.size).copy()
    bad = np.flatnonzero(~np.isin(records["p"], (-1, 1)))
    if len(bad):
        raise FormatError("polarity must be +1 or -1", _HEADER.size + int(bad[0]) * _RECORD.size + 12)
    bad = np.flatnonzero((records["x"] >= width) | (records["y"] >= height))
    if len(bad):
        raise FormatError("event outside the sensor", _HEADER.size + int(bad[0]) * _RECORD.size + 8)
    return EventStream(records, width, height, c, log_eps)
