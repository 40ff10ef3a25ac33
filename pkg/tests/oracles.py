"""Independent reference implementations used only by the tests."""

import math

import numpy as np


def brute_force_events(log_frames, timestamps, c):
    """Per-pixel scalar walk over each linear segment, one crossing at a time.

    Returns a list of (t, x, y, p) tuples sorted by (t, y, x, p).
    """
    m, h, w = log_frames.shape
    out = []
    for y in range(h):
        for x in range(w):
            start = float(log_frames[0, y, x])
            count = 0
            for k in range(m - 1):
                a = float(log_frames[k, y, x])
                b = float(log_frames[k + 1, y, x])
                t0, t1 = float(timestamps[k]), float(timestamps[k + 1])
                if b > a:
                    while start + (count + 1) * c <= b:
                        count += 1
                        level = start + count * c
                        out.append((t0 + (t1 - t0) * (level - a) / (b - a), x, y, 1))
                elif b < a:
                    while start + (count - 1) * c >= b:
                        count -= 1
                        level = start + count * c
                        out.append((t0 + (t1 - t0) * (level - a) / (b - a), x, y, -1))
    out.sort(key=lambda e: (e[0], e[2], e[1], e[3]))
    return out


def scalar_softmax(logits):
    mx = max(logits)
    ex = [math.exp(v - mx) for v in logits]
    s = sum(ex)
    return [v / s for v in ex]


def direct_mcer(events, f, dt, exposure, width, height):
    """Count map and timesurface for one window by looping over events in Python."""
    counts = np.zeros((2, height, width))
    last = {}
    lo, hi = f - dt / 2, f + dt / 2
    for t, x, y, p in zip(events.t, events.x, events.y, events.p):
        if not (lo <= t <= hi and exposure.start <= t <= exposure.end):
            continue
        ch = 0 if p > 0 else 1
        counts[ch, y, x] += 1
        key = (ch, y, x)
        last[key] = max(last.get(key, -np.inf), t)
    ts = np.zeros((2, height, width))
    for (ch, y, x), t in last.items():
        ts[ch, y, x] = (t - lo) / dt
    return counts, ts


def central_difference(fn, tensor, index, h=1e-6):
    """d fn / d tensor[index] by a symmetric difference; ``tensor`` is modified and restored."""
    import torch

    with torch.no_grad():
        orig = tensor[index].item()
        tensor[index] = orig + h
        fp = fn().item()
        tensor[index] = orig - h
        fm = fn().item()
        tensor[index] = orig
    return (fp - fm) / (2 * h)
