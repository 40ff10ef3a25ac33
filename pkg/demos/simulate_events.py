"""
From sharp frames to a blurry image and an event stream
=======================================================

A synthetic scene is rendered at high resolution, averaged into one blurry
low-resolution exposure, and turned into events by thresholding the log
intensity of each pixel.
"""

import numpy as np

from ebsr.data import synthetic_sequence
from ebsr.event_sim import (VideoSequence, downsample, reconstruct_log_intensity, simulate_events,
                            synthesize_blur)

rng = np.random.default_rng(0)
seq = synthetic_sequence(rng, 64, 64, num_frames=13)
print("HR frames:", len(seq.frames), "x", seq.shape, "over", seq.exposure)

# the sensor sees the scene at the low resolution
lr_frames = [downsample(f, 2) for f in seq.frames]
blurry = synthesize_blur(lr_frames)
print("blurry LR image:", blurry.shape, "range", blurry.min().round(3), blurry.max().round(3))

# one event per threshold crossing, timestamps interpolated between frames
events = simulate_events(VideoSequence(lr_frames, seq.timestamps), c=0.2)
print(len(events), "events,", int((events.p > 0).sum()), "positive")
print("first five:", events.records[:5])

# integrating the events recovers the log intensity to within one threshold
for t, frame in zip(seq.timestamps[::4], lr_frames[::4]):
    err = np.abs(reconstruct_log_intensity(events, lr_frames[0], t) - np.log(frame + events.log_eps))
    print(f"t={t:.3f}  max reconstruction error {err.max():.3f} (threshold 0.2)")
