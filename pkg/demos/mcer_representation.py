"""
Multi-scale event representation
================================

Events inside windows of decreasing width around the exposure midpoint are
counted per polarity and summarized by the time of the latest event.
"""

import numpy as np

from ebsr.data import synthetic_samples
from ebsr.mcer import MCERConfig, encode_mcer

sample = synthetic_samples(1, 64, 2, seed=1)[0]
cfg = MCERConfig(scales=(1.0, 0.5, 0.25))
mcer = encode_mcer(sample.events, sample.exposure, cfg)
print("tensor:", mcer.data.shape, "midpoint f =", mcer.f)

# narrower windows see a subset of the events
counts = mcer.count_channels().reshape(len(cfg.scales), 2, *mcer.data.shape[1:])
for r, c in zip(cfg.scales, counts):
    print(f"window {r:4.2f} x exposure: {int(c[0].sum()):6d} positive {int(c[1].sum()):6d} negative")

# timesurfaces lie in [0, 1]; zero marks pixels without events in the window
ts = mcer.timesurface_channels()
print("timesurface range", ts.min(), ts.max(), "active fraction", np.mean(ts > 0).round(3))

# the network sees counts divided by 10 and clipped at 1
x = mcer.network_input()
print("network input", x.dtype, x.shape, "max", x.max())
