"""
The restoration network
=======================

Image and event encoders, cross-modal attention fusion, a residual group of
dense Swin blocks and a pixel-shuffle decoder on top of a bilinear skip.
"""

import torch

from ebsr.network.model import NetworkConfig, bilinear_upsample, build_model, count_parameters, toy_config

full = build_model(NetworkConfig())
print("full configuration:", count_parameters(full), "parameters")

toy = build_model(toy_config())
print("toy configuration:", count_parameters(toy), "parameters")

# closing layers start at zero, so an untrained model returns the bilinear upsampling
blurry = torch.rand(1, 1, 24, 40)
events = torch.rand(1, 12, 24, 40)
out = toy(blurry, events)
print("output", tuple(out.shape), "equals bilinear:", torch.equal(out, bilinear_upsample(blurry, 2)))

# the ablated variants swap modules for plain convolutions
for name, over in [("no cross attention", {"use_scma": False}), ("no Swin group", {"use_irg": False})]:
    print(f"{name}: {count_parameters(build_model(toy_config(**over)))} parameters")
