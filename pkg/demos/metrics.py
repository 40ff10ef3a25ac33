"""
Image quality metrics
=====================

PSNR with a 100 dB cap for identical images, and Gaussian-window SSIM averaged
over channels.
"""

import numpy as np

from ebsr.training.metrics import psnr, ssim

rng = np.random.default_rng(0)
img = rng.random((3, 48, 48))

print("identical:", psnr(img, img), ssim(img, img))
print("uniform offset of 16/255:", round(psnr(img * 0, img * 0 + 16 / 255), 4), "dB")

for sigma in (0.01, 0.05, 0.2):
    noisy = np.clip(img + rng.normal(0, sigma, img.shape), 0, 1)
    print(f"noise {sigma}: PSNR {psnr(img, noisy):6.2f} dB  SSIM {ssim(img, noisy):.4f}")
