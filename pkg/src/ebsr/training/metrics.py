"""PSNR and SSIM on [0, 1] images."""

import numpy as np
from scipy.signal import convolve2d

from ..errors import DimensionError

PSNR_CAP = 100.0


def _as_chw(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[None]
    if img.ndim != 3:
        raise DimensionError(f"expected (C, H, W) or (H, W), got {img.shape}")
    return img


def psnr(a, b, cap=PSNR_CAP):
    """10 log10(1 / MSE) with peak 1.0; identical inputs return ``cap``."""
    a, b = _as_chw(a), _as_chw(b)
    if a.shape != b.shape:
        raise DimensionError(f"psnr shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return float(cap)
    return float(min(cap, 10.0 * np.log10(1.0 / mse)))


def gaussian_window(size=11, sigma=1.5):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_plane(x, y, window, c1, c2):
    def filt(z):
        return convolve2d(z, window, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    sxx = filt(x * x) - mu_x ** 2
    syy = filt(y * y) - mu_y ** 2
    sxy = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    return np.mean(num / den)


def ssim(a, b, window_size=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Mean Gaussian-windowed SSIM, averaged over channels.

    Only windows fully inside the image contribute.
    """
    a, b = _as_chw(a), _as_chw(b)
    if a.shape != b.shape:
        raise DimensionError(f"ssim shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape[1:]) < window_size:
        raise DimensionError(f"image {a.shape[1:]} smaller than the {window_size}px SSIM window")
    if np.array_equal(a, b):
        return 1.0
    win = gaussian_window(window_size, sigma)
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    return float(np.mean([_ssim_plane(x, y, win, c1, c2) for x, y in zip(a, b)]))
