"""8-bit PNG read/write for (C, H, W) images in [0, 1]."""

import numpy as np
from PIL import Image

from .errors import DimensionError


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1)


def to_uint8(img) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path, img):
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[None]
    if img.shape[0] == 1:
        Image.fromarray(to_uint8(img[0])).save(path, format="PNG")
    elif img.shape[0] == 3:
        Image.fromarray(to_uint8(img.transpose(1, 2, 0))).save(path, format="PNG")
    else:
        raise DimensionError(f"PNG needs 1 or 3 channels, got {img.shape[0]}")
