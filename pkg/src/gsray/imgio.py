"""Image file output: 8-bit sRGB PNG and 32-bit linear PFM."""

from __future__ import annotations

import numpy as np
from PIL import Image


def linear_to_srgb(img: np.ndarray) -> np.ndarray:
    x = np.clip(img, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1.0 / 2.4) - 0.055)


def write_png(path, img: np.ndarray):
    """Write a linear (H, W, 3) float image as 8-bit sRGB PNG."""
    srgb = np.round(linear_to_srgb(img) * 255.0).astype(np.uint8)
    Image.fromarray(srgb, mode="RGB").save(path)


def write_pfm(path, img: np.ndarray):
    """Write a (H, W, 3) float image as little-endian 32-bit PFM."""
    img = np.asarray(img, dtype=np.float32)
    h, w, _ = img.shape
    with open(path, "wb") as f:
        f.write(b"PF\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")  # negative scale = little endian
        f.write(np.flipud(img).astype("<f4").tobytes())  # PFM rows bottom-up


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header != b"PF":
            raise ValueError(f"not a color PFM file: {header!r}")
        w, h = map(int, f.readline().split())
        scale = float(f.readline())
        data = np.frombuffer(f.read(), dtype="<f4" if scale < 0 else ">f4")
    img = data.reshape(h, w, 3).astype(np.float64)
    return np.flipud(img).copy()
