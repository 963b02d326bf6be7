"""Deterministic image emission: PPM (P6), PNG, and grayscale maps."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Clip a float image in [0, 1] to 8-bit."""
    return (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def chw_to_hwc(image: np.ndarray) -> np.ndarray:
    return np.transpose(image, (1, 2, 0))


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    """rgb: [H, W, 3] uint8; binary P6, 8-bit."""
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(rgb).tobytes())


def write_png(path: str | Path, rgb: np.ndarray) -> None:
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def write_gray_png(path: str | Path, gray: np.ndarray) -> None:
    Image.fromarray(gray, mode="L").save(path, format="PNG")


def tile_grid(images: list[np.ndarray], rows: int, cols: int,
              pad: int = 2) -> np.ndarray:
    """Assemble [H, W, 3] uint8 tiles into a padded grid sheet."""
    h, w, _ = images[0].shape
    sheet = np.full((rows * (h + pad) + pad, cols * (w + pad) + pad, 3),
                    255, dtype=np.uint8)
    for idx, img in enumerate(images):
        r, c = divmod(idx, cols)
        top = pad + r * (h + pad)
        left = pad + c * (w + pad)
        sheet[top: top + h, left: left + w] = img
    return sheet
