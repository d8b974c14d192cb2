"""Input validation helpers for image and box arguments."""

from __future__ import annotations

import numpy as np

from .boxes import BoundingBox


def as_gray_image(img) -> np.ndarray:
    """Coerce to a 2-D float64 array of normalized luminance in [0, 1].

    Accepts float arrays already in [0, 1] or 8-bit arrays (rescaled by 255).
    """
    a = np.asarray(img)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D gray image, got shape {a.shape}")
    if a.dtype == np.uint8:
        return a.astype(np.float64) / 255.0
    a = a.astype(np.float64, copy=False)
    if not np.all(np.isfinite(a)):
        raise ValueError("gray image contains non-finite values")
    if a.size and (a.min() < 0.0 or a.max() > 1.0):
        raise ValueError("gray image values must lie in [0, 1]")
    return a


def check_binary_image(img) -> np.ndarray:
    """Coerce to a 2-D uint8 array with values strictly in {0, 1}."""
    a = np.asarray(img)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D binary image, got shape {a.shape}")
    if a.dtype == bool:
        return a.astype(np.uint8)
    vals = np.unique(a)
    if not np.all(np.isin(vals, (0, 1))):
        raise ValueError(f"binary image must contain only 0/1, found values {vals[:5]}")
    return a.astype(np.uint8, copy=False)


def check_box(box) -> BoundingBox:
    if isinstance(box, BoundingBox):
        return box
    if isinstance(box, dict):
        return BoundingBox.from_dict(box)
    x, y, w, h = box
    return BoundingBox(int(x), int(y), int(w), int(h))


def crop(img: np.ndarray, box: BoundingBox) -> np.ndarray:
    h, w = img.shape[:2]
    if box.x < 0 or box.y < 0 or box.x2 > w or box.y2 > h:
        raise ValueError(f"crop box {box} exceeds image bounds {w}x{h}")
    return img[box.y:box.y2, box.x:box.x2]
