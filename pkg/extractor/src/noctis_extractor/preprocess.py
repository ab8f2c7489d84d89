"""Crop preprocessing: background removal, square resize, patch validity.

Crops are masked, tightly cropped, resized with preserved aspect ratio
and padded to 224 x 224, which the 16 x 16 token grid divides into
14 x 14 pixel patch footprints.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

CROP_SIZE = 224
GRID = 16
PATCH_PIXELS = CROP_SIZE // GRID  # 14


def preprocess_crop(image: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return the 224 x 224 instance crop and its resampled mask.

    The background is zeroed outside the mask before cropping, the crop
    keeps its aspect ratio during resizing and is padded bottom/right to
    the square target.
    """
    image = np.asarray(image)
    mask = np.asarray(mask, dtype=bool)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("image must be H x W x 3")
    if mask.shape != image.shape[:2]:
        raise ValueError("mask size does not match image size")
    if not mask.any():
        raise ValueError("empty mask")

    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    y0, y1 = rows[0], rows[-1] + 1
    x0, x1 = cols[0], cols[-1] + 1

    cropped = np.where(mask[y0:y1, x0:x1, None], image[y0:y1, x0:x1], 0)
    crop_mask = mask[y0:y1, x0:x1]

    h, w = crop_mask.shape
    scale = CROP_SIZE / max(h, w)
    new_h = max(1, round(h * scale))
    new_w = max(1, round(w * scale))

    resized = np.asarray(
        Image.fromarray(cropped.astype(np.uint8)).resize((new_w, new_h), Image.BILINEAR)
    )
    resized_mask = np.asarray(
        Image.fromarray(crop_mask.astype(np.uint8) * 255).resize((new_w, new_h), Image.NEAREST)
    ).astype(bool)

    out = np.zeros((CROP_SIZE, CROP_SIZE, 3), dtype=np.uint8)
    out_mask = np.zeros((CROP_SIZE, CROP_SIZE), dtype=bool)
    out[:new_h, :new_w] = resized
    out_mask[:new_h, :new_w] = resized_mask
    return out, out_mask


def patch_validity(crop_mask: np.ndarray, coverage: float = 0.5) -> np.ndarray:
    """Grid of patches whose 14 x 14 footprint is sufficiently masked.

    A patch is valid when at least ``coverage`` of its pixels fall
    inside the instance mask; if no patch reaches the threshold the
    best-covered one is kept so every descriptor has a valid patch.
    """
    if not 0.0 <= coverage <= 1.0:
        raise ValueError("coverage must be in [0, 1]")
    if crop_mask.shape != (CROP_SIZE, CROP_SIZE):
        raise ValueError("crop mask must be 224 x 224")
    blocks = crop_mask.reshape(GRID, PATCH_PIXELS, GRID, PATCH_PIXELS)
    fractions = blocks.mean(axis=(1, 3))
    valid = fractions >= coverage
    if not valid.any():
        best = np.unravel_index(int(np.argmax(fractions)), fractions.shape)
        valid[best] = True
    return valid
