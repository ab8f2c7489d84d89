"""Binary mask run-length encoding and IoU arithmetic.

Masks are encoded column-major (Fortran order) as alternating run
lengths, zero-runs first; a mask whose first pixel is foreground gets a
leading zero count.  All counts after the first must be positive, so
every mask has exactly one canonical encoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class RleMask:
    """Run-length encoded binary mask of shape ``size`` = (H, W)."""

    size: tuple[int, int]
    counts: list[int]

    def area(self) -> int:
        """Number of foreground pixels (sum of the one-runs)."""
        return int(sum(self.counts[1::2]))


def validate_rle(rle: RleMask) -> None:
    """Raise ValueError unless ``rle`` is a canonical encoding."""
    h, w = rle.size
    if h < 0 or w < 0:
        raise ValueError("negative mask size")
    counts = rle.counts
    if any(c < 0 for c in counts):
        raise ValueError("invalid RLE counts: negative run")
    if any(c == 0 for c in counts[1:]):
        raise ValueError("invalid RLE counts: zero-length run after the first")
    if sum(counts) != h * w:
        raise ValueError("RLE length mismatch")


def rle_encode(mask: np.ndarray) -> RleMask:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError("mask must be 2-D")
    h, w = mask.shape
    flat = mask.astype(bool).reshape(-1, order="F")
    if flat.size == 0:
        return RleMask(size=(h, w), counts=[])
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = [int(c) for c in np.diff(bounds)]
    if flat[0]:
        counts = [0] + counts
    return RleMask(size=(h, w), counts=counts)


def rle_decode(rle: RleMask) -> np.ndarray:
    validate_rle(rle)
    h, w = rle.size
    values = np.zeros(len(rle.counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, rle.counts)
    return flat.reshape((h, w), order="F")


def mask_iou(a: RleMask, b: RleMask) -> float:
    """Intersection over union of two same-sized masks.

    Raises ValueError when both masks are empty (the ratio is undefined)
    or when the sizes differ.
    """
    if tuple(a.size) != tuple(b.size):
        raise ValueError("mask size mismatch")
    fa = rle_decode(a)
    fb = rle_decode(b)
    area_a = int(fa.sum())
    area_b = int(fb.sum())
    if area_a == 0 and area_b == 0:
        raise ValueError("undefined IoU: both masks empty")
    inter = int(np.logical_and(fa, fb).sum())
    return inter / (area_a + area_b - inter)
