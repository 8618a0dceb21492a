"""Local binary pattern code images and feature-channel fusion.

The LBP variant is the basic 3x3 one: each interior pixel is compared with
its 8 neighbors clockwise from the top-left corner, bit i of the code is set
when neighbor i >= center, and codes are rescaled to [0, 1] so the result can
feed the same patch pipeline as raw intensities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, ValidationError
from .pooling import FeatureVector

LbpImage = np.ndarray

# clockwise from top-left; bit i gets weight 2**i
_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def lbp_code_image(img: np.ndarray) -> LbpImage:
    """8-bit neighbor-comparison codes for every interior pixel, over 255."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if h < 3 or w < 3:
        raise DimensionError(f"LBP needs at least a 3x3 image, got {h}x{w}")
    center = img[1 : h - 1, 1 : w - 1]
    code = np.zeros((h - 2, w - 2), dtype=np.uint16)
    for bit, (dr, dc) in enumerate(_OFFSETS):
        neighbor = img[1 + dr : h - 1 + dr, 1 + dc : w - 1 + dc]
        code |= (neighbor >= center).astype(np.uint16) << bit
    return code.astype(np.float64) / 255.0


@dataclass
class FusedVector:
    """Concatenated feature channels with the start offset of each channel."""

    values: np.ndarray
    offsets: np.ndarray  # channel starts plus total length; len = channels + 1

    def split(self) -> list[np.ndarray]:
        return [
            self.values[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])
        ]


def fuse(features: Sequence[FeatureVector | np.ndarray]) -> FusedVector:
    """Concatenate per-channel feature vectors of one image in channel order."""
    if len(features) == 0:
        raise ValidationError("need at least one feature channel")
    arrays = [
        np.asarray(f.values if isinstance(f, FeatureVector) else f) for f in features
    ]
    lengths = [a.shape[0] for a in arrays]
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    return FusedVector(np.concatenate(arrays), offsets)
