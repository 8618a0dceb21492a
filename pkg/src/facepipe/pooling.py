"""Spatial pyramid pooling of code maps into one fixed-length feature vector.

Each pyramid level splits the image extent into g x g equal rectangular
cells. A patch belongs to the cell containing its center. Per-cell codes are
aggregated with elementwise max or mean, empty cells emit zeros, and levels
are concatenated cell-major (row order), code-dimension within cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoders import CodeMap
from .errors import DimensionError, ValidationError

GRID_SIDES = (1, 2, 4, 6, 8)


@dataclass(frozen=True)
class PyramidSpec:
    levels: tuple[int, ...]
    mode: str = "max"  # "max" | "avg"

    def __post_init__(self):
        if not 1 <= len(self.levels) <= 5:
            raise ValidationError("pyramid must have between 1 and 5 levels")
        if any(g not in GRID_SIDES for g in self.levels):
            raise ValidationError(f"grid sides must come from {GRID_SIDES}")
        if list(self.levels) != sorted(set(self.levels)):
            raise ValidationError("grid sides must be strictly increasing")
        if self.mode not in ("max", "avg"):
            raise ValidationError(f"pooling mode must be 'max' or 'avg', got {self.mode!r}")


@dataclass
class FeatureVector:
    values: np.ndarray  # (k * sum(g^2),)
    k: int
    spec: PyramidSpec


def feature_length(k: int, spec: PyramidSpec) -> int:
    return k * sum(g * g for g in spec.levels)


def pool_pyramid(codes: CodeMap, spec: PyramidSpec, extent: tuple[int, int]) -> FeatureVector:
    """Aggregate a code map over every pyramid level of the given image extent."""
    h, w = extent
    r = codes.coords[:, 0]
    c = codes.coords[:, 1]
    if r.size and (r.min() < 0 or r.max() >= h or c.min() < 0 or c.max() >= w):
        raise DimensionError("patch coordinates fall outside the image extent")
    k = codes.k
    pieces = []
    for g in spec.levels:
        ri = np.minimum(np.floor(r * g / h).astype(np.intp), g - 1)
        ci = np.minimum(np.floor(c * g / w).astype(np.intp), g - 1)
        cell = ri * g + ci
        order = np.argsort(cell, kind="stable")
        sorted_cells = cell[order]
        gathered = codes.codes[:, order]
        starts = np.flatnonzero(np.r_[True, sorted_cells[1:] != sorted_cells[:-1]])
        occupied = sorted_cells[starts]
        out = np.zeros((k, g * g))
        if spec.mode == "max":
            out[:, occupied] = np.maximum.reduceat(gathered, starts, axis=1)
        else:
            counts = np.diff(np.r_[starts, sorted_cells.size])
            out[:, occupied] = np.add.reduceat(gathered, starts, axis=1) / counts
        pieces.append(out.T.ravel())
    return FeatureVector(np.concatenate(pieces), k, spec)
