"""Dense patch extraction, per-patch contrast normalization, and ZCA whitening.

Patches are stored column-wise in a d x N matrix (d = side^2) together with
their center coordinates in source-image pixels. Whitening statistics are
fitted once on a training patch pool and reused everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, SingularityError, ValidationError

# Classic contrast-normalization constant of 10 on 0..255 intensities,
# rescaled to the [0, 1] range used here.
DEFAULT_NORM_EPS = 10.0 / 255.0**2
DEFAULT_ZCA_EPS = 0.1


@dataclass
class PatchSet:
    """Flattened patches (columns of `data`) with patch-center coordinates."""

    data: np.ndarray        # (d, N) float64
    coords: np.ndarray      # (N, 2) float64, (row, col) centers
    source_ids: np.ndarray  # (N,) int32 index of the originating image

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[0]


def extract_patches(img: np.ndarray, side: int, stride: int = 1, source_id: int = 0) -> PatchSet:
    """Slide a side x side window over the image in raster order.

    Yields (floor((H-side)/stride)+1) * (floor((W-side)/stride)+1) patches;
    coordinates are window centers (top + (side-1)/2, left + (side-1)/2).
    """
    img = np.asarray(img, dtype=np.float64)
    if side < 1 or stride < 1:
        raise ValidationError("side and stride must be at least 1")
    h, w = img.shape
    if side > min(h, w):
        raise DimensionError(f"patch side {side} exceeds image size {h}x{w}")
    windows = sliding_window_view(img, (side, side))[::stride, ::stride]
    nr, nc = windows.shape[:2]
    data = windows.reshape(nr * nc, side * side).T.copy()

    half = (side - 1) / 2.0
    rows = np.arange(nr) * stride + half
    cols = np.arange(nc) * stride + half
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    coords = np.column_stack([rr.ravel(), cc.ravel()])
    ids = np.full(nr * nc, source_id, dtype=np.int32)
    return PatchSet(data, coords, ids)


def concat_patches(sets: list[PatchSet]) -> PatchSet:
    if not sets:
        raise ValidationError("no patch sets to concatenate")
    return PatchSet(
        np.concatenate([s.data for s in sets], axis=1),
        np.concatenate([s.coords for s in sets], axis=0),
        np.concatenate([s.source_ids for s in sets]),
    )


def contrast_normalize(patches: PatchSet, eps: float = DEFAULT_NORM_EPS) -> PatchSet:
    """Remove each patch's mean and divide by sqrt(var + eps)."""
    if eps <= 0:
        raise ValidationError("contrast normalization eps must be positive")
    x = patches.data
    mean = x.mean(axis=0)
    var = x.var(axis=0)
    out = (x - mean) / np.sqrt(var + eps)
    return PatchSet(out, patches.coords, patches.source_ids)


@dataclass
class WhiteningModel:
    """Per-patch normalization constants plus the ZCA mean and transform."""

    norm_eps: float
    zca_eps: float
    mean: np.ndarray       # (d,)
    transform: np.ndarray  # (d, d), symmetric positive definite


def zca_fit(patches: PatchSet, zca_eps: float = DEFAULT_ZCA_EPS,
            norm_eps: float = DEFAULT_NORM_EPS) -> WhiteningModel:
    """Fit (cov + eps*I)^(-1/2) on the patch columns via eigendecomposition.

    The covariance uses the population convention (divide by N). With
    zca_eps = 0 a singular covariance raises SingularityError.
    """
    if zca_eps < 0:
        raise ValidationError("zca_eps must be nonnegative")
    x = patches.data
    mean = x.mean(axis=1)
    centered = x - mean[:, None]
    cov = (centered @ centered.T) / patches.n
    evals, evecs = np.linalg.eigh(cov)
    shifted = evals + zca_eps
    scale = max(float(evals[-1]), 0.0)
    if shifted[0] <= 0 or shifted[0] <= scale * 1e-12:
        raise SingularityError(
            "patch covariance is singular; use a positive zca_eps"
        )
    transform = (evecs * (shifted**-0.5)) @ evecs.T
    transform = 0.5 * (transform + transform.T)
    return WhiteningModel(norm_eps, zca_eps, mean, transform)


def zca_apply(model: WhiteningModel, patches: PatchSet) -> PatchSet:
    """Map each column x to transform @ (x - mean)."""
    if patches.dim != model.mean.shape[0]:
        raise DimensionError(
            f"patch dim {patches.dim} does not match whitening dim {model.mean.shape[0]}"
        )
    out = model.transform @ (patches.data - model.mean[:, None])
    return PatchSet(out, patches.coords, patches.source_ids)


def preprocess_patches(patches: PatchSet, model: WhiteningModel) -> PatchSet:
    """Contrast-normalize with the model's constant, then whiten."""
    return zca_apply(model, contrast_normalize(patches, model.norm_eps))
