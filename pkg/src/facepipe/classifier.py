"""Multi-class ridge regression classifier and residual-based patch baselines.

The ridge weights have the closed form (X'X + delta*I)^-1 X'Y; when the
feature dimension exceeds the sample count the equivalent X'(XX' + delta*I)^-1 Y
is used so only an n x n system is factored. Gram matrices are always
accumulated in float64 so float32 feature matrices are safe inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, ValidationError

DEFAULT_DELTA = 0.005

_STD_FLOOR = 1e-12
_BLOCK_ELEMS = 2**24  # ~128 MB of float64 per accumulation block


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray  # zero-variance dimensions are floored to 1


@dataclass
class RidgeClassifier:
    weights: np.ndarray  # (D, c) float64
    delta: float
    standardizer: Standardizer | None

    @property
    def class_count(self) -> int:
        return self.weights.shape[1]

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


def labels_to_onehot(labels: np.ndarray, class_count: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= class_count:
        raise ValidationError("labels out of range for the given class count")
    y = np.zeros((labels.size, class_count))
    y[np.arange(labels.size), labels] = 1.0
    return y


def _col_blocks(dim: int, n_rows: int):
    width = max(1, min(dim, _BLOCK_ELEMS // max(n_rows, 1)))
    for lo in range(0, dim, width):
        yield lo, min(lo + width, dim)


def _check_finite(x: np.ndarray) -> None:
    for lo, hi in _col_blocks(x.shape[1], x.shape[0]):
        if not np.isfinite(x[:, lo:hi]).all():
            raise ValidationError("features contain non-finite values")


def _fit_standardizer(x: np.ndarray) -> Standardizer:
    n, dim = x.shape
    mean = np.empty(dim)
    var = np.empty(dim)
    for lo, hi in _col_blocks(dim, n):
        blk = x[:, lo:hi].astype(np.float64, copy=False)
        mean[lo:hi] = blk.mean(axis=0)
        var[lo:hi] = blk.var(axis=0)
    std = np.sqrt(var)
    std[std < _STD_FLOOR] = 1.0
    return Standardizer(mean, std)


def _standardized_block(x: np.ndarray, lo: int, hi: int, std: Standardizer | None) -> np.ndarray:
    blk = x[:, lo:hi].astype(np.float64, copy=True)
    if std is not None:
        blk -= std.mean[lo:hi]
        blk /= std.std[lo:hi]
    return blk


def fit_ridge(
    x: np.ndarray,
    y: np.ndarray,
    delta: float = DEFAULT_DELTA,
    standardize: bool = True,
    solver: str = "auto",
) -> RidgeClassifier:
    """Fit closed-form multi-class ridge weights from an indicator matrix y.

    solver picks the primal (D x D) or dual (n x n) normal equations;
    "auto" uses the dual whenever D > n. Both produce the same weights.
    """
    x = np.asarray(x)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionError("x must be (n, D) and y (n, c) with matching n")
    n, dim = x.shape
    c = y.shape[1]
    if c < 2:
        raise ValidationError("need at least 2 classes")
    if delta <= 0:
        raise ValidationError("delta must be positive")
    if not ((y == 0) | (y == 1)).all() or not (y.sum(axis=1) == 1).all():
        raise ValidationError("y must have one-hot rows")
    _check_finite(x)

    std = _fit_standardizer(x) if standardize else None
    if solver == "auto":
        solver = "dual" if dim > n else "primal"
    if solver == "dual":
        k = np.zeros((n, n))
        for lo, hi in _col_blocks(dim, n):
            blk = _standardized_block(x, lo, hi, std)
            k += blk @ blk.T
        k[np.diag_indices_from(k)] += delta
        alpha = sla.cho_solve(sla.cho_factor(k), y)
        w = np.empty((dim, c))
        for lo, hi in _col_blocks(dim, n):
            w[lo:hi] = _standardized_block(x, lo, hi, std).T @ alpha
    elif solver == "primal":
        xs = _standardized_block(x, 0, dim, std)
        g = xs.T @ xs
        g[np.diag_indices_from(g)] += delta
        w = sla.cho_solve(sla.cho_factor(g), xs.T @ y)
    else:
        raise ValidationError(f"unknown solver {solver!r}")
    return RidgeClassifier(w, delta, std)


def predict_scores(model: RidgeClassifier, z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z))
    if z.shape[1] != model.dim:
        raise DimensionError(f"feature dim {z.shape[1]} does not match model dim {model.dim}")
    scores = np.zeros((z.shape[0], model.class_count))
    for lo, hi in _col_blocks(model.dim, z.shape[0]):
        scores += _standardized_block(z, lo, hi, model.standardizer) @ model.weights[lo:hi]
    return scores


def predict_batch(model: RidgeClassifier, z: np.ndarray) -> np.ndarray:
    """Argmax of the class scores per row; ties go to the lowest class."""
    return predict_scores(model, z).argmax(axis=1)


def predict(model: RidgeClassifier, z: np.ndarray) -> int:
    return int(predict_batch(model, z.reshape(1, -1))[0])


# ---------------------------------------------------------------------------
# Residual-based baseline (collaborative coding over training samples)


@dataclass
class ResidualModel:
    samples: np.ndarray  # (n, D); rows are training samples
    labels: np.ndarray
    gamma: float
    class_count: int
    factor: tuple


def fit_residual_crc(train_x: np.ndarray, labels: np.ndarray, gamma: float) -> ResidualModel:
    """Store the training matrix and factor (A'A + gamma*I) where columns of
    A are training samples."""
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    train_x = np.asarray(train_x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if train_x.shape[0] != labels.size:
        raise DimensionError("one label per training row required")
    k = train_x @ train_x.T
    k[np.diag_indices_from(k)] += gamma
    return ResidualModel(train_x, labels, gamma, int(labels.max()) + 1, sla.cho_factor(k))


def crc_residuals(model: ResidualModel, z: np.ndarray) -> np.ndarray:
    """Squared reconstruction error of each probe row from each class's
    training samples, using the jointly solved code."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[1] != model.samples.shape[1]:
        raise DimensionError("probe dimension does not match training samples")
    codes = sla.cho_solve(model.factor, model.samples @ z.T)  # (n, b)
    out = np.empty((z.shape[0], model.class_count))
    for c in range(model.class_count):
        idx = np.flatnonzero(model.labels == c)
        recon = model.samples[idx].T @ codes[idx]  # (D, b)
        diff = z.T - recon
        out[:, c] = np.einsum("ij,ij->j", diff, diff)
    return out


def crc_predict(model: ResidualModel, z: np.ndarray) -> np.ndarray:
    return crc_residuals(model, z).argmin(axis=1)


def modular_aggregate(values: np.ndarray, mode: str) -> int:
    """Combine per-patch results for one image.

    mode "voting": values is a vector of per-patch predicted labels and the
    plurality wins. mode "sum": values is (patches, classes) residuals and
    the smallest summed residual wins. Ties go to the lowest class index.
    """
    values = np.asarray(values)
    if values.size == 0:
        raise ValidationError("need at least one patch result")
    if mode == "voting":
        if values.ndim != 1:
            raise ValidationError("voting expects a vector of labels")
        return int(np.bincount(values.astype(np.int64)).argmax())
    if mode == "sum":
        if values.ndim != 2:
            raise ValidationError("sum expects a (patches, classes) residual matrix")
        return int(values.sum(axis=0).argmin())
    raise ValidationError(f"unknown aggregation mode {mode!r}")
