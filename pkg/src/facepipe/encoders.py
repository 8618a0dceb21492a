"""Patch encoders: sparse coding, LLC, ridge, soft threshold, triangle, VQ.

Every encoder maps whitened patch columns to code columns against a fixed
atom matrix. The array-level functions (`*_codes`) carry the math; the
`Encoder` wrapper precomputes whatever can be shared across images (the
ridge factorization, the Gram matrix) and attaches patch coordinates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg as sla

from .errors import ConvergenceWarning, EncodingError, ValidationError
from .preprocess import PatchSet

if TYPE_CHECKING:  # pragma: no cover
    from .dictionary import Dictionary

NAMES = ("sc", "llc", "rr", "st", "kt", "vq")

DEFAULT_SC_LAMBDA = 1.0
DEFAULT_ST_ALPHA = 0.25
DEFAULT_LLC_KNN = 5
DEFAULT_LLC_DELTA = 0.01
DEFAULT_RR_GAMMA = 0.01


@dataclass
class CodeMap:
    """Per-patch codes (columns) with the coordinates they came from."""

    codes: np.ndarray   # (k, N); k = m, or 2m for the soft threshold
    coords: np.ndarray  # (N, 2)
    encoder: str
    params: dict[str, float] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.codes.shape[0]

    @property
    def n(self) -> int:
        return self.codes.shape[1]


def code_dim(encoder: str, m: int) -> int:
    """Code dimension produced by `encoder` against m atoms."""
    if encoder not in NAMES:
        raise ValidationError(f"unknown encoder {encoder!r}")
    return 2 * m if encoder == "st" else m


def _soft(v: np.ndarray, thr: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)


# ---------------------------------------------------------------------------
# L1 coding


def lasso_batch(
    d_mat: np.ndarray,
    x: np.ndarray,
    lam: float,
    warm: np.ndarray | None = None,
    max_sweeps: int = 1000,
    tol: float = 1e-9,
) -> np.ndarray:
    """Cyclic coordinate descent on ||Df - x||^2 + lam*||f||_1, column-wise.

    Columns are iterated independently and exit as soon as their largest
    coordinate change in a sweep drops to `tol`, so batch results match
    encoding columns one at a time. Columns still moving after `max_sweeps`
    raise ConvergenceWarning and keep their current iterate.
    """
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    d, m = d_mat.shape
    n = x.shape[1]
    cn2 = np.einsum("ij,ij->j", d_mat, d_mat)
    out = np.zeros((m, n)) if warm is None else np.array(warm, dtype=np.float64)
    active = np.arange(n)
    fa = out.copy()
    ra = x - d_mat @ fa if warm is not None else x.astype(np.float64, copy=True)
    half = lam / 2.0
    for sweep in range(max_sweeps):
        if active.size == 0:
            break
        maxd = np.zeros(active.size)
        for j in range(m):
            if cn2[j] <= 0:
                continue
            rho = d_mat[:, j] @ ra + cn2[j] * fa[j]
            fnew = _soft(rho, half) / cn2[j]
            delta = fnew - fa[j]
            ra -= np.outer(d_mat[:, j], delta)
            fa[j] = fnew
            np.maximum(maxd, np.abs(delta), out=maxd)
        settled = maxd <= tol
        if settled.any():
            out[:, active[settled]] = fa[:, settled]
            keep = ~settled
            active, fa, ra = active[keep], fa[:, keep].copy(), ra[:, keep].copy()
    if active.size:
        warnings.warn(
            f"lasso coordinate descent: {active.size} column(s) not converged "
            f"after {max_sweeps} sweeps",
            ConvergenceWarning,
        )
        out[:, active] = fa
    return out


def lasso_solve(d_mat: np.ndarray, x: np.ndarray, lam: float, **kw) -> np.ndarray:
    """Single-vector L1 code; same code path as the batch solver."""
    return lasso_batch(d_mat, x.reshape(-1, 1), lam, **kw)[:, 0]


def lasso_kkt_residual(d_mat: np.ndarray, x: np.ndarray, f: np.ndarray, lam: float) -> float:
    """Largest stationarity violation of a candidate L1 code."""
    g = 2.0 * (d_mat.T @ (d_mat @ f - x))
    on = f != 0
    viol_off = np.maximum(np.abs(g[~on]) - lam, 0.0)
    viol_on = np.abs(g[on] + lam * np.sign(f[on]))
    pieces = np.concatenate([viol_off, viol_on])
    return float(pieces.max()) if pieces.size else 0.0


def sc_codes(atoms: np.ndarray, x: np.ndarray, lam: float = DEFAULT_SC_LAMBDA) -> np.ndarray:
    return lasso_batch(atoms, x, lam)


# ---------------------------------------------------------------------------
# Locality-constrained linear coding


def _llc_solve_one(gss: np.ndarray, hs: np.ndarray, delta: float) -> np.ndarray:
    """Equality-constrained ridge on one support; delta escalates on failure."""
    k = gss.shape[0]
    esc = delta
    for _ in range(4):
        a = np.zeros((k + 1, k + 1))
        a[:k, :k] = 2.0 * (gss + esc * np.eye(k))
        a[k, :k] = 1.0
        a[:k, k] = 1.0
        b = np.concatenate([2.0 * hs, [1.0]])
        try:
            sol = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            esc *= 10.0
            continue
        if np.isfinite(sol).all():
            return sol[:k]
        esc *= 10.0
    raise EncodingError("constrained local coding system stayed singular")


def llc_codes(
    atoms: np.ndarray,
    x: np.ndarray,
    knn: int = DEFAULT_LLC_KNN,
    delta: float = DEFAULT_LLC_DELTA,
) -> np.ndarray:
    """Ridge-regularized least squares on the K nearest atoms, summing to 1."""
    d, m = atoms.shape
    n = x.shape[1]
    if not 1 <= knn <= m:
        raise ValidationError(f"K must be in [1, {m}]")
    if delta <= 0:
        raise ValidationError("delta must be positive")
    d2 = (
        np.einsum("ij,ij->j", atoms, atoms)[:, None]
        - 2.0 * (atoms.T @ x)
        + np.einsum("ij,ij->j", x, x)[None, :]
    )
    nn = np.argpartition(d2, knn - 1, axis=0)[:knn] if knn < m else np.tile(
        np.arange(m)[:, None], (1, n)
    )
    gram = atoms.T @ atoms
    h = atoms.T @ x
    gss = np.moveaxis(gram[nn[:, None, :], nn[None, :, :]], 2, 0)  # (n, K, K)
    hs = h[nn, np.arange(n)[None, :]]  # (K, n)

    eye = np.eye(knn)
    a = np.zeros((n, knn + 1, knn + 1))
    a[:, :knn, :knn] = 2.0 * (gss + delta * eye)
    a[:, knn, :knn] = 1.0
    a[:, :knn, knn] = 1.0
    b = np.concatenate([2.0 * hs, np.ones((1, n))], axis=0).T  # (n, K+1)
    try:
        sol = np.linalg.solve(a, b)[:, :knn]
        bad = ~np.isfinite(sol).all(axis=1)
    except np.linalg.LinAlgError:
        sol = np.zeros((n, knn))
        bad = np.ones(n, dtype=bool)
    for i in np.flatnonzero(bad):
        sol[i] = _llc_solve_one(gss[i], hs[:, i], delta)
    codes = np.zeros((m, n))
    codes[nn, np.arange(n)[None, :]] = sol.T
    return codes


# ---------------------------------------------------------------------------
# Closed-form encoders


def rr_codes(atoms: np.ndarray, x: np.ndarray, gamma: float = DEFAULT_RR_GAMMA) -> np.ndarray:
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    m = atoms.shape[1]
    factor = sla.cho_factor(atoms.T @ atoms + gamma * np.eye(m))
    return sla.cho_solve(factor, atoms.T @ x)


def st_codes(atoms: np.ndarray, x: np.ndarray, alpha: float = DEFAULT_ST_ALPHA) -> np.ndarray:
    """Split-sign rectified inner products: rows j and j+m per atom j."""
    if alpha < 0:
        raise ValidationError("alpha must be nonnegative")
    p = atoms.T @ x
    return np.concatenate([np.maximum(0.0, p - alpha), np.maximum(0.0, -p - alpha)])


def kt_codes(atoms: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Triangle activation: positive part of mean distance minus distance."""
    d2 = (
        np.einsum("ij,ij->j", atoms, atoms)[:, None]
        - 2.0 * (atoms.T @ x)
        + np.einsum("ij,ij->j", x, x)[None, :]
    )
    z = np.sqrt(np.maximum(d2, 0.0))
    return np.maximum(0.0, z.mean(axis=0) - z)


def vq_codes(atoms: np.ndarray, x: np.ndarray) -> np.ndarray:
    """One-hot assignment to the nearest atom; ties go to the lowest index."""
    d2 = (
        np.einsum("ij,ij->j", atoms, atoms)[:, None]
        - 2.0 * (atoms.T @ x)
        + np.einsum("ij,ij->j", x, x)[None, :]
    )
    nearest = d2.argmin(axis=0)
    codes = np.zeros((atoms.shape[1], x.shape[1]))
    codes[nearest, np.arange(x.shape[1])] = 1.0
    return codes


# ---------------------------------------------------------------------------
# Dictionary-level API


class Encoder:
    """Immutable encoder bound to one dictionary; safe to share across images.

    For the ridge encoder the Cholesky factor of (D'D + gamma*I) is computed
    here once and reused for every patch batch.
    """

    def __init__(self, dic: "Dictionary", name: str, **params: float):
        if name not in NAMES:
            raise ValidationError(f"unknown encoder {name!r}")
        self.dictionary = dic
        self.name = name
        self.params = dict(params)
        self._factor = None
        if name == "rr":
            gamma = self.params.setdefault("gamma", DEFAULT_RR_GAMMA)
            if gamma <= 0:
                raise ValidationError("gamma must be positive")
            m = dic.m
            self._factor = sla.cho_factor(dic.atoms.T @ dic.atoms + gamma * np.eye(m))
        elif name == "sc":
            self.params.setdefault("lambda", DEFAULT_SC_LAMBDA)
        elif name == "st":
            self.params.setdefault("alpha", DEFAULT_ST_ALPHA)
        elif name == "llc":
            self.params.setdefault("knn", DEFAULT_LLC_KNN)
            self.params.setdefault("delta", DEFAULT_LLC_DELTA)

    def encode(self, patches: PatchSet) -> CodeMap:
        atoms = self.dictionary.atoms
        x = patches.data
        if x.shape[0] != atoms.shape[0]:
            raise ValidationError(
                f"patch dim {x.shape[0]} does not match atom dim {atoms.shape[0]}"
            )
        if self.name == "sc":
            codes = lasso_batch(atoms, x, self.params["lambda"])
        elif self.name == "llc":
            codes = llc_codes(atoms, x, int(self.params["knn"]), self.params["delta"])
        elif self.name == "rr":
            codes = sla.cho_solve(self._factor, atoms.T @ x)
        elif self.name == "st":
            codes = st_codes(atoms, x, self.params["alpha"])
        elif self.name == "kt":
            codes = kt_codes(atoms, x)
        else:
            codes = vq_codes(atoms, x)
        return CodeMap(codes, patches.coords.copy(), self.name, dict(self.params))


def encode_sc(dic: "Dictionary", patches: PatchSet, lam: float = DEFAULT_SC_LAMBDA) -> CodeMap:
    return Encoder(dic, "sc", **{"lambda": lam}).encode(patches)


def encode_llc(
    dic: "Dictionary",
    patches: PatchSet,
    knn: int = DEFAULT_LLC_KNN,
    delta: float = DEFAULT_LLC_DELTA,
) -> CodeMap:
    return Encoder(dic, "llc", knn=knn, delta=delta).encode(patches)


def encode_rr(dic: "Dictionary", patches: PatchSet, gamma: float = DEFAULT_RR_GAMMA) -> CodeMap:
    return Encoder(dic, "rr", gamma=gamma).encode(patches)


def encode_st(dic: "Dictionary", patches: PatchSet, alpha: float = DEFAULT_ST_ALPHA) -> CodeMap:
    return Encoder(dic, "st", alpha=alpha).encode(patches)


def encode_kt(dic: "Dictionary", patches: PatchSet) -> CodeMap:
    return Encoder(dic, "kt").encode(patches)


def encode_vq(dic: "Dictionary", patches: PatchSet) -> CodeMap:
    return Encoder(dic, "vq").encode(patches)
