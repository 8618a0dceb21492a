"""Dictionary builders: random patch selection, K-means, K-SVD, sparse coding.

All builders return unit-norm atom columns and are deterministic under a
fixed seed. The learned methods expose their per-iteration objective so
monotonicity can be checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoders import lasso_batch
from .errors import InsufficientSamplesError, ValidationError
from .preprocess import PatchSet

_ZERO_NORM = 1e-12

METHODS = ("random", "kmeans", "ksvd", "sc")


@dataclass
class Dictionary:
    """d x m atom matrix with builder provenance."""

    atoms: np.ndarray  # (d, m), unit-norm columns
    method: str
    seed: int
    objective: np.ndarray | None = None  # per-iteration trace for learned builders
    whitening_id: str | None = None

    @property
    def m(self) -> int:
        return self.atoms.shape[1]

    @property
    def dim(self) -> int:
        return self.atoms.shape[0]


def _unit_columns(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=0)
    return mat / np.where(norms > _ZERO_NORM, norms, 1.0)


def _sample_columns(data: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """m distinct nonzero columns, unit-normalized."""
    norms = np.linalg.norm(data, axis=0)
    eligible = np.flatnonzero(norms > _ZERO_NORM)
    if eligible.size < m:
        raise InsufficientSamplesError(
            f"need {m} nonzero patches, only {eligible.size} available"
        )
    pick = eligible[rng.permutation(eligible.size)[:m]]
    return _unit_columns(data[:, pick].copy())


def dict_random(patches: PatchSet, m: int, seed: int = 0) -> Dictionary:
    """Fill the dictionary with randomly selected patches; no learning."""
    if m < 1:
        raise ValidationError("dictionary size must be at least 1")
    atoms = _sample_columns(patches.data, m, np.random.default_rng(seed))
    return Dictionary(atoms, "random", seed)


# ---------------------------------------------------------------------------
# K-means


def _sq_dists(c: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between columns of c (m) and x (N): (m, N)."""
    d2 = (
        np.einsum("ij,ij->j", c, c)[:, None]
        - 2.0 * (c.T @ x)
        + np.einsum("ij,ij->j", x, x)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeans_pp(x: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[1]
    centers = np.empty(m, dtype=np.intp)
    centers[0] = rng.integers(n)
    d2 = _sq_dists(x[:, centers[:1]], x)[0]
    for t in range(1, m):
        total = d2.sum()
        if total <= 0:
            centers[t] = rng.integers(n)
        else:
            centers[t] = rng.choice(n, p=d2 / total)
        np.minimum(d2, _sq_dists(x[:, centers[t : t + 1]], x)[0], out=d2)
    return x[:, centers].copy()


def kmeans_fit(
    x: np.ndarray,
    m: int,
    iters: int,
    seed: int = 0,
    return_history: bool = False,
) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Lloyd iterations with k-means++ seeding.

    Returns (centroids, objective, history). objective[t] is the quantization
    error measured with the centroids in effect at iteration t; it is
    non-increasing. Empty clusters are reseeded with the point farthest from
    its assigned centroid.
    """
    if m < 1 or iters < 1:
        raise ValidationError("m and iters must be at least 1")
    d, n = x.shape
    if n < m:
        raise InsufficientSamplesError(f"need {m} patches for {m} clusters, have {n}")
    rng = np.random.default_rng(seed)
    c = _kmeans_pp(x, m, rng)
    trace: list[float] = []
    history: list[np.ndarray] = []
    for _ in range(iters):
        d2 = _sq_dists(c, x)
        assign = d2.argmin(axis=0)
        best = d2[assign, np.arange(n)]
        trace.append(float(best.sum()))
        if return_history:
            history.append(c.copy())
        counts = np.bincount(assign, minlength=m)
        sums = np.empty_like(c)
        for row in range(d):
            sums[row] = np.bincount(assign, weights=x[row], minlength=m)
        filled = counts > 0
        c[:, filled] = sums[:, filled] / counts[filled]
        empties = np.flatnonzero(~filled)
        if empties.size:
            far = np.argsort(best)[::-1]
            for slot, j in enumerate(empties):
                c[:, j] = x[:, far[slot]]
    return c, np.asarray(trace), history


def dict_kmeans(patches: PatchSet, m: int, iters: int = 30, seed: int = 0) -> Dictionary:
    """Cluster patches and use the centroids as atoms (unit-normalized)."""
    centroids, trace, _ = kmeans_fit(patches.data, m, iters, seed)
    atoms = _unit_columns(centroids)
    degenerate = np.flatnonzero(np.linalg.norm(atoms, axis=0) <= _ZERO_NORM)
    if degenerate.size:
        # a centroid can land exactly at zero on centered data; resample it
        refill = _sample_columns(patches.data, degenerate.size, np.random.default_rng(seed + 1))
        atoms[:, degenerate] = refill
    return Dictionary(atoms, "kmeans", seed, objective=trace)


# ---------------------------------------------------------------------------
# K-SVD


def omp_batch(
    d_mat: np.ndarray,
    x: np.ndarray,
    sparsity: int,
    tol: float = 1e-12,
    chunk: int = 512,
) -> np.ndarray:
    """Orthogonal matching pursuit per column, at most `sparsity` nonzeros.

    Signals are processed in chunks; within a chunk all still-active columns
    advance one atom per step, so per-column results match a one-at-a-time
    greedy pursuit.
    """
    d, m = d_mat.shape
    n = x.shape[1]
    t_max = min(sparsity, m)
    gram = d_mat.T @ d_mat
    codes = np.zeros((m, n))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        _omp_chunk(d_mat, gram, x[:, lo:hi], t_max, tol, codes[:, lo:hi])
    return codes


def _omp_emit(out: np.ndarray, cols: np.ndarray, supp: np.ndarray, coef: np.ndarray) -> None:
    if supp.shape[0] and cols.size:
        out[supp, cols[None, :]] = coef


def _omp_chunk(
    d_mat: np.ndarray,
    gram: np.ndarray,
    x: np.ndarray,
    t_max: int,
    tol: float,
    out: np.ndarray,
) -> None:
    h_all = d_mat.T @ x
    xn2 = np.einsum("ij,ij->j", x, x)
    cols = np.flatnonzero(xn2 > tol)
    if cols.size == 0:
        return
    h = h_all[:, cols]
    corr = h.copy()
    xn2 = xn2[cols]
    supp = np.zeros((t_max, cols.size), dtype=np.intp)
    prev = np.zeros((0, cols.size))
    for t in range(t_max):
        na = cols.size
        ac = np.abs(corr)
        if t:
            ac[supp[:t], np.arange(na)[None, :]] = -1.0
        pick = ac.argmax(axis=0)
        stuck = ac[pick, np.arange(na)] <= 0.0
        if stuck.any():
            # residual orthogonal to every unused atom: freeze at previous step
            _omp_emit(out, cols[stuck], supp[:t, stuck], prev[:, stuck])
            keep = ~stuck
            cols, h, corr, xn2 = cols[keep], h[:, keep], corr[:, keep], xn2[keep]
            supp, prev, pick = supp[:, keep], prev[:, keep], pick[keep]
            na = cols.size
            if na == 0:
                return
        supp[t] = pick
        s = supp[: t + 1]
        gss = np.moveaxis(gram[s[:, None, :], s[None, :, :]], 2, 0)  # (na, t+1, t+1)
        hs = h[s, np.arange(na)[None, :]]  # (t+1, na)
        try:
            sol = np.linalg.solve(gss, hs.T)
        except np.linalg.LinAlgError:
            sol = np.stack(
                [np.linalg.lstsq(gss[i], hs[:, i], rcond=None)[0] for i in range(na)]
            )
        resid2 = xn2 - np.einsum("nt,tn->n", sol, hs)
        done = np.ones(na, dtype=bool) if t + 1 == t_max else resid2 <= tol
        if done.any():
            _omp_emit(out, cols[done], s[:, done], sol[done].T)
        keep = ~done
        if not keep.any():
            return
        cols, h, xn2 = cols[keep], h[:, keep], xn2[keep]
        supp, sol = supp[:, keep], sol[keep]
        s = supp[: t + 1]
        corr = h - np.einsum("msn,ns->mn", gram[:, s], sol)
        prev = sol.T


def _fro2(r: np.ndarray) -> float:
    return float(np.einsum("ij,ij->", r, r))


def ksvd_fit(
    x: np.ndarray,
    m: int,
    sparsity: int,
    iters: int,
    seed: int = 0,
    init: np.ndarray | None = None,
    return_history: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Alternate batch OMP coding with rank-1 atom updates.

    Returns (atoms, codes, objective, history). objective[t] is the squared
    reconstruction error at the end of outer iteration t and is
    non-increasing: coding keeps a signal's previous code whenever the fresh
    pursuit would reconstruct it worse, and each atom update is an exact
    alternating rank-1 minimization started from the current atom.
    """
    d, n = x.shape
    if not 1 <= sparsity <= min(d, m):
        raise ValidationError(f"sparsity must be in [1, min(d, m)] = [1, {min(d, m)}]")
    if iters < 1:
        raise ValidationError("iters must be at least 1")
    rng = np.random.default_rng(seed)
    atoms = _unit_columns(init.copy()) if init is not None else _sample_columns(x, m, rng)
    codes: np.ndarray | None = None
    trace: list[float] = []
    history: list[tuple[np.ndarray, np.ndarray]] = []
    for _ in range(iters):
        fresh = omp_batch(atoms, x, sparsity)
        if codes is not None:
            r2_new = np.einsum("ij,ij->j", x - atoms @ fresh, x - atoms @ fresh)
            r2_old = np.einsum("ij,ij->j", x - atoms @ codes, x - atoms @ codes)
            worse = r2_old < r2_new
            fresh[:, worse] = codes[:, worse]
        codes = fresh
        resid = x - atoms @ codes
        dead: list[int] = []
        for j in range(m):
            omega = np.flatnonzero(codes[j])
            if omega.size == 0:
                dead.append(j)
                continue
            err = resid[:, omega] + np.outer(atoms[:, j], codes[j, omega])
            dj = atoms[:, j]
            for _ in range(3):
                fj = err.T @ dj
                v = err @ fj
                nv = np.linalg.norm(v)
                if nv <= _ZERO_NORM:
                    break
                dj = v / nv
            fj = err.T @ dj
            atoms[:, j] = dj
            codes[j, omega] = fj
            resid[:, omega] = err - np.outer(dj, fj)
        if dead:
            r2 = np.einsum("ij,ij->j", resid, resid)
            order = np.argsort(r2)[::-1]
            for slot, j in enumerate(dead):
                col = x[:, order[slot % n]]
                nc = np.linalg.norm(col)
                if nc > _ZERO_NORM:
                    atoms[:, j] = col / nc
        trace.append(_fro2(resid))
        if return_history:
            history.append((atoms.copy(), codes.copy()))
    return atoms, codes, np.asarray(trace), history


def dict_ksvd(
    patches: PatchSet, m: int, sparsity: int = 5, iters: int = 30, seed: int = 0
) -> Dictionary:
    atoms, _, trace, _ = ksvd_fit(patches.data, m, sparsity, iters, seed)
    return Dictionary(atoms, "ksvd", seed, objective=trace)


# ---------------------------------------------------------------------------
# Sparse coding


def sc_fit(
    x: np.ndarray,
    m: int,
    lam: float,
    iters: int,
    seed: int = 0,
    init: np.ndarray | None = None,
    return_history: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Alternate L1 coding and sphere-projected atom updates.

    Returns (atoms, codes, objective, history) where objective[t] is the
    reconstruction-plus-penalty value at the end of outer iteration t.
    Coding is warm-started from the previous codes, and the optimal unit-norm
    atom given fixed codes is the normalized residual correlation, so the
    objective never increases across outer iterations.
    """
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    if iters < 1:
        raise ValidationError("iters must be at least 1")
    d, n = x.shape
    rng = np.random.default_rng(seed)
    atoms = _unit_columns(init.copy()) if init is not None else _sample_columns(x, m, rng)
    codes = np.zeros((m, n))
    trace: list[float] = []
    history: list[tuple[np.ndarray, np.ndarray]] = []
    for _ in range(iters):
        codes = lasso_batch(atoms, x, lam, warm=codes)
        resid = x - atoms @ codes
        for j in range(m):
            nz = np.flatnonzero(codes[j])
            if nz.size == 0:
                continue
            fj = codes[j, nz]
            g = resid[:, nz] @ fj + atoms[:, j] * float(fj @ fj)
            ng = np.linalg.norm(g)
            if ng <= _ZERO_NORM:
                continue
            new = g / ng
            resid[:, nz] -= np.outer(new - atoms[:, j], fj)
            atoms[:, j] = new
        used = (codes != 0).any(axis=1)
        dead = np.flatnonzero(~used)
        if dead.size:
            atoms[:, dead] = _sample_columns(x, dead.size, rng)
        trace.append(_fro2(resid) + lam * float(np.abs(codes).sum()))
        if return_history:
            history.append((atoms.copy(), codes.copy()))
    return atoms, codes, np.asarray(trace), history


def dict_sc(
    patches: PatchSet, m: int, lam: float = 1.0, iters: int = 15, seed: int = 0
) -> Dictionary:
    atoms, _, trace, _ = sc_fit(patches.data, m, lam, iters, seed)
    return Dictionary(atoms, "sc", seed, objective=trace)


BUILDERS = {
    "random": dict_random,
    "kmeans": dict_kmeans,
    "ksvd": dict_ksvd,
    "sc": dict_sc,
}
