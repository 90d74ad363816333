"""Dense matrix and matrix-set algebra.

A :class:`MatrixSet` is a finite list of equally shaped generators, optionally
standing for their convex hull.  Everything here works on small dense numpy
arrays; matrices are never larger than a few dozen rows.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls
from scipy.spatial import ConvexHull, QhullError

# smallest/largest singular value ratio below which a matrix counts as singular
INVERTIBILITY_RTOL = 1e-12
DEFAULT_HULL_SAMPLES = 256


def as_matrix(m) -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def op_norm(m) -> float:
    """Spectral norm max_{|x|=1} |m x|."""
    a = as_matrix(m)
    return float(np.linalg.svd(a, compute_uv=False)[0])


def _batched_svals(mats: np.ndarray) -> np.ndarray:
    return np.linalg.svd(mats, compute_uv=False)


def invertible_mask(mats: np.ndarray) -> np.ndarray:
    """Numerical invertibility of a stack of square matrices, shape (k, p, p)."""
    sv = _batched_svals(mats)
    return sv[:, -1] > INVERTIBILITY_RTOL * sv[:, 0]


def inverse_norms(mats: np.ndarray) -> np.ndarray:
    """‖Q⁻¹‖ = 1/σ_min for each matrix; ``inf`` where numerically singular."""
    sv = _batched_svals(mats)
    out = np.full(len(mats), math.inf)
    ok = sv[:, -1] > INVERTIBILITY_RTOL * sv[:, 0]
    out[ok] = 1.0 / sv[ok, -1]
    return out


@dataclass(frozen=True)
class MatrixSet:
    """Finite generator list; with ``hull`` it denotes their convex hull."""

    generators: np.ndarray
    hull: bool = True

    def __post_init__(self):
        g = np.array(self.generators, dtype=float)
        if g.ndim == 2:
            g = g[None]
        if g.ndim != 3 or len(g) == 0 or g.shape[1] == 0 or g.shape[2] == 0:
            raise ValueError(f"generators must have shape (k, rows, cols), got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("generator entries must be finite")
        g.setflags(write=False)
        object.__setattr__(self, "generators", g)

    @classmethod
    def of(cls, *mats, hull=True) -> "MatrixSet":
        return cls(np.stack([as_matrix(m) for m in mats]), hull=hull)

    @property
    def rows(self) -> int:
        return self.generators.shape[1]

    @property
    def cols(self) -> int:
        return self.generators.shape[2]

    @property
    def shape(self):
        return self.generators.shape[1:]

    def __len__(self):
        return len(self.generators)

    def is_square(self) -> bool:
        return self.rows == self.cols

    def sample(self, n_samples: int, seed: int = 0) -> np.ndarray:
        """Generators followed by ``n_samples`` random convex combinations.

        Weights are flat-Dirichlet, drawn as normalised exponentials so that a
        larger ``n_samples`` with the same seed extends the smaller draw.
        """
        g = self.generators
        if not self.hull or len(g) == 1 or n_samples <= 0:
            return np.array(g)
        w = dirichlet_weights(n_samples, len(g), seed)
        combos = np.einsum("sk,kij->sij", w, g)
        return np.concatenate([g, combos])


def dirichlet_weights(n: int, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    e = rng.standard_exponential((n, k))
    return e / e.sum(axis=1, keepdims=True)


def set_sup_norm(v: MatrixSet) -> float:
    # the norm is convex, so the sup over a hull sits at a generator
    return float(np.max(_batched_svals(v.generators)[:, 0]))


def _hull_has_sign_change(v: MatrixSet, mats: np.ndarray) -> bool:
    # det is continuous along segments, so opposite signs force a singular element
    if not v.hull:
        return False
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        dets = np.linalg.det(mats)
    return bool(np.any(dets > 0) and np.any(dets < 0))


def inverse_set_norm(v: MatrixSet, n_samples: int = DEFAULT_HULL_SAMPLES, seed: int = 0) -> float:
    """Sampled lower bound of sup ‖Q⁻¹‖ over the set; ``inf`` marks a singular element."""
    if not v.is_square():
        raise ValueError(f"inverse norm needs square matrices, got {v.shape}")
    mats = v.sample(n_samples, seed)
    if _hull_has_sign_change(v, mats):
        return math.inf
    return float(np.max(inverse_norms(mats)))


def is_singular_value(x: float) -> bool:
    return not math.isfinite(x)


def in_invertibility_class(v: MatrixSet, lam: float, n_samples: int = DEFAULT_HULL_SAMPLES,
                           seed: int = 0) -> bool:
    """Sampled test of v ⊂ {Q : Q⁻¹ exists, ‖Q⁻¹‖ < lam}."""
    return inverse_set_norm(v, n_samples, seed) < lam


# ---------------------------------------------------------------------------
# multi-indices and selection matrices (1-based indices, as in the math)


@dataclass(frozen=True)
class MultiIndex:
    d: int
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if not idx or len(idx) > self.d:
            raise ValueError(f"need 1 <= j <= d, got j={len(idx)}, d={self.d}")
        if any(b <= a for a, b in zip(idx, idx[1:])) or idx[0] < 1 or idx[-1] > self.d:
            raise ValueError(f"indices must be strictly increasing in [1, {self.d}]: {idx}")

    @property
    def j(self) -> int:
        return len(self.indices)

    @property
    def complement(self) -> tuple:
        return tuple(i for i in range(1, self.d + 1) if i not in self.indices)

    @property
    def zero_based(self) -> list:
        return [i - 1 for i in self.indices]

    def __str__(self):
        return "(" + ",".join(map(str, self.indices)) + ")"


def enumerate_multi_indices(d: int, j: int) -> list[MultiIndex]:
    if not 1 <= j <= d:
        raise ValueError(f"need 1 <= j <= d, got j={j}, d={d}")
    return [MultiIndex(d, c) for c in itertools.combinations(range(1, d + 1), j)]


def selection_matrix_T(pi: MultiIndex) -> np.ndarray:
    t = np.zeros((pi.d, pi.j))
    for col, i in enumerate(pi.indices):
        t[i - 1, col] = 1.0
    return t


def complement_matrix_D(pi: MultiIndex) -> np.ndarray:
    if pi.j == pi.d:
        raise ValueError("complement matrix needs j < d")
    comp = pi.complement
    dm = np.zeros((len(comp), pi.d))
    for row, mu in enumerate(comp):
        dm[row, mu - 1] = 1.0
    return dm


def submatrix_pi(h, pi: MultiIndex) -> np.ndarray:
    """Column selection H·T_π of a j×d matrix."""
    a = as_matrix(h)
    if a.shape != (pi.j, pi.d):
        raise ValueError(f"expected a {pi.j}x{pi.d} matrix, got {a.shape}")
    return a @ selection_matrix_T(pi)


# ---------------------------------------------------------------------------
# convex-hull helpers


def simplex_lstsq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """argmin |a w - b| over the probability simplex.

    Solved as a non-negative least-squares problem with a heavily weighted
    sum-to-one row (Lawson-Hanson active set), then renormalised.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    k = a.shape[1]
    if k == 1:
        return np.ones(1)
    rho = 1e4 * max(1.0, float(np.abs(a).max()), float(np.abs(b).max()))
    aa = np.vstack([a, rho * np.ones((1, k))])
    bb = np.concatenate([b, [rho]])
    w, _ = nnls(aa, bb, maxiter=50 * k)
    s = w.sum()
    if s <= 0:
        w = np.full(k, 1.0 / k)
    else:
        w = w / s
    return w


def hull_projection(m, generators: np.ndarray):
    """Nearest point of co{generators} to ``m`` in Frobenius norm, and its distance."""
    g = np.asarray(generators, dtype=float)
    target = np.asarray(m, dtype=float).ravel()
    a = g.reshape(len(g), -1).T
    w = simplex_lstsq(a, target)
    p = a @ w
    return p.reshape(g.shape[1:]), float(np.linalg.norm(p - target))


def hull_distance(m, generators: np.ndarray) -> float:
    return hull_projection(m, generators)[1]


def canonical_order(mats: np.ndarray) -> np.ndarray:
    flat = mats.reshape(len(mats), -1)
    order = np.lexsort(flat.T[::-1])
    return mats[order]


def reduce_generators(mats, rank_tol: float = 1e-9, max_generators: int = 256) -> np.ndarray:
    """Drop duplicates and interior points of a generator list; canonical order.

    The generators are projected onto their affine span; up to six span
    dimensions the hull vertices are extracted with qhull, beyond that only
    exact duplicates are removed.
    """
    g = np.asarray(mats, dtype=float)
    if g.ndim == 2:
        g = g[None]
    shape = g.shape[1:]
    flat = np.unique(g.reshape(len(g), -1), axis=0)
    if len(flat) <= 2:
        return canonical_order(flat.reshape((-1,) + shape))
    center = flat.mean(axis=0)
    x = flat - center
    _, sv, vt = np.linalg.svd(x, full_matrices=False)
    scale = max(1.0, float(np.abs(flat).max()))
    r = int(np.sum(sv > rank_tol * scale * math.sqrt(len(flat))))
    if r == 0:
        keep = flat[:1]
    elif r == 1:
        t = x @ vt[0]
        keep = flat[[int(np.argmin(t)), int(np.argmax(t))]]
    elif r <= 6 and len(flat) > r + 1:
        coords = x @ vt[:r].T
        try:
            keep = flat[np.sort(ConvexHull(coords).vertices)]
        except (QhullError, ValueError):
            keep = flat
    else:
        keep = flat
    if len(keep) > max_generators:
        keep = keep[farthest_point_indices(keep, max_generators)]
    return canonical_order(keep.reshape((-1,) + shape))


def farthest_point_indices(points: np.ndarray, n: int, start: int = 0) -> np.ndarray:
    """Greedy farthest-point subsample; deterministic given ``start``."""
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    n = min(n, len(pts))
    chosen = np.empty(n, dtype=int)
    chosen[0] = start
    d2 = ((pts - pts[start]) ** 2).sum(axis=1)
    for i in range(1, n):
        nxt = int(np.argmax(d2))
        chosen[i] = nxt
        d2 = np.minimum(d2, ((pts - pts[nxt]) ** 2).sum(axis=1))
    return chosen
