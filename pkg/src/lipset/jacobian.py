"""Sampled Clarke generalized Jacobians.

The generalized Jacobian at ``x`` is approximated by the convex hull of the
derivatives observed at random differentiability points of a small ball
around ``x``.  Upper semicontinuity makes this an outer approximation, which
is the safe direction for every invertibility certificate built on top.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateSample
from .manifold import LipschitzManifold, charts_containing
from .matrixset import MatrixSet, hull_distance, reduce_generators, simplex_lstsq


def fd_step(x: np.ndarray) -> np.ndarray:
    return 1e-7 * np.maximum(1.0, np.linalg.norm(x, axis=1))


@dataclass(frozen=True)
class LipschitzFunction:
    """Vectorised map R^q -> R^p: ``func`` takes (N, q) and returns (N, p).

    ``jac`` (optional) returns the (N, p, q) derivative at points where
    ``differentiable`` holds; without a predicate f is treated as
    differentiable everywhere, which holds almost surely under continuous
    sampling.
    """

    func: Callable
    in_dim: int
    out_dim: int
    jac: Optional[Callable] = None
    differentiable: Optional[Callable] = None
    lip: Optional[float] = None
    name: str = ""

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.asarray(self.func(x[None]), dtype=float).reshape(self.out_dim)
        return np.asarray(self.func(x), dtype=float).reshape(len(x), self.out_dim)

    def is_differentiable(self, x: np.ndarray) -> np.ndarray:
        if self.differentiable is None:
            return np.ones(len(x), dtype=bool)
        return np.asarray(self.differentiable(x), dtype=bool)

    def jacobian(self, x) -> np.ndarray:
        """Pointwise derivative, (N, p, q); analytic when available."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.jac is not None:
            return np.asarray(self.jac(x), dtype=float).reshape(len(x), self.out_dim, self.in_dim)
        h = fd_step(x)
        out = np.empty((len(x), self.out_dim, self.in_dim))
        for k in range(self.in_dim):
            e = np.zeros_like(x)
            e[:, k] = h
            out[:, :, k] = (self(x + e) - self(x - e)) / (2 * h[:, None])
        return out

    @property
    def mode(self) -> str:
        return "analytic-sampled" if self.jac is not None else "finite-difference"


def affine(a, b=None, name="affine") -> LipschitzFunction:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.zeros(a.shape[0]) if b is None else np.asarray(b, dtype=float)
    return LipschitzFunction(
        lambda x: x @ a.T + b, a.shape[1], a.shape[0],
        jac=lambda x: np.broadcast_to(a, (len(x),) + a.shape).copy(),
        lip=float(np.linalg.norm(a, 2)), name=name)


def compose(g: LipschitzFunction, f: LipschitzFunction, name="") -> LipschitzFunction:
    """g ∘ f; chain-rule derivative wherever both factors are differentiable."""
    jac = None
    if g.jac is not None and f.jac is not None:
        def jac(x):
            return np.einsum("nij,njk->nik", g.jacobian(f(x)), f.jacobian(x))

    def diff(x):
        return f.is_differentiable(x) & g.is_differentiable(f(x))

    lip = g.lip * f.lip if g.lip is not None and f.lip is not None else None
    return LipschitzFunction(lambda x: g(f(x)), f.in_dim, g.out_dim, jac, diff, lip,
                             name or f"{g.name}o{f.name}")


def sample_ball(center, radius: float, n: int, seed: int) -> np.ndarray:
    """Uniform points in the closed ball; a larger ``n`` extends the smaller draw."""
    center = np.asarray(center, dtype=float)
    q = center.size
    z = np.random.default_rng(seed).standard_normal((n, q + 1))
    dirs = z[:, :q] / np.linalg.norm(z[:, :q], axis=1, keepdims=True)
    r = radius * ndtr(z[:, q]) ** (1.0 / q)
    return center + dirs * r[:, None]


@dataclass(frozen=True)
class JacobianEstimate:
    at: np.ndarray
    radius: float
    set: MatrixSet
    n_samples: int
    mode: str

    @property
    def generators(self) -> np.ndarray:
        return self.set.generators


def jacobian_samples(f: LipschitzFunction, pts: np.ndarray) -> np.ndarray:
    ok = f.is_differentiable(pts)
    if not np.any(ok):
        raise DegenerateSample("no sampled point is a differentiability point")
    return f.jacobian(pts[ok])


def clarke_jacobian(f: LipschitzFunction, x, radius: float, n_samples: int = 200,
                    seed: int = 0) -> JacobianEstimate:
    if radius <= 0:
        raise ValueError("radius must be positive")
    x = np.asarray(x, dtype=float).ravel()
    pts = sample_ball(x, radius, n_samples, seed)
    gens = reduce_generators(jacobian_samples(f, pts))
    return JacobianEstimate(x, radius, MatrixSet(gens), n_samples, f.mode)


def chart_pullback(f: LipschitzFunction, chart) -> LipschitzFunction:
    """f ∘ ψ⁻¹ as a function of chart coordinates."""
    jac = None
    if f.jac is not None:
        def jac(v):
            return np.einsum("nij,njk->nik", f.jacobian(chart.inverse(v)), chart.inverse_jac(v))
    return LipschitzFunction(lambda v: f(chart.inverse(v)), chart.dim, f.out_dim, jac,
                             lambda v: f.is_differentiable(chart.inverse(v)), None,
                             f"{f.name}@{chart.name}")


def manifold_jacobian(f: LipschitzFunction, m: LipschitzManifold, u, radius: float,
                      n_samples: int = 200, seed: int = 0) -> JacobianEstimate:
    """Hull over every covering chart of the Clarke Jacobian of f ∘ ψ⁻¹ at ψ(u)."""
    u = np.asarray(u, dtype=float).ravel()
    mats = []
    for chart in charts_containing(m, u):
        v = chart.forward(u[None])[0]
        r = min(radius, 0.999 * float(chart.region.margin(v[None])[0]))
        pts = sample_ball(v, r, n_samples, seed)
        mats.append(jacobian_samples(chart_pullback(f, chart), pts))
    gens = reduce_generators(np.concatenate(mats))
    return JacobianEstimate(u, radius, MatrixSet(gens), n_samples, f.mode)


def partial_jacobian(j: JacobianEstimate, first_block: int) -> JacobianEstimate:
    """Keep the first ``first_block`` columns of every generator."""
    if not 0 < first_block < j.set.cols:
        raise ValueError(f"first_block must lie in (0, {j.set.cols}), got {first_block}")
    gens = reduce_generators(j.generators[:, :, :first_block])
    return JacobianEstimate(j.at, j.radius, MatrixSet(gens, hull=j.set.hull), j.n_samples, j.mode)


def mvt_certificate(f: LipschitzFunction, x, y, n_samples: int = 100, seed: int = 0):
    """Matrix P in the hull of Jacobians along [x, y] closest to solving f(x)-f(y) = P(x-y).

    Returns ``(P, residual)``; the residual shrinks to zero as the segment is
    sampled more finely.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    rng = np.random.default_rng(seed)
    # stratified points: one per cell of a uniform partition of [0, 1]
    t = (np.arange(n_samples) + rng.random(n_samples)) / n_samples
    pts = x[None] + t[:, None] * (y - x)[None]
    gens = reduce_generators(jacobian_samples(f, pts))
    dx = x - y
    a = np.einsum("kij,j->ik", gens, dx)
    b = f(x) - f(y)
    w = simplex_lstsq(a, b)
    p = np.einsum("k,kij->ij", w, gens)
    return p, float(np.linalg.norm(b - p @ dx))


def chain_rule_check(g: LipschitzFunction, f: LipschitzFunction, x, radius: float,
                     n_samples: int = 200, seed: int = 0) -> float:
    """Largest distance from a generator of ∂(g∘f)(x) to co{∂g(f(x)) ∂f(x)}."""
    x = np.asarray(x, dtype=float).ravel()
    lhs = clarke_jacobian(compose(g, f), x, radius, n_samples, seed)
    df = clarke_jacobian(f, x, radius, n_samples, seed)
    # f maps B(x, r) into B(f(x), Lip(f) r), so that is where ∂g must be sampled
    lip_f = f.lip if f.lip is not None else max(float(np.linalg.norm(m, 2)) for m in df.generators)
    dg = clarke_jacobian(g, f(x), max(lip_f, 1e-12) * radius, n_samples, seed + 1)
    products = np.einsum("aij,bjk->abik", dg.generators, df.generators)
    rhs = reduce_generators(products.reshape((-1,) + products.shape[2:]))
    return max(hull_distance(m, rhs) for m in lhs.generators)


def usc_modulus(f: LipschitzFunction, x, eps: float, grid, radius: Optional[float] = None,
                n_samples: int = 64, seed: int = 0) -> float:
    """Largest grid radius on which sampled derivatives stay eps-close to the hull at x.

    Returns 0 when even the smallest radius fails.
    """
    x = np.asarray(x, dtype=float).ravel()
    grid = np.sort(np.asarray(grid, dtype=float))
    r0 = radius if radius is not None else grid[0] / 10
    base = clarke_jacobian(f, x, r0, n_samples, seed).generators
    best = 0.0
    eye = np.eye(x.size)
    for k, delta in enumerate(grid):
        pts = np.concatenate([x + delta * eye, x - delta * eye,
                              sample_ball(x, delta, n_samples, seed + 1 + k)])
        mats = reduce_generators(jacobian_samples(f, pts))
        if any(hull_distance(m, base) > eps for m in mats):
            break
        best = float(delta)
    return best


def lipschitz_estimate(f: LipschitzFunction, center, radius: float, n_pairs: int = 10_000,
                       seed: int = 0, safety: float = 1.05) -> float:
    """Sampled Lipschitz constant on a ball, inflated by ``safety``."""
    center = np.asarray(center, dtype=float).ravel()
    a = sample_ball(center, radius, n_pairs, seed)
    b = sample_ball(center, radius, n_pairs, seed + 1)
    # half the pairs are close, to see local slopes near kinks
    half = n_pairs // 2
    b[:half] = a[:half] + (b[:half] - center) * 1e-2
    num = np.linalg.norm(f(a) - f(b), axis=1)
    den = np.linalg.norm(a - b, axis=1)
    ok = den > 0
    return safety * float(np.max(num[ok] / den[ok]))
