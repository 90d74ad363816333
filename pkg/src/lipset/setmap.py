"""Constrained set-valued maps U(x) = {u in M : c(u, x) in C}.

This module holds the constraint systems themselves, the chart-wise
constraint-qualification check, the constants (λ, s, L) of the Lipschitz
estimate, the selection map that tracks a feasible point as the parameter
moves, and the Hausdorff-metric verifications.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import CQViolated, ConstraintDrift, EmptyFeasibleSet, NotOnManifold
from .hausdorff import cloud_spacing, hausdorff_distance, nearest_distances
from .ift import IFTProblem, IFTSolution, certify, solve_implicit
from .jacobian import LipschitzFunction, chart_pullback, clarke_jacobian, partial_jacobian
from .manifold import (LipschitzManifold, charts_containing, lip_M, product_with_open_set,
                       sample_manifold)
from .matrixset import (MatrixSet, MultiIndex, complement_matrix_D, enumerate_multi_indices,
                        farthest_point_indices, in_invertibility_class, inverse_norms,
                        inverse_set_norm)
from .radius import Delta_at, jacobian_field, uniform_radius_Delta

EQUALITY_TOL = 1e-8
TAU_SAFETY = 1.05
NEWTON_STARTS = 3
DIVERGENCE_RATIO = 10.0


@dataclass(frozen=True)
class TargetSet:
    """C as a single point (equality constraints) or a closed box."""

    kind: str
    lo: np.ndarray
    hi: np.ndarray
    tolerance: float = EQUALITY_TOL

    def __post_init__(self):
        object.__setattr__(self, "lo", np.atleast_1d(np.asarray(self.lo, dtype=float)))
        object.__setattr__(self, "hi", np.atleast_1d(np.asarray(self.hi, dtype=float)))
        if self.kind not in ("point", "box"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if np.any(self.lo > self.hi) or self.tolerance < 0:
            raise ValueError("empty box or negative tolerance")

    @classmethod
    def point(cls, value, tolerance=EQUALITY_TOL):
        return cls("point", value, value, tolerance)

    @classmethod
    def box(cls, lo, hi, tolerance=0.0):
        return cls("box", lo, hi, tolerance)

    @property
    def value(self) -> np.ndarray:
        return self.lo

    def contains(self, z) -> np.ndarray:
        z = np.atleast_2d(z)
        return np.all((z >= self.lo - self.tolerance) & (z <= self.hi + self.tolerance), axis=1)


@dataclass(frozen=True)
class ConstraintSystem:
    """Manifold M, constraint c on M × A with values in R^j, target C, parameters X ⊆ A."""

    name: str
    manifold: LipschitzManifold
    c: LipschitzFunction
    lip_c: float
    target: TargetSet
    x_lo: tuple
    x_hi: tuple
    a_lo: tuple
    a_hi: tuple
    description: str = ""

    def __post_init__(self):
        if self.j > self.d:
            raise ValueError(f"need j <= d, got j={self.j}, d={self.d}")
        if self.c.in_dim != self.n + self.m:
            raise ValueError("c must be defined on R^n x R^m")
        if np.any(np.array(self.x_lo) <= np.array(self.a_lo)) or np.any(np.array(self.x_hi) >= np.array(self.a_hi)):
            raise ValueError("X must lie inside the open box A")

    @property
    def n(self) -> int:
        return self.manifold.ambient_dim

    @property
    def d(self) -> int:
        return self.manifold.dim

    @property
    def j(self) -> int:
        return self.c.out_dim

    @property
    def m(self) -> int:
        return len(self.x_lo)

    @property
    def lip_M(self) -> float:
        return lip_M(self.manifold)

    @cached_property
    def product(self) -> LipschitzManifold:
        return product_with_open_set(self.manifold, self.a_lo, self.a_hi)

    def chart_constraint(self, k: int) -> LipschitzFunction:
        """(v, y) -> c(ψ_k⁻¹(v), y) for the k-th chart of M."""
        return chart_pullback(self.c, self.product.charts[k])

    def covering_charts(self, u) -> list[int]:
        found = charts_containing(self.manifold, u)
        return [i for i, ch in enumerate(self.manifold.charts) if any(ch is f for f in found)]

    def constraint(self, u, x) -> np.ndarray:
        u, x = np.atleast_2d(u), np.atleast_2d(x)
        x = np.broadcast_to(x, (len(u), self.m))
        return self.c(np.concatenate([u, x], axis=1))

    def feasible(self, u, x) -> np.ndarray:
        return self.target.contains(self.constraint(u, x))


# ---------------------------------------------------------------------------
# feasible clouds


def _cell_centres(lo: float, hi: float, k: int) -> np.ndarray:
    return lo + (np.arange(k) + 0.5) * (hi - lo) / k


def _chart_solutions(sys: ConstraintSystem, k: int, pi: MultiIndex, xs: np.ndarray, n_grid: int,
                     max_iter: int = 30):
    """Solve c(ψ⁻¹(v), x) = C for the π-coordinates of v on a grid of the others.

    Returns (ambient points, index into xs) of converged solutions.
    """
    base = sys.manifold.charts[k]
    phi = sys.chart_constraint(k)
    d, j, m = sys.d, sys.j, sys.m
    lo, hi = base.region.bounds
    sel = pi.zero_based
    comp = [i - 1 for i in pi.complement]
    axes = [_cell_centres(lo[i], hi[i], n_grid) for i in comp]
    axes += [_cell_centres(lo[i], hi[i], NEWTON_STARTS) for i in sel]
    mesh = np.meshgrid(*axes, indexing="ij")
    cols = np.stack([g.ravel() for g in mesh], axis=1)
    v0 = np.empty((len(cols), d))
    v0[:, comp] = cols[:, :len(comp)]
    v0[:, sel] = cols[:, len(comp):]
    v0 = v0[base.region.contains(v0)]
    if len(v0) == 0:
        return np.empty((0, sys.n)), np.empty(0, dtype=int)
    xi = np.repeat(np.arange(len(xs)), len(v0))
    v = np.tile(v0, (len(xs), 1))
    y = xs[xi]
    goal = sys.target.value
    found_v, found_i = [], []
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        for _ in range(max_iter):
            if len(v) == 0:
                break
            z = np.concatenate([v, y], axis=1)
            g = phi(z) - goal
            small = np.all(np.abs(g) <= 1e-13, axis=1)
            found_v.append(v[small])
            found_i.append(xi[small])
            keep = ~small
            v, y, xi, z, g = v[keep], y[keep], xi[keep], z[keep], g[keep]
            jac = phi.jacobian(z)[:, :, sel]
            if j == 1:
                step = g / jac[:, 0, :1]
            else:
                step = np.full((len(v), j), np.nan)
                ok = np.abs(np.linalg.det(jac)) > 1e-14
                if np.any(ok):
                    step[ok] = np.linalg.solve(jac[ok], g[ok][:, :, None])[:, :, 0]
            v = v.copy()
            v[:, sel] -= step
            keep = np.all(np.isfinite(v), axis=1)
            keep[keep] = base.region.contains(v[keep])
            v, y, xi = v[keep], y[keep], xi[keep]
    if not found_v:
        return np.empty((0, sys.n)), np.empty(0, dtype=int)
    v, xi = np.concatenate(found_v), np.concatenate(found_i)
    u = base.inverse(v)
    ok = np.all(np.isfinite(u), axis=1)
    if base.selector is not None:
        ok &= base.selector(u)
    u, xi = u[ok], xi[ok]
    res = np.abs(sys.constraint(u, xs[xi]) - goal).max(axis=1) if len(u) else np.empty(0)
    keep = res <= sys.target.tolerance
    return u[keep], xi[keep]


def _dedupe(cloud: np.ndarray) -> np.ndarray:
    if len(cloud) == 0:
        return cloud
    _, idx = np.unique(np.round(cloud, 9), axis=0, return_index=True)
    return cloud[np.sort(idx)][np.lexsort(cloud[np.sort(idx)].T[::-1])]


def feasible_clouds(sys: ConstraintSystem, xs, n_points: int = 1000, seed: int = 0,
                    chunk: int = 16) -> list[np.ndarray]:
    """Point clouds of U(x) for every row of ``xs``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[1] != sys.m:
        xs = xs.reshape(-1, sys.m)
    if sys.target.kind == "box" and np.any(sys.target.lo < sys.target.hi):
        return [_box_cloud(sys, x, n_points, seed) for x in xs]
    n_charts = len(sys.manifold.charts)
    free = sys.d - sys.j
    n_grid = max(4, math.ceil((2 * n_points / n_charts) ** (1 / free))) if free else 1
    clouds = [[] for _ in xs]
    for start in range(0, len(xs), chunk):
        block = xs[start:start + chunk]
        for k in range(n_charts):
            for pi in enumerate_multi_indices(sys.d, sys.j):
                u, xi = _chart_solutions(sys, k, pi, block, n_grid)
                for i in np.unique(xi):
                    clouds[start + i].append(u[xi == i])
    out = []
    for x, parts in zip(xs, clouds):
        cloud = _dedupe(np.concatenate(parts)) if parts else np.empty((0, sys.n))
        if len(cloud) == 0:
            raise EmptyFeasibleSet(f"{sys.name}: no feasible point found at x={x.tolist()}")
        out.append(cloud)
    return out


def _box_cloud(sys, x, n_points, seed):
    pool = sample_manifold(sys.manifold, 4 * n_points, seed)
    return _dedupe(pool[sys.feasible(pool, x)])


def feasible_set(sys: ConstraintSystem, x, n_points: int = 1000, seed: int = 0) -> np.ndarray:
    return feasible_clouds(sys, np.atleast_1d(np.asarray(x, dtype=float))[None], n_points, seed)[0]


# ---------------------------------------------------------------------------
# constraint qualification


@dataclass
class CQEntry:
    u: np.ndarray
    x: np.ndarray
    # chart index -> list of (π, inverse norm of E(u, x, π)), inf for singular
    per_chart: dict
    best_chart: int

    @property
    def invertible(self) -> list:
        return [(k, pi) for k, rows in self.per_chart.items() for pi, t in rows if math.isfinite(t)]

    @property
    def tau_min(self) -> float:
        return min(t for rows in self.per_chart.values() for _, t in rows)

    @property
    def tau_sup(self) -> float:
        return max((t for rows in self.per_chart.values() for _, t in rows if math.isfinite(t)),
                   default=math.inf)

    @property
    def holds(self) -> bool:
        return math.isfinite(self.tau_min)

    def best_pi(self) -> MultiIndex:
        return min(self.per_chart[self.best_chart], key=lambda r: r[1])[0]


def partial_constraint_jacobian(sys: ConstraintSystem, k: int, u, x, radius: float = 1e-6,
                                n_samples: int = 32, seed: int = 0) -> MatrixSet:
    """Sampled ∂_u c(u, x) read in the k-th chart: j×d generators."""
    chart = sys.product.charts[k]
    z = chart.forward(np.concatenate([u, x])[None])[0]
    # c is defined for every parameter, so only the chart of M limits the ball
    r = min(radius, 0.5 * float(sys.manifold.charts[k].region.margin(z[None, :sys.d])[0]))
    est = clarke_jacobian(sys.chart_constraint(k), z, r, n_samples, seed)
    return partial_jacobian(est, sys.d).set


def cq_check(sys: ConstraintSystem, u, x, radius: float = 1e-6, n_samples: int = 32,
             seed: int = 0, charts=None) -> CQEntry:
    u = np.asarray(u, dtype=float).ravel()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not sys.feasible(u, x)[0]:
        raise NotOnManifold(f"u={u.tolist()} is not in U(x={x.tolist()})")
    ks = sys.covering_charts(u) if charts is None else list(charts)
    per_chart = {}
    for k in ks:
        p = partial_constraint_jacobian(sys, k, u, x, radius, n_samples, seed)
        rows = []
        for pi in enumerate_multi_indices(sys.d, sys.j):
            e = MatrixSet(p.generators[:, :, pi.zero_based])
            rows.append((pi, inverse_set_norm(e, seed=seed)))
        per_chart[k] = rows
    best = min(per_chart, key=lambda k: min(t for _, t in per_chart[k]))
    entry = CQEntry(u, x, per_chart, best)
    if not entry.holds:
        raise CQViolated(f"{sys.name}: no invertible column selection at u={u.tolist()}, x={x.tolist()}")
    return entry


@dataclass(frozen=True)
class TauReport:
    min_over_pi: float
    sup_over_pi: float
    sup_over_pi_refined: float
    divergent: bool
    mode: str
    n_points: int

    @property
    def tau(self) -> float:
        raw = self.min_over_pi if self.mode == "min-over-pi" else self.sup_over_pi
        return TAU_SAFETY * raw


def omega_samples(sys: ConstraintSystem, n_x: int, n_u: int, x_lo=None, x_hi=None,
                  cloud_size: int = 400) -> list:
    """Deterministic (u, x) samples: x on a grid, u thinned from each U(x)."""
    lo = np.array(sys.x_lo if x_lo is None else x_lo, dtype=float)
    hi = np.array(sys.x_hi if x_hi is None else x_hi, dtype=float)
    ts = np.linspace(0.0, 1.0, n_x)
    xs = lo[None] + ts[:, None] * (hi - lo)[None]
    out = []
    for x, cloud in zip(xs, feasible_clouds(sys, xs, cloud_size)):
        for i in np.sort(farthest_point_indices(cloud, n_u)):
            out.append((cloud[i], x))
    return out


def tau_estimate(sys: ConstraintSystem, n_x: int = 9, n_u: int = 16, seed: int = 0,
                 mode: str = "min-over-pi") -> TauReport:
    """Sampled bound on the inverse norms of the column selections.

    ``min-over-pi`` takes, at each (u, x), the best chart and selection (what
    the Lipschitz construction consumes); ``sup-over-pi`` takes the worst
    invertible one.  The sup reading is flagged divergent when it is not
    finite, keeps growing on a doubled sample, or exceeds the min reading by
    more than a factor ``DIVERGENCE_RATIO``.
    """
    if mode not in ("min-over-pi", "sup-over-pi"):
        raise ValueError(f"unknown mode {mode!r}")

    def sweep(nu):
        lo_v, sup_v = 0.0, 0.0
        pts = omega_samples(sys, n_x, nu)
        for u, x in pts:
            e = cq_check(sys, u, x, seed=seed)
            lo_v = max(lo_v, e.tau_min)
            sup_v = max(sup_v, e.tau_sup)
        return lo_v, sup_v, len(pts)

    lo_v, sup_v, npts = sweep(n_u)
    _, sup2, _ = sweep(2 * n_u)
    divergent = (not math.isfinite(sup2)) or sup2 > 1.1 * sup_v or sup_v > DIVERGENCE_RATIO * lo_v
    return TauReport(lo_v, sup_v, sup2, bool(divergent), mode, npts)


# ---------------------------------------------------------------------------
# constants and the local selection map


def lambda_bound(tau: float, lip_c: float, lip_m: float, d: int, j: int) -> float:
    """Cofactor bound on ‖H⁻¹‖ for H = [P; D_π] with |det P_π| > τ^-j.

    Entries of H are bounded by B = Lip(c)·max(Lip_M, 1) + dj, every
    (d-1)-minor by (d-1)!·B^(d-1), hence ‖Cof H‖ ≤ d!·B^(d-1).
    """
    b = max(lip_c * max(lip_m, 1.0) + d * j, 1.0)
    return math.factorial(d) * b ** (d - 1) * tau ** j


@dataclass(frozen=True)
class Constants:
    lam: float
    s: float
    L: float


def constants_for(tau: float, lip_c: float, lip_m: float, d: int, j: int) -> Constants:
    lam = lambda_bound(tau, lip_c, lip_m, d, j)
    s = 1.0 + lam * (1.0 + lip_c * max(lip_m, 1.0) + d * j)
    return Constants(lam, s, s * lip_m)


def block_matrix(p, pi: MultiIndex) -> np.ndarray:
    """H = [P; D_π], the square completion of a j×d block P."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if p.shape[0] == p.shape[1]:
        return p.copy()
    return np.concatenate([p, complement_matrix_D(pi)], axis=0)


@dataclass(frozen=True)
class LambdaCheck:
    n_matrices: int
    violations: int
    worst_ratio: float
    det_error: float


def lambda_bound_check(tau: float, lip_c: float, lip_m: float, d: int, j: int,
                       n_matrices: int = 1000, seed: int = 0) -> LambdaCheck:
    """Brute-force test of ‖H⁻¹‖ ≤ λ and |det H| = |det P_π| on random admissible blocks.

    P has operator norm at most Lip(c)·max(Lip_M, 1) and some π with
    ‖P_π⁻¹‖ < τ; draws that miss the class are redrawn.
    """
    rng = np.random.default_rng(seed)
    lam = lambda_bound(tau, lip_c, lip_m, d, j)
    bound = lip_c * max(lip_m, 1.0)
    pis = enumerate_multi_indices(d, j)
    violations, worst, det_err, done = 0, 0.0, 0.0, 0
    while done < n_matrices:
        p = rng.standard_normal((j, d))
        p *= bound * rng.random() ** (1.0 / (j * d)) / np.linalg.norm(p, 2)
        inv = inverse_norms(np.stack([p[:, pi.zero_based] for pi in pis]))
        ok = np.flatnonzero(inv < tau)
        if len(ok) == 0:
            continue
        pi = pis[int(ok[rng.integers(len(ok))])]
        h = block_matrix(p, pi)
        ratio = float(inverse_norms(h[None])[0]) / lam
        worst = max(worst, ratio)
        violations += ratio > 1.0
        dp = abs(np.linalg.det(p[:, pi.zero_based]))
        det_err = max(det_err, float(abs(abs(np.linalg.det(h)) - dp) / max(dp, 1e-300)))
        done += 1
    return LambdaCheck(n_matrices, int(violations), worst, det_err)


def predicted_constants(sys: ConstraintSystem, tau: float) -> Constants:
    return constants_for(tau, sys.lip_c, sys.lip_M, sys.d, sys.j)


def build_F(sys: ConstraintSystem, u, x, chart: int, pi: MultiIndex) -> IFTProblem:
    """Square system F(v, y) whose implicit function tracks u ∈ U(x) inside one chart.

    For j < d the constraint rows are completed by freezing the coordinates
    outside π: F = [c(ψ⁻¹(v), y) - c(u, x); D_π (v - ψ(u))].
    """
    u = np.asarray(u, dtype=float).ravel()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d, j, m = sys.d, sys.j, sys.m
    if pi.d != d or pi.j != j:
        raise ValueError(f"multi-index {pi} does not belong to Pi({d},{j})")
    pc = sys.product.charts[chart]
    if not pc.domain_test(np.concatenate([u, x])[None])[0]:
        raise ValueError(f"u is not in the domain of chart {chart}")
    phi = sys.chart_constraint(chart)
    z0 = pc.forward(np.concatenate([u, x])[None])[0]
    v0 = z0[:d]
    c0 = sys.constraint(u, x)[0]
    dm = complement_matrix_D(pi) if j < d else np.zeros((0, d))

    def func(z):
        return np.concatenate([phi(z) - c0, (z[:, :d] - v0) @ dm.T], axis=1)

    jac = None
    if phi.jac is not None:
        lower = np.concatenate([dm, np.zeros((d - j, m))], axis=1)

        def jac(z):
            low = np.broadcast_to(lower, (len(z),) + lower.shape)
            return np.concatenate([phi.jacobian(z), low], axis=1)

    F = LipschitzFunction(func, d + m, d, jac, phi.differentiable, None, f"F[{sys.name},{chart},{pi}]")
    r0 = 0.999 * float(pc.region.margin(z0[None])[0])
    lipF = sys.lip_c * max(sys.lip_M, 1.0) + 1.0
    return IFTProblem(F, v0, x, r0, lipF)


def selection_track(sys: ConstraintSystem, u, x, y, pi: MultiIndex, chart: int,
                    sol: Optional[IFTSolution] = None, enforce_domain: bool = True) -> np.ndarray:
    """Feasible point of U(y) near u ∈ U(x): u' = ψ⁻¹(g(y))."""
    if sol is None:
        sol = certify(build_F(sys, u, x, chart, pi))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    v = solve_implicit(sol, y, enforce_domain=enforce_domain)
    u_new = sys.manifold.charts[chart].inverse(v[None])[0]
    if not sys.feasible(u_new, y)[0]:
        raise ConstraintDrift(f"tracked point violates the constraint at y={y.tolist()}")
    return u_new


# ---------------------------------------------------------------------------
# Hausdorff verification


@dataclass(frozen=True)
class HausdorffReport:
    # rows of (x1..., x2..., d_H, ratio); x1, x2 flattened
    pairs: np.ndarray
    empirical_modulus: float
    predicted_L: float
    cloud_size: int
    spacing: float
    slack: float
    tau: float

    @property
    def dx(self) -> np.ndarray:
        return self.pairs[:, -3]

    @property
    def dH(self) -> np.ndarray:
        return self.pairs[:, -2]

    @property
    def ratio(self) -> np.ndarray:
        return self.pairs[:, -1]

    @property
    def passed(self) -> bool:
        return self.empirical_modulus <= self.predicted_L + self.slack


def _spacing(sys: ConstraintSystem, cloud: np.ndarray) -> float:
    # for j = d the feasible sets are finite and each cloud is the whole set
    return cloud_spacing(cloud) if sys.d > sys.j else 0.0


def verify_lipschitz(sys: ConstraintSystem, n_pairs: int = 50, cloud_size: int = 10_000,
                     seed: int = 0, tau: Optional[float] = None) -> HausdorffReport:
    """Sample parameter pairs, compare d_H(U(x1), U(x2))/|x1-x2| with the predicted L."""
    if tau is None:
        tau = tau_estimate(sys, seed=seed).tau
    const = predicted_constants(sys, tau)
    rng = np.random.default_rng(seed)
    lo, hi = np.array(sys.x_lo), np.array(sys.x_hi)
    xs = lo + (hi - lo) * rng.random((n_pairs, 2, sys.m))
    clouds = feasible_clouds(sys, xs.reshape(-1, sys.m), cloud_size)
    rows, spacing, min_dx = [], 0.0, math.inf
    for i in range(n_pairs):
        a, b = clouds[2 * i], clouds[2 * i + 1]
        dx = float(np.linalg.norm(xs[i, 0] - xs[i, 1]))
        dh = hausdorff_distance(a, b)
        spacing = max(spacing, _spacing(sys, a), _spacing(sys, b))
        ratio = dh / dx if dx > 0 else 0.0
        if dx > 0:
            min_dx = min(min_dx, dx)
        rows.append(np.concatenate([xs[i, 0], xs[i, 1], [dx, dh, ratio]]))
    pairs = np.array(rows)
    slack = 2 * spacing / min_dx if math.isfinite(min_dx) else 0.0
    modulus = float(pairs[:, -1].max()) if len(pairs) else 0.0
    return HausdorffReport(pairs, modulus, const.L, cloud_size, spacing, slack, tau)


@dataclass(frozen=True)
class ChainResult:
    ok: bool
    h: int
    step_radius: float
    failing_step: Optional[int]
    worst_excess: float


def subdivision_count(s: float, dx: float, eta0: float) -> int:
    """Smallest integer h > 2 s |x2 - x1| / η₀."""
    return int(math.floor(2 * s * dx / eta0)) + 1


def chain_subdivision_check(sys: ConstraintSystem, x1, x2, eta0: float, s: float, L: float,
                            cloud_size: int = 64, seed: int = 0) -> ChainResult:
    """Check Ũ(t_i) ⊆ Ũ(t_{i+1}) + (L|x2-x1|/h + slack)B along t_i = i/h.

    The slack is twice the larger cloud spacing of the two clouds compared.
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    dx = float(np.linalg.norm(x2 - x1))
    h = subdivision_count(s, dx, eta0)
    ts = np.arange(h + 1) / h
    radius = L * dx / h
    worst, failing = -math.inf, None
    prev, prev_sp, step = None, 0.0, 0
    for start in range(0, h + 1, 512):
        xs = x1[None] + ts[start:start + 512, None] * (x2 - x1)[None]
        for cloud in feasible_clouds(sys, xs, cloud_size, seed):
            sp = _spacing(sys, cloud)
            if prev is not None:
                gap = float(nearest_distances(prev, cloud, "brute").max())
                excess = gap - (radius + 2 * max(sp, prev_sp))
                worst = max(worst, excess)
                if excess > 0 and failing is None:
                    failing = step
                step += 1
            prev, prev_sp = cloud, sp
    return ChainResult(failing is None, h, radius, failing, worst)


# ---------------------------------------------------------------------------
# uniform radius over the compact set of feasible (u, x)


def radius_family(sys: ConstraintSystem, tau: float):
    """ω = (u, x) -> admissible (field, point) pairs for the uniform radius.

    For each chart around u and each selection β whose column block is in the
    τ-invertibility class, the field is v ↦ [∂_v c(ψ⁻¹(v), y); D_β] in the
    product chart, defined up to the chart boundary.
    """
    n, d, j = sys.n, sys.d, sys.j

    def family(omega):
        omega = np.asarray(omega, dtype=float).ravel()
        u, x = omega[:n], omega[n:]
        pairs = []
        for k in sys.covering_charts(u):
            pc = sys.product.charts[k]
            z = pc.forward(omega[None])[0]
            cap = 0.999 * float(pc.region.margin(z[None])[0])
            p = partial_constraint_jacobian(sys, k, u, x)
            for beta in enumerate_multi_indices(d, j):
                if not in_invertibility_class(MatrixSet(p.generators[:, :, beta.zero_based]), tau):
                    continue
                extra = complement_matrix_D(beta) if j < d else None
                field = jacobian_field(sys.chart_constraint(k), cap, columns=d, extra_rows=extra,
                                       name=f"{sys.name}:{k}:{beta}")
                pairs.append((field, z))
        return pairs

    return family


def uniform_radius(sys: ConstraintSystem, tau: float, mu: float, n_x: int = 9, n_u: int = 16,
                   x_lo=None, x_hi=None, n_ball_samples: int = 16, grid_divisions: int = 50):
    """(Δ₀, argmin ω, values) over a deterministic sample of feasible (u, x)."""
    omegas = [np.concatenate([u, x]) for u, x in omega_samples(sys, n_x, n_u, x_lo, x_hi)]
    return uniform_radius_Delta(radius_family(sys, tau), omegas, mu, n_ball_samples=n_ball_samples,
                                grid_divisions=grid_divisions)


def Delta_evaluator(sys: ConstraintSystem, tau: float, mu: float, n_ball_samples: int = 16,
                    grid_divisions: int = 50):
    family = radius_family(sys, tau)
    return lambda omega: Delta_at(family, omega, mu, n_ball_samples=n_ball_samples,
                                  grid_divisions=grid_divisions)


def approach_sequences(sys: ConstraintSystem, u, x, n_sequences: int = 20, length: int = 8,
                       scale: float = 0.05, seed: int = 0) -> list:
    """Feasible sequences (u_k, x_k) -> (u, x) along random parameter directions.

    u_k is the tracked selection at x_k, so every point stays in the set of
    feasible pairs.
    """
    u = np.asarray(u, dtype=float).ravel()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    e = cq_check(sys, u, x, seed=seed)
    k, pi = e.best_chart, e.best_pi()
    sol = certify(build_F(sys, u, x, k, pi), seed=seed)
    rng = np.random.default_rng(seed)
    lo, hi = np.array(sys.x_lo), np.array(sys.x_hi)
    out = []
    for _ in range(n_sequences):
        direction = rng.standard_normal(sys.m)
        direction /= np.linalg.norm(direction)
        seq = []
        for i in range(length):
            step = min(scale, 0.999 * sol.domain_radius) * 0.5 ** i * rng.uniform(0.5, 1.0)
            xk = np.clip(x + step * direction, lo, hi)
            uk = selection_track(sys, u, x, xk, pi, k, sol=sol)
            seq.append(np.concatenate([uk, xk]))
        out.append(seq)
    return out
