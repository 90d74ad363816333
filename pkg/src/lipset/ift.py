"""Certified Lipschitz implicit functions and open-mapping verifiers.

Given F(v0, y0) = 0 with an invertible partial Jacobian in v, ``certify``
computes the admissible parameter s, the invertibility radius of ∂_v F and
the resulting radius η_s; ``solve_implicit`` then evaluates the implicit
function g on B(y0, η_s / 2s) by semismooth Newton.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import Diverged, OutOfDomain, PreconditionViolated
from .jacobian import (LipschitzFunction, clarke_jacobian, lipschitz_estimate,
                       partial_jacobian, sample_ball)
from .matrixset import inverse_norms, inverse_set_norm
from .radius import RadiusCertificate, delta_radius, jacobian_field


@dataclass(frozen=True)
class IFTProblem:
    F: LipschitzFunction
    v0: np.ndarray
    y0: np.ndarray
    r0: float
    lipF: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "v0", np.atleast_1d(np.asarray(self.v0, dtype=float)))
        object.__setattr__(self, "y0", np.atleast_1d(np.asarray(self.y0, dtype=float)))
        if self.F.in_dim != self.d + self.m or self.F.out_dim != self.d:
            raise ValueError(f"F must map R^{self.d + self.m} to R^{self.d}")
        res = np.linalg.norm(self.F(self.z0))
        if res >= 1e-10:
            raise PreconditionViolated(f"|F(v0, y0)| = {res:.3g} is not zero")
        if self.lipF is None:
            lip = self.F.lip
            if lip is None:
                lip = lipschitz_estimate(self.F, self.z0, self.r0)
            object.__setattr__(self, "lipF", float(lip))

    @property
    def d(self) -> int:
        return self.v0.size

    @property
    def m(self) -> int:
        return self.y0.size

    @property
    def z0(self) -> np.ndarray:
        return np.concatenate([self.v0, self.y0])


@dataclass(frozen=True)
class IFTSolution:
    problem: IFTProblem
    s: float
    eta: float
    inv_norm: float
    radius_certificate: RadiusCertificate

    @property
    def lam(self) -> float:
        return self.radius_certificate.lam

    @property
    def domain_radius(self) -> float:
        return self.eta / (2 * self.s)


def augmented_function(p: IFTProblem) -> LipschitzFunction:
    """(v, y) -> (F(v, y), y)."""
    d, m = p.d, p.m
    F = p.F

    def func(z):
        return np.concatenate([F(z), z[:, d:]], axis=1)

    jac = None
    if F.jac is not None:
        def jac(z):
            out = np.zeros((len(z), d + m, d + m))
            out[:, :d, :] = F.jacobian(z)
            out[:, d:, d:] = np.eye(m)
            return out

    lip = None if p.lipF is None else math.hypot(p.lipF, 1.0)
    return LipschitzFunction(func, d + m, d + m, jac, F.differentiable, lip, f"aug({F.name})")


def center_inverse_norm(p: IFTProblem, radius: Optional[float] = None, n_samples: int = 64,
                        seed: int = 0) -> float:
    """Estimate of ‖∂_v F(v0, y0)⁻¹‖ from a small-ball Jacobian sample."""
    r = radius if radius is not None else 1e-6 * max(1.0, p.r0)
    est = clarke_jacobian(p.F, p.z0, r, n_samples, seed)
    return inverse_set_norm(partial_jacobian(est, p.d).set, seed=seed)


def admissible_s(lipF: float, inv_norm: float, margin: Optional[float] = None) -> float:
    """1 + (Lip(F) + 1)‖∂_v F⁻¹‖ plus a margin keeping the inequality strict."""
    if not math.isfinite(inv_norm):
        raise PreconditionViolated("partial Jacobian is singular at the base point")
    if margin is None:
        margin = 0.01 * (1.0 + lipF * inv_norm)
    return 1.0 + (lipF + 1.0) * inv_norm + margin


def certify(p: IFTProblem, s: Optional[float] = None, grid_step: Optional[float] = None,
            n_samples: int = 64, seed: int = 0) -> IFTSolution:
    inv = center_inverse_norm(p, n_samples=n_samples, seed=seed)
    if s is None:
        s = admissible_s(p.lipF, inv)
    lam = (s - 1.0) / (p.lipF + 1.0)
    if not inv < lam:
        raise PreconditionViolated(
            f"CQ failure: ‖∂_vF⁻¹‖ ≈ {inv:.6g} is not below (s-1)/(Lip(F)+1) = {lam:.6g}")
    field = jacobian_field(p.F, p.r0, columns=p.d, name=f"dvF({p.F.name})")
    cert = delta_radius(field, p.z0, lam, grid_step=grid_step, n_ball_samples=n_samples, seed=seed)
    return IFTSolution(p, float(s), 0.5 * cert.delta, inv, cert)


# ---------------------------------------------------------------------------
# semismooth Newton


def _best_generator(jac_fn: Callable, v: np.ndarray, seed: int, radius: float) -> np.ndarray:
    """Generator of the sampled generalized Jacobian with the smallest inverse norm."""
    pts = np.concatenate([v[None], sample_ball(v, radius, 4, seed)])
    mats = jac_fn(pts)
    return mats[int(np.argmin(inverse_norms(mats)))]


def semismooth_newton(fun: Callable, jac_fn: Callable, x0, tol: float = 1e-12,
                      max_iter: int = 50, accept: float = 1e-10, seed: int = 0) -> np.ndarray:
    """Solve fun(x) = 0 from x0 with damped generalized-Jacobian Newton steps.

    ``fun`` maps a point to a residual vector and ``jac_fn`` maps a stack of
    points to a stack of square matrices.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = fun(x)
    nr = float(np.linalg.norm(r))
    for it in range(max_iter):
        if nr <= tol:
            return x
        p = _best_generator(jac_fn, x, seed + it, 1e-9 * max(1.0, float(np.linalg.norm(x))))
        try:
            step = np.linalg.solve(p, r)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        for _ in range(40):
            x_new = x - t * step
            r_new = fun(x_new)
            n_new = float(np.linalg.norm(r_new))
            if n_new < nr or n_new <= tol:
                break
            t *= 0.5
        else:
            break
        moved = float(np.linalg.norm(x_new - x))
        x, r, nr = x_new, r_new, n_new
        if moved <= 1e-16 * max(1.0, float(np.linalg.norm(x))):
            break
    if nr <= accept:
        return x
    raise Diverged(f"residual {nr:.3g} after {max_iter} iterations")


def solve_implicit(sol: IFTSolution, y, tol: float = 1e-12, max_iter: int = 50,
                   start=None, enforce_domain: bool = True) -> np.ndarray:
    p = sol.problem
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if enforce_domain and not np.linalg.norm(y - p.y0) < sol.domain_radius:
        raise OutOfDomain(f"|y - y0| = {np.linalg.norm(y - p.y0):.6g} >= {sol.domain_radius:.6g}")
    d = p.d

    def fun(v):
        return p.F(np.concatenate([v, y]))

    def jac_fn(vs):
        z = np.concatenate([vs, np.broadcast_to(y, (len(vs), y.size))], axis=1)
        return p.F.jacobian(z)[:, :, :d]

    v = semismooth_newton(fun, jac_fn, p.v0 if start is None else start, tol, max_iter)
    if enforce_domain and not np.linalg.norm(v - p.v0) < sol.eta:
        raise Diverged(f"solution left the ball B(v0, eta={sol.eta:.6g})")
    return v


@dataclass(frozen=True)
class CenterSweep:
    dy: np.ndarray
    dg: np.ndarray
    residual: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        return self.dg / self.dy


def center_sweep(sol: IFTSolution, n_samples: int = 1000, seed: int = 0) -> CenterSweep:
    p = sol.problem
    ys = sample_ball(p.y0, sol.domain_radius, n_samples, seed)
    dy = np.linalg.norm(ys - p.y0, axis=1)
    ys, dy = ys[dy > 0], dy[dy > 0]
    # keep the sample strictly inside the open ball
    ys = p.y0 + (ys - p.y0) * (1 - 1e-12)
    dy = np.linalg.norm(ys - p.y0, axis=1)
    vs = np.array([solve_implicit(sol, y) for y in ys])
    res = np.linalg.norm(p.F(np.concatenate([vs, ys], axis=1)), axis=1)
    dg = np.linalg.norm(vs - p.v0, axis=1)
    return CenterSweep(dy, dg, res)


def verify_center_lipschitz(sol: IFTSolution, n_samples: int = 1000, seed: int = 0) -> float:
    """max |g(y) - g(y0)| / |y - y0| over sampled y in the certified ball."""
    return float(np.max(center_sweep(sol, n_samples, seed).ratio))


def uniqueness_spread(sol: IFTSolution, y, n_starts: int = 16, seed: int = 0) -> float:
    """Largest distance between solutions reached from perturbed starts in B(v0, eta)."""
    p = sol.problem
    ref = solve_implicit(sol, y)
    starts = sample_ball(p.v0, 0.999 * sol.eta, n_starts, seed)
    return max(float(np.linalg.norm(solve_implicit(sol, y, start=s) - ref)) for s in starts)


def open_mapping_lower_check(f: LipschitzFunction, xi0, lam: float, cert: RadiusCertificate,
                             n_samples: int = 10_000, seed: int = 0) -> int:
    """Count h with 0 < |h| < δ violating |f(ξ0 + h) - f(ξ0)| ≥ |h|/λ."""
    if not cert.delta > 0:
        raise PreconditionViolated("radius certificate must be positive")
    xi0 = np.asarray(xi0, dtype=float).ravel()
    h = sample_ball(np.zeros_like(xi0), cert.delta, n_samples, seed)
    nh = np.linalg.norm(h, axis=1)
    keep = (nh > 0) & (nh < cert.delta)
    h, nh = h[keep], nh[keep]
    lhs = np.linalg.norm(f(xi0 + h) - f(xi0)[None], axis=1)
    # relative slack for rounding in the difference
    return int(np.sum(lhs < nh / lam * (1 - 1e-12)))


def covering_inclusion_check(f: LipschitzFunction, xi0, lam: float, delta: float,
                             n_targets: int = 1000, tol: float = 1e-9, seed: int = 0) -> int:
    """Count targets in f(ξ0) + (δ/2λ)B that are not hit from inside ξ0 + δB."""
    xi0 = np.asarray(xi0, dtype=float).ravel()
    f0 = f(xi0)
    targets = sample_ball(f0, delta / (2 * lam), n_targets, seed)
    misses = 0
    for z in targets:
        try:
            xi = semismooth_newton(lambda x: f(x) - z, f.jacobian, xi0, tol=min(tol, 1e-12),
                                   accept=tol, seed=seed)
        except Diverged:
            misses += 1
            continue
        if not np.linalg.norm(xi - xi0) < delta:
            misses += 1
    return misses
