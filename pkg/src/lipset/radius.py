"""Invertibility radius of a matrix-set field and its uniform lower bound.

``delta_radius`` estimates the largest t for which every matrix in the hull
of S over the ball B(x, t) is invertible with inverse norm at most λ.  The
estimate is a grid search and is always reported on the conservative side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InadmissibleSample, PreconditionViolated
from .jacobian import LipschitzFunction, sample_ball
from .matrixset import DEFAULT_HULL_SAMPLES, MatrixSet, inverse_set_norm, reduce_generators

DEFAULT_GRID_DIVISIONS = 200


@dataclass(frozen=True)
class SetValuedField:
    """Square-matrix-set field defined on the open ball of radius ``cap``.

    ``value`` maps points (N, q) to matrices (N, p, p) or to generator
    stacks (N, k, p, p).
    """

    dim: int
    cap: float
    value: Callable
    name: str = ""

    def matrices(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        m = np.asarray(self.value(pts), dtype=float)
        if m.ndim == 4:
            m = m.reshape((-1,) + m.shape[2:])
        return m


def jacobian_field(f: LipschitzFunction, cap: float, columns: Optional[int] = None,
                   extra_rows: Optional[np.ndarray] = None, name: str = "") -> SetValuedField:
    """Field y -> {∂f(y)} restricted to the first ``columns`` columns, optionally
    stacked on top of the constant block ``extra_rows``."""

    def value(pts):
        jac = f.jacobian(pts)
        if columns is not None:
            jac = jac[:, :, :columns]
        if extra_rows is not None:
            rows = np.broadcast_to(extra_rows, (len(jac),) + extra_rows.shape)
            jac = np.concatenate([jac, rows], axis=1)
        return jac

    return SetValuedField(f.in_dim, cap, value, name or f.name)


@dataclass(frozen=True)
class RadiusCertificate:
    lam: float
    center: np.ndarray
    delta: float
    grid_step: float
    n_ball_samples: int
    capped: bool
    cap: float
    center_inverse_norm: float


def _ball_points(x: np.ndarray, t: float, n: int, seed: int) -> np.ndarray:
    eye = np.eye(x.size)
    pts = [x[None], x + t * eye, x - t * eye]
    if n > 0 and t > 0:
        pts.append(sample_ball(x, t, n, seed))
    return np.concatenate(pts)


def _sub_seed(seed: int, k: int) -> int:
    return (seed * 1_000_003 + k) % (2 ** 63)


def phi(s: SetValuedField, x, t: float, n_ball_samples: int = 64, seed: int = 0) -> MatrixSet:
    """Hull of the field values over sampled points of the closed ball B(x, t)."""
    if t >= s.cap:
        raise ValueError(f"t={t} is outside the field's domain (cap {s.cap})")
    x = np.asarray(x, dtype=float).ravel()
    return MatrixSet(reduce_generators(s.matrices(_ball_points(x, t, n_ball_samples, seed))))


def delta_radius(s: SetValuedField, x, lam: float, grid_step: Optional[float] = None,
                 n_ball_samples: int = 64, seed: int = 0,
                 n_hull_samples: int = DEFAULT_HULL_SAMPLES,
                 grid_divisions: int = DEFAULT_GRID_DIVISIONS) -> RadiusCertificate:
    """Grid estimate of the invertibility radius of ``s`` at ``x`` for bound ``lam``.

    Ball samples for grid point t_k are kept for every later t, so the tested
    sets are nested and the search stops at the first failure.  Without an
    explicit ``grid_step`` the cap is split into ``grid_divisions`` steps.
    """
    x = np.asarray(x, dtype=float).ravel()
    step = grid_step if grid_step is not None else s.cap / grid_divisions
    if step <= 0:
        raise ValueError("grid_step must be positive")
    current = reduce_generators(s.matrices(x[None]))
    inv0 = inverse_set_norm(MatrixSet(current), n_hull_samples, seed)
    if not inv0 < lam:
        raise PreconditionViolated(f"inverse norm {inv0:.6g} at the centre is not below lam={lam:.6g}")

    n_grid = int(math.ceil(s.cap / step)) - 1
    ts = step * np.arange(1, n_grid + 1)
    ts = ts[ts < s.cap]
    per = 1 + 2 * x.size + n_ball_samples
    pts = np.concatenate([_ball_points(x, t, n_ball_samples, _sub_seed(seed, k)) for k, t in enumerate(ts)]) \
        if len(ts) else np.empty((0, x.size))
    mats = s.matrices(pts).reshape(len(ts), per, *current.shape[1:]) if len(ts) else None

    known = {m.tobytes() for m in current}
    delta, capped = s.cap, True
    prev_t = 0.0
    for k, t in enumerate(ts):
        new = [m for m in mats[k] if m.tobytes() not in known]
        if new:
            current = reduce_generators(np.concatenate([current, np.array(new)]))
            known.update(m.tobytes() for m in new)
            if inverse_set_norm(MatrixSet(current), n_hull_samples, seed) > lam:
                delta, capped = prev_t, False
                break
        prev_t = float(t)
    return RadiusCertificate(lam, x, float(delta), step, n_ball_samples, capped, s.cap, inv0)


def uniform_radius_Delta(family: Callable, omega_samples, mu: float, **delta_kw):
    """Minimum over sampled ω of Δ(ω) = max over admissible (field, point) of δ(mu).

    ``family(ω)`` returns the admissible ``(field, point)`` pairs at ω.
    Returns ``(Δ₀, argmin ω, all Δ values)``.
    """
    values = []
    for omega in omega_samples:
        values.append(Delta_at(family, omega, mu, **delta_kw))
    values = np.array(values)
    i = int(np.argmin(values))
    return float(values[i]), omega_samples[i], values


def Delta_at(family: Callable, omega, mu: float, **delta_kw) -> float:
    pairs = family(omega)
    if not pairs:
        raise InadmissibleSample(f"no admissible chart/selector at {np.asarray(omega).tolist()}")
    best = 0.0
    # a field can never certify more than its cap, so larger caps go first
    for field, point in sorted(pairs, key=lambda fp: -fp[0].cap):
        if field.cap <= best:
            break
        try:
            best = max(best, delta_radius(field, point, mu, **delta_kw).delta)
        except PreconditionViolated:
            continue
    return best


def lsc_empirical_check(Delta: Callable, omega, approach_sequences, tol: float = 1e-6,
                        grid_slack: float = 0.0) -> bool:
    """Falsification test of lower semicontinuity of ``Delta`` at ``omega``.

    The liminf along each sequence is taken as the minimum over its second
    half; it may fall short of Δ(ω) by at most ``tol + grid_slack``, where the
    slack covers the grid resolution of the radius estimates.
    """
    base = Delta(omega)
    for seq in approach_sequences:
        seq = list(seq)
        tail = seq[len(seq) // 2:]
        if min(Delta(p) for p in tail) < base - tol - grid_slack:
            return False
    return True
