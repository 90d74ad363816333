"""Chart-based compact Lipschitz manifolds and the built-in registry.

Every map here is vectorised: ambient points come in as ``(N, n)`` arrays and
chart coordinates as ``(N, d)`` arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NoChart, NotOnManifold
from .matrixset import farthest_point_indices

MEMBERSHIP_TOL = 1e-9


def _rows(u, dim: int) -> np.ndarray:
    a = np.asarray(u, dtype=float)
    if a.ndim == 1:
        a = a[None]
    if a.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {a.shape}")
    return a


# ---------------------------------------------------------------------------
# chart codomains


@dataclass(frozen=True)
class Box:
    """Open box lo < v < hi."""

    lo: tuple
    hi: tuple

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, v) -> np.ndarray:
        v = _rows(v, self.dim)
        return np.all((v > np.array(self.lo)) & (v < np.array(self.hi)), axis=1)

    def margin(self, v) -> np.ndarray:
        """Distance from each point to the boundary (negative outside)."""
        v = _rows(v, self.dim)
        return np.min(np.minimum(v - np.array(self.lo), np.array(self.hi) - v), axis=1)

    @property
    def bounds(self):
        return np.array(self.lo, dtype=float), np.array(self.hi, dtype=float)

    @property
    def volume(self) -> float:
        return float(np.prod(np.array(self.hi) - np.array(self.lo)))


@dataclass(frozen=True)
class Ball:
    """Open Euclidean ball."""

    center: tuple
    radius: float

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, v) -> np.ndarray:
        return self.margin(v) > 0

    def margin(self, v) -> np.ndarray:
        v = _rows(v, self.dim)
        return self.radius - np.linalg.norm(v - np.array(self.center), axis=1)

    @property
    def bounds(self):
        c = np.array(self.center, dtype=float)
        return c - self.radius, c + self.radius

    @property
    def volume(self) -> float:
        d = self.dim
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * self.radius ** d


@dataclass(frozen=True)
class ProductRegion:
    first: object
    second: Box

    @property
    def dim(self) -> int:
        return self.first.dim + self.second.dim

    def margin(self, v) -> np.ndarray:
        v = _rows(v, self.dim)
        k = self.first.dim
        return np.minimum(self.first.margin(v[:, :k]), self.second.margin(v[:, k:]))

    def contains(self, v) -> np.ndarray:
        return self.margin(v) > 0

    @property
    def bounds(self):
        a, b = self.first.bounds
        c, d = self.second.bounds
        return np.concatenate([a, c]), np.concatenate([b, d])

    @property
    def volume(self) -> float:
        return self.first.volume * self.second.volume


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Chart:
    """A bi-Lipschitz chart ``forward: W -> codomain`` with declared constants."""

    name: str
    forward: Callable
    inverse: Callable
    region: object
    lip_forward: float
    lip_inverse: float
    # extra membership condition on ambient points besides "forward lands in region"
    selector: Callable = None
    inverse_jacobian: Optional[Callable] = None

    @property
    def dim(self) -> int:
        return self.region.dim

    def domain_test(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        ok = self.region.contains(self.forward(u))
        if self.selector is not None:
            ok &= self.selector(u)
        return ok

    def inverse_jac(self, v) -> np.ndarray:
        """Derivative of the inverse map, shape (N, n, d); central differences if not given."""
        v = _rows(v, self.dim)
        if self.inverse_jacobian is not None:
            return self.inverse_jacobian(v)
        h = 1e-7 * np.maximum(1.0, np.abs(v).max(axis=1))
        cols = []
        for k in range(self.dim):
            e = np.zeros_like(v)
            e[:, k] = h
            cols.append((self.inverse(v + e) - self.inverse(v - e)) / (2 * h[:, None]))
        return np.stack(cols, axis=2)


@dataclass(frozen=True)
class LipschitzManifold:
    name: str
    ambient_dim: int
    dim: int
    charts: tuple
    on_manifold: Callable = field(repr=False)

    def __post_init__(self):
        if not self.charts:
            raise ValueError("atlas must be non-empty")
        object.__setattr__(self, "charts", tuple(self.charts))

    def contains(self, u) -> np.ndarray:
        return self.on_manifold(np.atleast_2d(np.asarray(u, dtype=float)))


def lip_M(m: LipschitzManifold) -> float:
    return max(c.lip_inverse + c.lip_forward for c in m.charts)


def charts_containing(m: LipschitzManifold, u) -> list[Chart]:
    u = np.asarray(u, dtype=float).reshape(1, -1)
    if not m.contains(u)[0]:
        raise NotOnManifold(f"{u[0].tolist()} is not on {m.name}")
    found = [c for c in m.charts if c.domain_test(u)[0]]
    if not found:
        raise NoChart(f"no chart of {m.name} covers {u[0].tolist()}")
    return found


def _grid(region, spacing: float) -> np.ndarray:
    lo, hi = region.bounds
    axes = []
    for a, b in zip(lo, hi):
        k = max(1, int(math.ceil((b - a) / spacing)))
        # cell centres keep the grid strictly inside open boxes
        axes.append(a + (np.arange(k) + 0.5) * (b - a) / k)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    return pts[region.contains(pts)]


def sample_manifold(m: LipschitzManifold, n_points: int, seed: int = 0) -> np.ndarray:
    """Quasi-uniform deterministic sample of exactly ``n_points`` manifold points.

    Chart codomains are gridded and pushed through the chart inverses; the
    resulting pool is thinned by farthest-point selection.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    total_vol = sum(c.region.volume for c in m.charts)
    spacing = (total_vol / (8 * n_points)) ** (1.0 / m.dim)
    pool = np.concatenate([c.inverse(_grid(c.region, spacing)) for c in m.charts if len(_grid(c.region, spacing))])
    pool = pool[m.contains(pool)]
    pool = np.unique(np.round(pool, 12), axis=0)
    start = int(np.random.default_rng(seed).integers(len(pool)))
    idx = farthest_point_indices(pool, n_points, start=start)
    return pool[np.sort(idx)]


def product_with_open_set(m: LipschitzManifold, lo, hi) -> LipschitzManifold:
    """M × A for an open box A, charts are ψ × identity."""
    box = Box(tuple(float(a) for a in lo), tuple(float(b) for b in hi))
    n, k = m.ambient_dim, box.dim

    def make(c: Chart) -> Chart:
        def fwd(p, c=c):
            p = np.atleast_2d(p)
            return np.concatenate([c.forward(p[:, :n]), p[:, n:]], axis=1)

        def inv(w, c=c):
            w = np.atleast_2d(w)
            return np.concatenate([c.inverse(w[:, :c.dim]), w[:, c.dim:]], axis=1)

        def sel(p, c=c):
            p = np.atleast_2d(p)
            return c.selector(p[:, :n]) if c.selector is not None else np.ones(len(p), bool)

        def ijac(w, c=c):
            w = np.atleast_2d(w)
            jn = c.inverse_jac(w[:, :c.dim])
            out = np.zeros((len(w), n + k, c.dim + k))
            out[:, :n, :c.dim] = jn
            out[:, n:, c.dim:] = np.eye(k)
            return out

        return Chart(f"{c.name}x{box.lo}-{box.hi}", fwd, inv, ProductRegion(c.region, box),
                     max(c.lip_forward, 1.0), max(c.lip_inverse, 1.0), sel, ijac)

    def on(p):
        p = np.atleast_2d(p)
        return m.on_manifold(p[:, :n]) & box.contains(p[:, n:])

    return LipschitzManifold(f"{m.name}x{k}", n + k, m.dim + k, tuple(make(c) for c in m.charts), on)


# ---------------------------------------------------------------------------
# built-ins


def _graph_chart(n: int, axis: int, sign: float, radius: float, name: str, region) -> Chart:
    """Chart of the unit sphere S^{n-1} solving coordinate ``axis`` over the others."""
    others = [i for i in range(n) if i != axis]

    def fwd(u):
        return np.atleast_2d(u)[:, others]

    def inv(v):
        v = np.atleast_2d(v)
        out = np.empty((len(v), n))
        out[:, others] = v
        with np.errstate(invalid="ignore"):
            out[:, axis] = sign * np.sqrt(1.0 - (v ** 2).sum(axis=1))
        return out

    def ijac(v):
        v = np.atleast_2d(v)
        r = np.sqrt(1.0 - (v ** 2).sum(axis=1))
        out = np.zeros((len(v), n, n - 1))
        for col, i in enumerate(others):
            out[:, i, col] = 1.0
            out[:, axis, col] = -sign * v[:, col] / r
        return out

    def sel(u):
        return sign * np.atleast_2d(u)[:, axis] > 0

    # |d inverse| = 1/sqrt(1-|v|^2), maximal on the codomain boundary
    lip_inv = 1.0 / math.sqrt(1.0 - radius ** 2)
    return Chart(name, fwd, inv, region, 1.0, lip_inv, sel, ijac)


def _unit_sphere_test(n):
    def on(u):
        u = np.atleast_2d(u)
        return np.abs(np.linalg.norm(u, axis=1) - 1.0) <= MEMBERSHIP_TOL
    return on


def circle() -> LipschitzManifold:
    r = 0.8
    charts = []
    for axis, sign, name in [(0, 1.0, "right"), (1, 1.0, "top"), (0, -1.0, "left"), (1, -1.0, "bottom")]:
        charts.append(_graph_chart(2, axis, sign, r, name, Box((-r,), (r,))))
    return LipschitzManifold("circle", 2, 1, tuple(charts), _unit_sphere_test(2))


SPHERE_CHART_RADIUS = 0.95


def sphere() -> LipschitzManifold:
    r = SPHERE_CHART_RADIUS
    charts = []
    for axis in range(3):
        for sign in (1.0, -1.0):
            name = ("+" if sign > 0 else "-") + "xyz"[axis]
            charts.append(_graph_chart(3, axis, sign, r, name, Ball((0.0, 0.0), r)))
    return LipschitzManifold("sphere", 3, 2, tuple(charts), _unit_sphere_test(3))


def _rot(k: int) -> np.ndarray:
    c, s = [(1, 0), (0, 1), (-1, 0), (0, -1)][k % 4]
    return np.array([[c, -s], [s, c]], dtype=float)


def square_boundary() -> LipschitzManifold:
    """Boundary of [-1,1]^2 with 4 edge charts and 4 arc-length corner charts."""
    half = 0.6
    charts = []
    for k in range(4):
        rot = _rot(k)  # maps the right edge / the (1,1) corner to the k-th one

        def e_fwd(u, rot=rot):
            return (np.atleast_2d(u) @ rot)[:, 1:2]

        def e_inv(t, rot=rot):
            t = np.atleast_2d(t)
            return np.stack([np.ones(len(t)), t[:, 0]], axis=1) @ rot.T

        def e_sel(u, rot=rot):
            return np.abs((np.atleast_2d(u) @ rot)[:, 0] - 1.0) <= MEMBERSHIP_TOL

        def e_jac(t, rot=rot):
            return np.broadcast_to(rot[:, 1:2], (len(np.atleast_2d(t)), 2, 1)).copy()

        charts.append(Chart(f"edge{k}", e_fwd, e_inv, Box((-half,), (half,)), 1.0, 1.0, e_sel, e_jac))

        def c_fwd(u, rot=rot):
            p = np.atleast_2d(u) @ rot
            on_right = p[:, 0] - 1.0 >= p[:, 1] - 1.0  # closer to the x=1 side
            t = np.where(on_right, p[:, 1] - 1.0, 1.0 - p[:, 0])
            return t[:, None]

        def c_inv(t, rot=rot):
            t = np.atleast_2d(t)[:, 0]
            p = np.where(t[:, None] <= 0, np.stack([np.ones_like(t), 1.0 + t], axis=1),
                         np.stack([1.0 - t, np.ones_like(t)], axis=1))
            return p @ rot.T

        def c_sel(u, rot=rot):
            p = np.atleast_2d(u) @ rot
            return (p[:, 0] > 0) & (p[:, 1] > 0)

        def c_jac(t, rot=rot):
            t = np.atleast_2d(t)[:, 0]
            d = np.where(t[:, None] <= 0, np.array([0.0, 1.0]), np.array([-1.0, 0.0]))
            return (d @ rot.T)[:, :, None]

        # arc length vs chord across the corner: forward constant sqrt(2)
        charts.append(Chart(f"corner{k}", c_fwd, c_inv, Box((-half,), (half,)), math.sqrt(2.0), 1.0,
                            c_sel, c_jac))

    def on(u):
        u = np.atleast_2d(u)
        return np.abs(np.max(np.abs(u), axis=1) - 1.0) <= MEMBERSHIP_TOL

    return LipschitzManifold("square_boundary", 2, 1, tuple(charts), on)


TORUS_R, TORUS_r = 2.0, 1.0
TORUS_HALF_WIDTH = math.pi / 3
# sup of angle-distance / chord over a chart patch; measured by a dense pair
# sweep at 1.21, declared with headroom
TORUS_LIP_FORWARD = 1.5


def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


def torus() -> LipschitzManifold:
    R, r, a = TORUS_R, TORUS_r, TORUS_HALF_WIDTH
    charts = []
    centers = [0.0, math.pi / 2, math.pi, 3 * math.pi / 2]
    for tc in centers:
        for pc in centers:
            def fwd(u, tc=tc, pc=pc):
                u = np.atleast_2d(u)
                th = np.arctan2(u[:, 1], u[:, 0])
                ph = np.arctan2(u[:, 2], np.hypot(u[:, 0], u[:, 1]) - R)
                return np.stack([_wrap(th - tc), _wrap(ph - pc)], axis=1)

            def inv(v, tc=tc, pc=pc):
                v = np.atleast_2d(v)
                th, ph = v[:, 0] + tc, v[:, 1] + pc
                rho = R + r * np.cos(ph)
                return np.stack([rho * np.cos(th), rho * np.sin(th), r * np.sin(ph)], axis=1)

            def ijac(v, tc=tc, pc=pc):
                v = np.atleast_2d(v)
                th, ph = v[:, 0] + tc, v[:, 1] + pc
                rho = R + r * np.cos(ph)
                out = np.zeros((len(v), 3, 2))
                out[:, 0, 0] = -rho * np.sin(th)
                out[:, 1, 0] = rho * np.cos(th)
                out[:, 0, 1] = -r * np.sin(ph) * np.cos(th)
                out[:, 1, 1] = -r * np.sin(ph) * np.sin(th)
                out[:, 2, 1] = r * np.cos(ph)
                return out

            charts.append(Chart(f"torus({tc:.2f},{pc:.2f})", fwd, inv, Box((-a, -a), (a, a)),
                                TORUS_LIP_FORWARD, R + r, None, ijac))

    def on(u):
        u = np.atleast_2d(u)
        return np.abs(np.hypot(np.hypot(u[:, 0], u[:, 1]) - R, u[:, 2]) - r) <= MEMBERSHIP_TOL

    return LipschitzManifold("torus", 3, 2, tuple(charts), on)


_REGISTRY = {
    "circle": circle,
    "sphere": sphere,
    "square_boundary": square_boundary,
    "torus": torus,
}


def builtin(name: str) -> LipschitzManifold:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown manifold {name!r}; choose from {sorted(_REGISTRY)}") from None


def builtin_names() -> list[str]:
    return sorted(_REGISTRY)
