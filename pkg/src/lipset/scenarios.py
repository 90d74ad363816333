"""Registered analytic scenarios and the piecewise-linear test bank."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ift import IFTProblem
from .jacobian import LipschitzFunction
from .manifold import circle, sphere, square_boundary
from .setmap import ConstraintSystem, TargetSet


def piecewise_linear(breaks, slopes, value_at_zero: float = 0.0, name: str = "") -> LipschitzFunction:
    """Continuous scalar map with the given kinks and slopes (len(slopes) = len(breaks) + 1)."""
    breaks = np.asarray(breaks, dtype=float)
    slopes = np.asarray(slopes, dtype=float)
    if len(slopes) != len(breaks) + 1 or np.any(np.diff(breaks) <= 0):
        raise ValueError("need increasing breaks and one more slope than breaks")

    def prim(x):
        # integral of the slope function from 0 to x
        out = slopes[0] * x
        for b, jump in zip(breaks, np.diff(slopes)):
            out = out + jump * (np.maximum(x - b, 0.0) - max(-b, 0.0))
        return out

    def func(x):
        return value_at_zero + prim(x[:, 0])[:, None]

    def jac(x):
        return slopes[np.searchsorted(breaks, x[:, 0], side="right")][:, None, None]

    def diff(x):
        return ~np.isin(x[:, 0], breaks)

    return LipschitzFunction(func, 1, 1, jac, diff, float(np.abs(slopes).max()), name)


# ten scalar piecewise-linear functions with kinks inside [-2, 2]
PL_BANK = {
    "abs": ([0.0], [-1.0, 1.0]),
    "relu": ([0.0], [0.0, 1.0]),
    "slopes_1_025": ([-1.0], [0.25, 1.0]),
    "neg_abs_shift": ([0.3], [1.0, -1.0]),
    "two_kinks": ([-0.5, 0.5], [2.0, 0.5, 2.0]),
    "zigzag": ([-1.0, 0.0, 1.0], [1.0, -1.0, 1.0, -1.0]),
    "steep_flat": ([0.2], [3.0, 0.1]),
    "hinge_neg": ([-0.7], [-2.0, 0.0]),
    "staircase": ([-1.5, -0.5, 0.5, 1.5], [1.0, 0.2, 1.0, 0.2, 1.0]),
    "asym_v": ([0.1], [-0.5, 3.0]),
}


def pl_bank() -> dict[str, LipschitzFunction]:
    return {k: piecewise_linear(b, s, name=k) for k, (b, s) in PL_BANK.items()}


# ---------------------------------------------------------------------------
# constraint systems


def _linear_c(weights, name) -> LipschitzFunction:
    w = np.asarray(weights, dtype=float)
    return LipschitzFunction(lambda z: (z @ w)[:, None], len(w), 1,
                             lambda z: np.broadcast_to(w, (len(z), 1, len(w))).copy(),
                             None, float(np.linalg.norm(w)), name)


def sphere_latitude() -> ConstraintSystem:
    return ConstraintSystem("sphere_latitude", sphere(), _linear_c([0, 0, 1, -1], "u3-x"), math.sqrt(2),
                            TargetSet.point([0.0]), (-0.8,), (0.8,), (-0.9,), (0.9,),
                            "unit sphere, latitude circle u3 = x")


def circle_twopoint() -> ConstraintSystem:
    return ConstraintSystem("circle_twopoint", circle(), _linear_c([1, 0, -1], "u1-x"), math.sqrt(2),
                            TargetSet.point([0.0]), (-0.8,), (0.8,), (-0.9,), (0.9,),
                            "unit circle, the two points with u1 = x")


def _abs_c() -> LipschitzFunction:
    def func(z):
        return (np.abs(z[:, 0]) - z[:, 2])[:, None]

    def jac(z):
        out = np.zeros((len(z), 1, 3))
        out[:, 0, 0] = np.sign(z[:, 0])
        out[:, 0, 2] = -1.0
        return out

    return LipschitzFunction(func, 3, 1, jac, lambda z: z[:, 0] != 0, math.sqrt(2), "|u1|-x")


def circle_abs() -> ConstraintSystem:
    return ConstraintSystem("circle_abs", circle(), _abs_c(), math.sqrt(2), TargetSet.point([0.0]),
                            (0.2,), (0.8,), (0.1,), (0.9,),
                            "unit circle, nonsmooth constraint |u1| = x (four points)")


def square_level() -> ConstraintSystem:
    return ConstraintSystem("square_level", square_boundary(), _linear_c([0, 1, -1], "u2-x"), math.sqrt(2),
                            TargetSet.point([0.0]), (-0.5,), (0.5,), (-0.6,), (0.6,),
                            "boundary of the square, horizontal level u2 = x")


# ---------------------------------------------------------------------------
# implicit-function and open-mapping scenarios


def abs2() -> IFTProblem:
    def func(z):
        return (z[:, 0] - 2 * np.abs(z[:, 1]))[:, None]

    def jac(z):
        out = np.zeros((len(z), 1, 2))
        out[:, 0, 0] = 1.0
        out[:, 0, 1] = -2 * np.sign(z[:, 1])
        return out

    F = LipschitzFunction(func, 2, 1, jac, lambda z: z[:, 1] != 0, math.sqrt(5), "v-2|y|")
    return IFTProblem(F, [0.0], [0.0], 2.0)


def cubic() -> IFTProblem:
    def func(z):
        return (z[:, 0] ** 3 + z[:, 0] - z[:, 1])[:, None]

    def jac(z):
        out = np.empty((len(z), 1, 2))
        out[:, 0, 0] = 3 * z[:, 0] ** 2 + 1
        out[:, 0, 1] = -1.0
        return out

    # sup of |(3v^2 + 1, -1)| over |v| <= 1
    F = LipschitzFunction(func, 2, 1, jac, None, math.sqrt(17), "v^3+v-y")
    return IFTProblem(F, [0.0], [0.0], 1.0)


@dataclass(frozen=True)
class OpenMapScenario:
    f: LipschitzFunction
    xi0: np.ndarray
    cap: float


def pl_slopes() -> OpenMapScenario:
    f = piecewise_linear([-1.0], [0.25, 1.0], name="slopes_1_025")
    return OpenMapScenario(f, np.zeros(1), 3.0)


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    description: str
    build: Callable


SCENARIOS = {
    s.name: s for s in [
        Scenario("sphere_latitude", "setmap", "unit sphere, latitude circle u3 = x, X = [-0.8, 0.8]",
                 sphere_latitude),
        Scenario("circle_twopoint", "setmap", "unit circle, two points u1 = x, X = [-0.8, 0.8]",
                 circle_twopoint),
        Scenario("circle_abs", "setmap", "unit circle, nonsmooth |u1| = x, X = [0.2, 0.8]", circle_abs),
        Scenario("square_level", "setmap", "square boundary, level u2 = x, X = [-0.5, 0.5]", square_level),
        Scenario("abs2", "ift", "F(v, y) = v - 2|y| at the origin, r0 = 2", abs2),
        Scenario("cubic", "ift", "F(v, y) = v^3 + v - y at the origin, r0 = 1", cubic),
        Scenario("pl_slopes", "openmap", "piecewise-linear slopes {1, 0.25}, kink at -1", pl_slopes),
    ]
}


def list_scenarios() -> list[tuple[str, str]]:
    return [(k, SCENARIOS[k].description) for k in sorted(SCENARIOS)]


def get(name: str) -> Scenario:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}")
    return SCENARIOS[name]
