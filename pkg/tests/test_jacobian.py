import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipset.errors import DegenerateSample
from lipset.jacobian import (JacobianEstimate, LipschitzFunction, affine, chain_rule_check,
                             clarke_jacobian, compose, manifold_jacobian, mvt_certificate,
                             partial_jacobian, usc_modulus)
from lipset.manifold import builtin
from lipset.matrixset import MatrixSet, hull_distance
from lipset.scenarios import PL_BANK, pl_bank

BANK = pl_bank()


def scalar(func, deriv, kinks=(), name=""):
    kinks = np.asarray(kinks, dtype=float)
    return LipschitzFunction(lambda x: func(x[:, 0])[:, None], 1, 1,
                             lambda x: deriv(x[:, 0])[:, None, None],
                             lambda x: ~np.isin(x[:, 0], kinks), name=name)


ABS = scalar(np.abs, np.sign, [0.0], "abs")
SQUARE = scalar(lambda x: x ** 2, lambda x: 2 * x, name="sq")


def endpoints(est: JacobianEstimate):
    g = est.generators.ravel()
    return g.min(), g.max()


class TestClarke:
    def test_affine_singleton(self):
        a = np.array([[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]])
        est = clarke_jacobian(affine(a, [1.0, 2.0]), [0.2, 0.1, -0.3], 0.5, 100, 1)
        assert len(est.generators) == 1
        assert np.abs(est.generators[0] - a).max() < 1e-12

    def test_abs_at_kink(self):
        est = clarke_jacobian(ABS, [0.0], 0.1, 200, 0)
        lo, hi = endpoints(est)
        assert max(abs(lo + 1), abs(hi - 1)) <= 0.05

    def test_abs_away_from_kink(self):
        est = clarke_jacobian(ABS, [1.0], 0.1, 200, 0)
        assert est.generators.ravel().tolist() == [1.0]

    def test_finite_difference_mode(self):
        f = LipschitzFunction(lambda x: np.abs(x), 1, 1)
        est = clarke_jacobian(f, [0.0], 0.1, 200, 0)
        assert est.mode == "finite-difference"
        lo, hi = endpoints(est)
        assert lo == pytest.approx(-1, abs=1e-6) and hi == pytest.approx(1, abs=1e-6)

    def test_degenerate_sample(self):
        f = LipschitzFunction(lambda x: x, 1, 1, lambda x: np.ones((len(x), 1, 1)),
                              lambda x: np.zeros(len(x), bool))
        with pytest.raises(DegenerateSample):
            clarke_jacobian(f, [0.0], 0.1, 10, 0)

    @pytest.mark.parametrize("name", sorted(PL_BANK))
    def test_bank_kink_endpoints(self, name):
        breaks, slopes = PL_BANK[name]
        f = BANK[name]
        n = 200
        for i, b in enumerate(breaks):
            est = clarke_jacobian(f, [b], 0.05, n, i)
            lo, hi = endpoints(est)
            true = sorted([slopes[i], slopes[i + 1]])
            assert abs(lo - true[0]) <= 2 / n and abs(hi - true[1]) <= 2 / n

    @settings(max_examples=40)
    @given(st.sampled_from(sorted(PL_BANK)), st.floats(-2, 2), st.floats(0.01, 0.5), st.floats(1.0, 4.0))
    def test_radius_monotone(self, name, x, r1, factor):
        f = BANK[name]
        small = clarke_jacobian(f, [x], r1, 64, 3).generators
        large = clarke_jacobian(f, [x], r1 * factor, 64, 3).generators
        assert max(hull_distance(m, large) for m in small) < 1e-9

    def test_analytic_matches_finite_differences(self):
        f = SQUARE
        x = np.array([[0.3], [-1.2], [2.0]])
        fd = LipschitzFunction(f.func, 1, 1).jacobian(x)
        assert np.abs(fd - f.jacobian(x)).max() < 1e-6


class TestManifoldJacobian:
    def test_height_on_sphere_equator(self):
        # u3 read in the side chart over (u2, u3) is the coordinate v2 itself
        f = LipschitzFunction(lambda u: u[:, 2:3], 3, 1, lambda u: np.tile([[[0.0, 0.0, 1.0]]], (len(u), 1, 1)))
        est = manifold_jacobian(f, builtin("sphere"), [1.0, 0.0, 0.0], 1e-4, 32, 0)
        assert np.abs(est.generators - np.array([[[0.0, 1.0]]])).max() < 1e-12

    def test_height_on_upper_chart(self):
        f = LipschitzFunction(lambda u: u[:, 2:3], 3, 1, lambda u: np.tile([[[0.0, 0.0, 1.0]]], (len(u), 1, 1)))
        u = np.array([0.6, 0.0, 0.8])
        est = manifold_jacobian(f, builtin("sphere"), u, 1e-7, 16, 0)
        top = [g for g in est.generators if abs(g[0, 0] + 0.75) < 1e-5]
        # oracle: d/dv1 sqrt(1 - v1^2 - v2^2) = -v1/u3 at v = (0.6, 0)
        assert top and abs(top[0][0, 1]) < 1e-5

    def test_constant_function(self):
        f = LipschitzFunction(lambda u: np.ones((len(u), 1)), 2, 1)
        est = manifold_jacobian(f, builtin("circle"), [0.0, 1.0], 0.01, 16, 0)
        assert np.abs(est.generators).max() < 1e-6

    def test_linear_on_circle_top(self):
        a = np.array([0.7, -1.3])
        f = affine(a[None])
        est = manifold_jacobian(f, builtin("circle"), [0.0, 1.0], 1e-8, 16, 0)
        assert np.abs(est.generators.ravel() - a[0]).max() < 1e-6


class TestPartial:
    def _est(self, gens):
        return JacobianEstimate(np.zeros(1), 0.1, MatrixSet(np.asarray(gens, dtype=float)), 1, "analytic-sampled")

    def test_examples(self):
        assert partial_jacobian(self._est([[[1, 5]]]), 1).generators.tolist() == [[[1.0]]]
        got = partial_jacobian(self._est([np.hstack([np.eye(2), np.zeros((2, 1))])]), 2).generators
        assert np.array_equal(got, [np.eye(2)])
        got = partial_jacobian(self._est([[[1, 2]], [[3, 4]]]), 1).generators
        assert sorted(got.ravel().tolist()) == [1.0, 3.0]

    def test_rejects_bad_block(self):
        with pytest.raises(ValueError):
            partial_jacobian(self._est([[[1, 2]]]), 2)

    @settings(max_examples=30)
    @given(st.integers(0, 10_000))
    def test_projection_commutes_with_hull(self, seed):
        rng = np.random.default_rng(seed)
        gens = rng.standard_normal((5, 2, 3))
        w = rng.dirichlet(np.ones(5))
        point = np.einsum("k,kij->ij", w, gens)
        proj = partial_jacobian(self._est(gens), 2).generators
        assert hull_distance(point[:, :2], proj) < 1e-7


class TestMeanValue:
    def test_affine(self):
        a = np.array([[2.0, 1.0], [0.0, -1.0]])
        p, res = mvt_certificate(affine(a), [0.0, 1.0], [1.0, -1.0])
        assert np.abs(p - a).max() < 1e-12 and res < 1e-12

    def test_abs(self):
        p, res = mvt_certificate(ABS, [-1.0], [2.0])
        assert p[0, 0] == pytest.approx(1 / 3, abs=1e-8)
        assert res < 1e-8

    def test_square_on_unit_interval(self):
        # f(1) - f(0) = P (1 - 0) forces P = 1, the average of 2t over [0, 1]
        p, res = mvt_certificate(SQUARE, [0.0], [1.0], 100)
        assert p[0, 0] == pytest.approx(1.0, abs=1e-6)
        assert res < 1e-6

    @pytest.mark.parametrize("name", sorted(PL_BANK))
    def test_bank_residual(self, name):
        f = BANK[name]
        rng = np.random.default_rng(7)
        for _ in range(5):
            x, y = rng.uniform(-2, 2, 2)
            _, res = mvt_certificate(f, [x], [y], 100, 1)
            assert res <= min(1e-8, f.lip * abs(x - y) / 100)


class TestChainRule:
    def test_affine(self):
        g = affine([[1.0, 2.0]])
        f = affine([[1.0], [-1.0]])
        assert chain_rule_check(g, f, [0.3], 0.1) < 1e-12

    def test_square_of_abs(self):
        assert chain_rule_check(SQUARE, ABS, [0.0], 1e-3, 200) < 1e-8

    def test_abs_of_double(self):
        assert chain_rule_check(ABS, affine([[2.0]]), [0.0], 0.1, 200) < 0.05

    @pytest.mark.parametrize("name", sorted(PL_BANK))
    def test_bank(self, name):
        names = sorted(PL_BANK)
        g = BANK[names[(names.index(name) + 3) % len(names)]]
        breaks = PL_BANK[name][0]
        for x in list(breaks) + [0.77]:
            assert chain_rule_check(g, BANK[name], [x], 0.05, 200, 2) < 0.05

    def test_compose_values(self):
        h = compose(SQUARE, ABS)
        assert h(np.array([[-3.0]]))[0, 0] == 9.0


class TestUsc:
    GRID = np.linspace(0.05, 1.0, 20)

    def test_affine(self):
        assert usc_modulus(affine([[3.0]]), [0.2], 0.1, self.GRID) == 1.0

    def test_abs_near_kink(self):
        assert usc_modulus(ABS, [0.5], 0.1, self.GRID) == pytest.approx(0.5, abs=0.05)

    def test_abs_at_kink(self):
        assert usc_modulus(ABS, [0.0], 0.1, self.GRID) == 1.0
