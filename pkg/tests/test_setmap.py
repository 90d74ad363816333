import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipset.errors import CQViolated, EmptyFeasibleSet, NotOnManifold
from lipset.jacobian import affine
from lipset.manifold import builtin
from lipset.matrixset import MultiIndex, enumerate_multi_indices, inverse_norms
from lipset.scenarios import circle_abs, circle_twopoint, sphere_latitude, square_level
from lipset.setmap import (ConstraintSystem, TargetSet, block_matrix, build_F, chain_subdivision_check,
                           constants_for, cq_check, feasible_clouds, feasible_set, lambda_bound,
                           lambda_bound_check, selection_track, subdivision_count, tau_estimate,
                           verify_lipschitz)
from lipset.hausdorff import hausdorff_distance

TWO = circle_twopoint()


def scaled_circle(a):
    # c(u, x) = a·u1 - x on the unit circle, X = [-0.4, 0.4]
    return ConstraintSystem(f"scaled{a}", builtin("circle"), affine([[a, 0.0, -1.0]]), math.hypot(a, 1),
                            TargetSet.point([0.0]), (-0.4,), (0.4,), (-0.5,), (0.5,))


class TestTargetSet:
    def test_point_and_box(self):
        p = TargetSet.point([1.0])
        assert p.contains([[1.0 + 1e-9], [1.1]]).tolist() == [True, False]
        b = TargetSet.box([0.0], [1.0])
        assert b.contains([[0.5], [1.0], [-0.1]]).tolist() == [True, True, False]

    def test_rejects_empty_box(self):
        with pytest.raises(ValueError):
            TargetSet.box([1.0], [0.0])


class TestSystem:
    def test_dimensions(self):
        s = sphere_latitude()
        assert (s.n, s.d, s.j, s.m) == (3, 2, 1, 1)

    def test_rejects_x_outside_a(self):
        with pytest.raises(ValueError):
            ConstraintSystem("bad", builtin("circle"), affine([[1.0, 0.0, -1.0]]), 1.5,
                             TargetSet.point([0.0]), (-1.0,), (1.0,), (-0.5,), (0.5,))


class TestFeasible:
    def test_sphere_latitude_circle(self):
        pts = feasible_set(sphere_latitude(), [0.5], 500)
        assert len(pts) >= 400
        assert np.abs(pts[:, 2] - 0.5).max() < 1e-8
        assert np.abs(np.linalg.norm(pts, axis=1) - 1).max() < 1e-9
        # thinning in angle: largest gap well below the circle length
        ang = np.sort(np.arctan2(pts[:, 1], pts[:, 0]))
        assert np.diff(np.r_[ang, ang[0] + 2 * np.pi]).max() < 0.1

    def test_two_points(self):
        pts = feasible_set(TWO, [0.5])
        assert np.allclose(pts, [[0.5, -math.sqrt(0.75)], [0.5, math.sqrt(0.75)]], atol=1e-9)

    def test_abs_four_points(self):
        pts = feasible_set(circle_abs(), [0.5])
        r = math.sqrt(0.75)
        assert np.allclose(pts, [[-0.5, -r], [-0.5, r], [0.5, -r], [0.5, r]], atol=1e-9)

    def test_square_level(self):
        assert np.allclose(feasible_set(square_level(), [0.5]), [[-1.0, 0.5], [1.0, 0.5]], atol=1e-9)

    def test_empty(self):
        with pytest.raises(EmptyFeasibleSet):
            feasible_set(TWO, [1.2])

    def test_deterministic_and_batched(self):
        s = sphere_latitude()
        a = feasible_clouds(s, np.array([[0.1], [0.3]]), 300)
        b = feasible_clouds(s, np.array([[0.3]]), 300)
        assert np.array_equal(a[1], b[0])


class TestCQ:
    def test_top_chart_is_perfect(self):
        e = cq_check(TWO, [0.6, 0.8], [0.6])
        assert e.holds and e.tau_min == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("a", [0.5, 2.0, 4.0])
    def test_linear_tau_is_inverse_block(self, a):
        e = cq_check(scaled_circle(a), [0.0, 1.0], [0.0])
        assert e.tau_min == pytest.approx(1 / a, rel=1e-9)

    def test_abs_kink_violates(self):
        with pytest.raises(CQViolated):
            cq_check(circle_abs(), [0.0, 1.0], [0.0])

    def test_infeasible_point(self):
        with pytest.raises(NotOnManifold):
            cq_check(TWO, [0.6, 0.8], [0.1])

    def test_tau_modes(self):
        r = tau_estimate(TWO)
        assert r.min_over_pi == pytest.approx(4 / 3, abs=1e-4)
        assert not r.divergent
        assert r.tau == pytest.approx(1.05 * r.min_over_pi)
        with pytest.raises(ValueError):
            tau_estimate(TWO, mode="mean")


class TestConstants:
    def test_lambda_formula(self):
        assert lambda_bound(1.0, 1.0, 1.0, 1, 1) == 1.0
        assert lambda_bound(2.0, 1.0, 1.0, 2, 1) == pytest.approx(2 * 3 * 2)
        c = constants_for(1.0, 1.0, 2.0, 1, 1)
        assert (c.lam, c.s, c.L) == (1.0, 5.0, 10.0)

    def test_block_matrix(self):
        h = block_matrix([[3.0, 1.0, 2.0]], MultiIndex(3, (2,)))
        assert np.array_equal(h, [[3, 1, 2], [1, 0, 0], [0, 0, 1]])
        assert abs(np.linalg.det(h)) == pytest.approx(1.0)

    @pytest.mark.parametrize("d,j", [(1, 1), (2, 1), (3, 1), (3, 2), (4, 2)])
    def test_brute_force(self, d, j):
        res = lambda_bound_check(1.5, 1.4, 2.5, d, j, 300, seed=d + j)
        assert res.violations == 0 and res.worst_ratio <= 1
        assert res.det_error <= 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 4))
    def test_det_identity(self, seed, d):
        rng = np.random.default_rng(seed)
        p = rng.standard_normal((1, d))
        for pi in enumerate_multi_indices(d, 1):
            h = block_matrix(p, pi)
            assert abs(abs(np.linalg.det(h)) - abs(p[0, pi.zero_based[0]])) <= 1e-12 * (1 + np.abs(p).max())


class TestSelection:
    U = np.array([0.5, math.sqrt(0.75)])

    def _setup(self):
        e = cq_check(TWO, self.U, [0.5])
        return e.best_chart, e.best_pi()

    def test_build_F_vanishes_at_base(self):
        k, pi = self._setup()
        p = build_F(TWO, self.U, [0.5], k, pi)
        z = np.concatenate([p.v0, p.y0])[None]
        assert np.abs(p.F(z)).max() < 1e-14 and p.r0 > 0

    def test_track_two_point(self):
        k, pi = self._setup()
        u = selection_track(TWO, self.U, [0.5], [0.52], pi, k, enforce_domain=False)
        assert np.allclose(u, [0.52, math.sqrt(1 - 0.2704)], atol=1e-10)

    def test_track_stays_on_branch(self):
        k, pi = self._setup()
        for y in np.linspace(0.45, 0.55, 7):
            u = selection_track(TWO, self.U, [0.5], [y], pi, k, enforce_domain=False)
            assert u[1] > 0 and abs(u[0] - y) < 1e-10


class TestHausdorff:
    def test_twopoint_modulus(self):
        rep = verify_lipschitz(TWO, n_pairs=30, cloud_size=100, seed=1)
        assert rep.passed
        assert rep.empirical_modulus <= 5 / 3 + 0.02
        assert rep.pairs.shape == (30, 5)

    def test_same_parameter_zero(self):
        a = feasible_set(sphere_latitude(), [0.3], 400)
        assert hausdorff_distance(a, feasible_set(sphere_latitude(), [0.3], 400)) == 0.0

    def test_sphere_analytic(self):
        s = sphere_latitude()
        for x1, x2 in [(0.1, 0.4), (-0.6, 0.2)]:
            got = hausdorff_distance(feasible_set(s, [x1], 2000), feasible_set(s, [x2], 2000))
            r1, r2 = math.sqrt(1 - x1 ** 2), math.sqrt(1 - x2 ** 2)
            assert got == pytest.approx(math.hypot(r1 - r2, x1 - x2), abs=2e-3)


class TestChain:
    def test_count(self):
        assert subdivision_count(2.0, 1.0, 4.0) == 2
        assert subdivision_count(2.0, 0.0, 1.0) == 1

    def test_equal_endpoints(self):
        res = chain_subdivision_check(TWO, [0.2], [0.2], 0.1, 9.0, 24.0)
        assert res.ok and res.h == 1 and res.step_radius == 0.0

    def test_twopoint_chain(self):
        c = constants_for(tau_estimate(TWO).tau, TWO.lip_c, TWO.lip_M, 1, 1)
        res = chain_subdivision_check(TWO, [-0.3], [0.3], 0.05, c.s, c.L)
        assert res.ok and res.h == subdivision_count(c.s, 0.6, 0.05)

    def test_tiny_modulus_fails(self):
        res = chain_subdivision_check(TWO, [-0.3], [0.3], 0.05, 9.0, 0.01)
        assert not res.ok and res.failing_step is not None
