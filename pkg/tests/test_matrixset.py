import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lipset.matrixset import (MatrixSet, MultiIndex, complement_matrix_D, enumerate_multi_indices,
                              hull_distance, in_invertibility_class, inverse_norms, inverse_set_norm,
                              op_norm, reduce_generators, selection_matrix_T, set_sup_norm,
                              submatrix_pi)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def mats(shape):
    return arrays(np.float64, shape, elements=finite)


class TestOpNorm:
    def test_diagonal(self):
        assert op_norm(np.diag([3.0, 4.0])) == pytest.approx(4.0)

    def test_identity(self):
        assert op_norm(np.eye(5)) == pytest.approx(1.0)

    def test_permutation(self):
        assert op_norm([[0, 1], [1, 0]]) == pytest.approx(1.0)

    def test_zero(self):
        assert op_norm(np.zeros((2, 3))) == 0.0

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            op_norm([[np.nan]])

    @given(mats((3, 3)), mats((3, 3)), finite)
    def test_norm_axioms(self, a, b, c):
        tol = 1e-9 * (1 + op_norm(a) + op_norm(b))
        assert op_norm(a + b) <= op_norm(a) + op_norm(b) + tol
        assert op_norm(c * a) == pytest.approx(abs(c) * op_norm(a), rel=1e-9, abs=1e-9)
        assert op_norm(a @ b) <= op_norm(a) * op_norm(b) * (1 + 1e-9) + 1e-9


class TestSetNorms:
    def test_sup_norm_examples(self):
        assert set_sup_norm(MatrixSet.of(np.eye(2))) == pytest.approx(1)
        assert set_sup_norm(MatrixSet.of(np.eye(2), np.diag([2, 0.5]))) == pytest.approx(2)
        assert set_sup_norm(MatrixSet.of([[1.0]], [[-3.0]])) == pytest.approx(3)

    @given(st.lists(mats((2, 3)), min_size=1, max_size=5))
    def test_sup_norm_is_max_over_generators(self, gens):
        v = MatrixSet(np.array(gens))
        assert set_sup_norm(v) == pytest.approx(max(op_norm(g) for g in gens))

    def test_inverse_of_diagonal(self):
        assert inverse_set_norm(MatrixSet.of(np.diag([2.0, 4.0]))) == pytest.approx(0.5)

    def test_hull_through_zero_is_singular(self):
        assert inverse_set_norm(MatrixSet.of([[1.0]], [[-1.0]])) == math.inf

    def test_hull_of_slopes_matches_sweep(self):
        t = np.linspace(0, 1, 100_001)
        oracle = np.max(1 / np.abs(t + (1 - t) * 0.25))
        got = inverse_set_norm(MatrixSet.of([[1.0]], [[0.25]]))
        assert got == pytest.approx(oracle, abs=0.01)

    def test_invertibility_class(self):
        assert in_invertibility_class(MatrixSet.of(np.eye(2)), 2.0)
        assert not in_invertibility_class(MatrixSet.of(np.diag([1, 0.1])), 2.0)
        assert in_invertibility_class(MatrixSet.of([[1.0]], [[0.25]]), 5.0)

    @settings(max_examples=30)
    @given(st.lists(mats((2, 2)), min_size=2, max_size=4), st.integers(0, 1000))
    def test_inverse_norm_monotone_in_samples(self, gens, seed):
        v = MatrixSet(np.array(gens))
        small = inverse_set_norm(v, 16, seed)
        large = inverse_set_norm(v, 64, seed)
        assert large >= small
        gen_max = float(np.max(inverse_norms(np.array(gens))))
        assert small >= gen_max or small == math.inf

    def test_singular_threshold_is_relative(self):
        assert inverse_norms(np.diag([1.0, 1e-13])[None])[0] == math.inf
        assert math.isfinite(inverse_norms(np.diag([1e-6, 1e-6])[None])[0])


class TestMultiIndices:
    def test_examples(self):
        assert [p.indices for p in enumerate_multi_indices(3, 2)] == [(1, 2), (1, 3), (2, 3)]
        assert [p.indices for p in enumerate_multi_indices(2, 2)] == [(1, 2)]
        assert [p.indices for p in enumerate_multi_indices(4, 1)] == [(1,), (2,), (3,), (4,)]

    def test_rejects_j_above_d(self):
        with pytest.raises(ValueError):
            enumerate_multi_indices(2, 3)

    def test_rejects_bad_indices(self):
        with pytest.raises(ValueError):
            MultiIndex(3, (2, 1))
        with pytest.raises(ValueError):
            MultiIndex(3, (0, 1))

    @pytest.mark.parametrize("d", range(1, 9))
    def test_count_and_identities(self, d):
        for j in range(1, d + 1):
            pis = enumerate_multi_indices(d, j)
            assert len(pis) == math.comb(d, j)
            assert [p.indices for p in pis] == list(combinations(range(1, d + 1), j))
            for pi in pis:
                t = selection_matrix_T(pi)
                assert np.array_equal(t.T @ t, np.eye(j))
                if j < d:
                    dm = complement_matrix_D(pi)
                    assert np.array_equal(dm @ dm.T, np.eye(d - j))
                    assert not np.any(dm @ t)

    def test_selection_matrix_examples(self):
        assert np.array_equal(selection_matrix_T(MultiIndex(3, (1, 3))), np.eye(3)[:, [0, 2]])
        assert np.array_equal(selection_matrix_T(MultiIndex(2, (1, 2))), np.eye(2))
        assert np.array_equal(selection_matrix_T(MultiIndex(3, (2,))), np.eye(3)[:, [1]])

    def test_complement_examples(self):
        assert np.array_equal(complement_matrix_D(MultiIndex(3, (1, 3))), [[0, 1, 0]])
        assert np.array_equal(complement_matrix_D(MultiIndex(3, (2,))), [[1, 0, 0], [0, 0, 1]])
        assert np.array_equal(complement_matrix_D(MultiIndex(4, (1, 2))), [[0, 0, 1, 0], [0, 0, 0, 1]])
        with pytest.raises(ValueError):
            complement_matrix_D(MultiIndex(2, (1, 2)))

    def test_submatrix_examples(self):
        assert np.array_equal(submatrix_pi([[1, 2, 3]], MultiIndex(3, (2,))), [[2]])
        assert np.array_equal(submatrix_pi(np.eye(3)[:2], MultiIndex(3, (1, 2))), np.eye(2))
        assert np.array_equal(submatrix_pi([[1, 0, 5], [0, 1, 7]], MultiIndex(3, (1, 3))), [[1, 5], [0, 7]])
        with pytest.raises(ValueError):
            submatrix_pi([[1, 2]], MultiIndex(3, (1,)))

    @given(mats((2, 2)), st.floats(1.0, 10.0))
    def test_det_lower_bound_from_inverse_norm(self, p, tau):
        inv = inverse_norms(p[None])[0]
        if inv <= tau:
            assert abs(np.linalg.det(p)) >= tau ** -2 * (1 - 1e-9)


class TestHullTools:
    def test_hull_distance_inside_and_outside(self):
        gens = np.array([[[0.0]], [[1.0]]])
        assert hull_distance(np.array([[0.4]]), gens) == pytest.approx(0.0, abs=1e-9)
        assert hull_distance(np.array([[1.5]]), gens) == pytest.approx(0.5, abs=1e-9)

    def test_reduce_keeps_segment_extremes(self):
        pts = np.linspace(-1, 2, 50)[:, None, None]
        red = reduce_generators(pts)
        assert sorted(red.ravel().tolist()) == [-1.0, 2.0]

    def test_reduce_is_order_independent(self):
        rng = np.random.default_rng(3)
        m = rng.standard_normal((40, 2, 2))
        assert np.array_equal(reduce_generators(m), reduce_generators(m[::-1]))
