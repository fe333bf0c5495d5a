import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_sparse
from influence_sketching.sparse import (DiagonalWeights, DimensionError, FactorizationError,
                                        JitterPolicy, SparseDesignMatrix, SpdFactor, gram,
                                        scale_rows, solve_spd, sparse_weighted_gram, spmm_dense)


class TestSparseDesignMatrix:
    def test_canonical_layout(self):
        coo = sp.coo_matrix(([1.0, 2.0, 0.0, 5.0], ([0, 0, 1, 1], [2, 2, 0, 1])), shape=(2, 3))
        X = SparseDesignMatrix(coo)
        assert X.nnz == 2  # duplicates summed, stored zero dropped
        assert X.col_indices.tolist() == [2, 1]
        assert X.values.tolist() == [3.0, 5.0]
        assert X.row_offsets.tolist() == [0, 1, 2]
        assert X.density == pytest.approx(2 / 6)

    def test_immutable(self):
        X = SparseDesignMatrix(np.eye(3))
        with pytest.raises(ValueError):
            X.values[0] = 2.0

    def test_intercept_detection(self):
        assert SparseDesignMatrix(np.array([[1.0, 2.0], [1.0, 0.0]])).has_intercept
        assert not SparseDesignMatrix(np.array([[1.0, 2.0], [0.0, 1.0]])).has_intercept
        X = SparseDesignMatrix(np.array([[0.0, 2.0], [3.0, 0.0]])).with_intercept()
        assert X.has_intercept
        np.testing.assert_array_equal(X.toarray(), [[1, 0, 2], [1, 3, 0]])

    def test_from_csr_arrays(self):
        X = SparseDesignMatrix.from_csr_arrays([1.0, 2.0, 3.0], [0, 2, 1], [0, 2, 3], 3)
        np.testing.assert_array_equal(X.toarray(), [[1, 0, 2], [0, 3, 0]])

    @pytest.mark.parametrize("values, cols, offsets, msg", [
        ([1.0, 2.0], [2, 0], [0, 2], "strictly increasing"),
        ([1.0, 2.0], [1, 1], [0, 2], "strictly increasing"),
        ([1.0], [5], [0, 1], "outside"),
        ([1.0, 2.0], [0, 1], [0, 2, 1], "nondecreasing"),
        ([1.0], [0], [1, 1], "start at 0"),
    ])
    def test_from_csr_arrays_rejects(self, values, cols, offsets, msg):
        with pytest.raises(ValueError, match=msg):
            SparseDesignMatrix.from_csr_arrays(values, cols, offsets, 3)

    def test_take_rows_and_eq(self):
        X = SparseDesignMatrix(np.arange(12.0).reshape(4, 3))
        assert X.take_rows([1, 3]) == SparseDesignMatrix(np.arange(12.0).reshape(4, 3)[[1, 3]])
        assert X != X.take_rows([0, 1, 2])


class TestSpmmDense:
    def test_identity(self, rng):
        B = rng.normal(size=(2, 3))
        np.testing.assert_array_equal(spmm_dense(SparseDesignMatrix(np.eye(2)), B), B)

    def test_hand_expansion(self):
        X = SparseDesignMatrix(sp.csr_matrix(([3.0], ([0], [1])), shape=(2, 2)))
        np.testing.assert_array_equal(spmm_dense(X, np.array([[5.0], [7.0]])), [[21.0], [0.0]])

    def test_random_matches_dense(self, rng):
        A = random_sparse(rng, 50, 20, 0.2, intercept=False)
        B = rng.normal(size=(20, 8))
        assert np.max(np.abs(spmm_dense(SparseDesignMatrix(A), B) - A @ B)) < 1e-12

    def test_shape_mismatch_reports_both(self):
        with pytest.raises(DimensionError, match=r"\(3, 4\).*\(5, 2\)"):
            spmm_dense(SparseDesignMatrix(np.ones((3, 4))), np.ones((5, 2)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 100), st.integers(1, 100), st.integers(1, 6),
           st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
    def test_property_dense_reference(self, n, p, k, density, seed):
        r = np.random.default_rng(seed)
        A = random_sparse(r, n, p, density, intercept=False)
        B = r.normal(size=(p, k))
        np.testing.assert_allclose(spmm_dense(SparseDesignMatrix(A), B), A @ B,
                                   rtol=0, atol=1e-12)


class TestScaleRows:
    def test_unit_weights(self, rng):
        A = rng.normal(size=(4, 3))
        for power in (0.5, -0.5, 2.0):
            np.testing.assert_array_equal(scale_rows(A, np.ones(4), power), A)

    def test_hand_arithmetic(self):
        np.testing.assert_array_equal(scale_rows(np.ones((2, 1)), np.array([4.0, 9.0]), 0.5),
                                      [[2.0], [3.0]])

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (6, 3), elements=st.floats(-1e3, 1e3)),
           arrays(np.float64, 6, elements=st.floats(1e-3, 1e3)))
    def test_inverse_round_trip(self, A, d):
        back = scale_rows(scale_rows(A, d, 0.5), d, -0.5)
        np.testing.assert_allclose(back, A, rtol=1e-14 * 4, atol=1e-14)

    def test_negative_weight(self):
        with pytest.raises(ValueError, match="negative"):
            scale_rows(np.ones((2, 2)), np.array([1.0, -1.0]), 0.5)

    def test_zero_weight_negative_power_names_row(self):
        with pytest.raises(ValueError, match="row 1"):
            scale_rows(np.ones((3, 2)), np.array([1.0, 0.0, 2.0]), -0.5)

    def test_floor_respected(self):
        d = DiagonalWeights(np.array([1.0, 1e-14]), floor=1e-12)
        with pytest.raises(ValueError, match="row 1"):
            scale_rows(np.ones((2, 1)), d, -0.5)


class TestDiagonalWeights:
    def test_floored(self):
        d = DiagonalWeights([0.5, 1e-15, 0.0, 2.0])
        assert d.floored.tolist() == [1, 2]
        np.testing.assert_array_equal(d.floored_entries(), [0.5, 1e-12, 1e-12, 2.0])

    @pytest.mark.parametrize("bad", [[-1.0], [np.nan], [np.inf]])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            DiagonalWeights(bad)


class TestGram:
    def test_hand(self):
        np.testing.assert_array_equal(gram(np.eye(3)), np.eye(3))
        np.testing.assert_array_equal(gram(np.array([[3.0], [4.0]])), [[25.0]])

    def test_random_exactly_symmetric(self, rng):
        A = rng.normal(size=(100, 10))
        G = gram(A)
        np.testing.assert_allclose(G, A.T @ A, rtol=1e-13)
        assert np.array_equal(G, G.T)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 60), st.integers(1, 12), st.integers(0, 2**32 - 1))
    def test_psd(self, n, k, seed):
        A = np.random.default_rng(seed).normal(size=(n, k))
        G = gram(A)
        assert np.array_equal(G, G.T)
        assert np.linalg.eigvalsh(G).min() >= -1e-10 * max(np.trace(G), 1.0)

    def test_sparse_weighted_gram(self, rng):
        A = random_sparse(rng, 40, 6, 0.4)
        w = rng.random(40)
        G = sparse_weighted_gram(SparseDesignMatrix(A), w)
        np.testing.assert_allclose(G, A.T @ (A * w[:, None]), rtol=1e-12, atol=1e-12)
        assert np.array_equal(G, G.T)


class TestSolveSpd:
    def test_identity(self, rng):
        B = rng.normal(size=(4, 2))
        sol = solve_spd(np.eye(4), B)
        np.testing.assert_array_equal(sol.x, B)
        assert sol.jitter == 0.0

    def test_diagonal(self):
        np.testing.assert_allclose(solve_spd(np.diag([2.0, 4.0]), np.array([2.0, 4.0])).x, [1, 1])

    def test_random_residual(self, rng):
        M = rng.normal(size=(10, 10))
        G = M @ M.T + 10 * np.eye(10)
        B = rng.normal(size=(10, 3))
        x = solve_spd(G, B).x
        assert np.max(np.abs(G @ x - B)) < 1e-10
        assert np.max(np.abs(G @ x - B)) / np.max(np.abs(B)) < 1e-8

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            solve_spd(np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones(2))

    def test_jitter_rescues_singular(self):
        G = np.array([[1.0, 1.0], [1.0, 1.0]])
        sol = solve_spd(G, np.array([1.0, 1.0]))
        assert sol.jitter == pytest.approx(1e-10)  # first retry: scale * trace / k

    def test_jitter_escalates(self):
        G = np.array([[1.0, 0.0], [0.0, -1e-9]])  # needs more than the first retry
        factor = SpdFactor(G)
        assert factor.jitter == pytest.approx(1e-8 * 0.5 * (1 - 1e-9))

    def test_gives_up_with_last_jitter(self):
        G = np.diag([3.0, -1.0])  # mean diagonal 1
        with pytest.raises(FactorizationError) as info:
            solve_spd(G, np.ones(2), JitterPolicy(scale=1e-10, max_retries=3))
        assert info.value.last_jitter == pytest.approx(1e-8)

    def test_inverse_quadratic_rows(self, rng):
        M = rng.normal(size=(5, 5))
        G = M @ M.T + np.eye(5)
        Z = rng.normal(size=(30, 5))
        expected = np.einsum("ij,jk,ik->i", Z, np.linalg.inv(G), Z)
        np.testing.assert_allclose(SpdFactor(G).inverse_quadratic_rows(Z, chunk=7), expected,
                                   rtol=1e-12)
