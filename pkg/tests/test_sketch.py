import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import pdist

from conftest import random_sparse
from influence_sketching.sketch import (ProjectionMatrix, ProjectionSpec, make_projection,
                                        project, recommend_k)
from influence_sketching.sparse import DimensionError, SparseDesignMatrix


def dense(spec):
    return make_projection(spec).toarray()


class TestDeterminism:
    @pytest.mark.parametrize("kind", ["gaussian", "very_sparse"])
    def test_same_spec_bit_identical(self, kind):
        spec = ProjectionSpec(p=300, k=20, kind=kind, seed=42)
        a, b = dense(spec), dense(spec)
        assert a.tobytes() == b.tobytes()

    @pytest.mark.parametrize("kind", ["gaussian", "very_sparse"])
    def test_different_seeds_differ(self, kind):
        a = dense(ProjectionSpec(p=300, k=20, kind=kind, seed=1))
        b = dense(ProjectionSpec(p=300, k=20, kind=kind, seed=2))
        assert np.any(a != b)

    def test_column_order_irrelevant(self):
        spec = ProjectionSpec(p=500, k=16, seed=9)
        forward = make_projection(spec).toarray()
        shuffled = make_projection(spec, columns=np.random.default_rng(0).permutation(16)).toarray()
        assert forward.tobytes() == shuffled.tobytes()

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**64 - 1), st.integers(1, 12), st.sampled_from(["gaussian", "very_sparse"]))
    def test_column_depends_only_on_seed_and_index(self, seed, k, kind):
        small = dense(ProjectionSpec(p=80, k=k, kind=kind, seed=seed))
        large = dense(ProjectionSpec(p=80, k=k + 5, kind=kind, seed=seed))
        np.testing.assert_array_equal(large[:, :k], small)

    def test_bad_permutation(self):
        with pytest.raises(ValueError):
            make_projection(ProjectionSpec(p=10, k=3), columns=[0, 0, 1])


class TestEntries:
    def test_full_density_is_rademacher(self):
        omega = dense(ProjectionSpec(p=400, k=30, density=1.0, seed=3))
        assert set(np.unique(omega).tolist()) == {-1.0, 1.0}

    def test_default_density_large_p(self):
        spec = ProjectionSpec(p=98450, k=8, seed=0)
        assert spec.s == pytest.approx(0.003, abs=2e-4)
        omega = make_projection(spec).columns
        assert omega.nnz / (spec.p * spec.k) == pytest.approx(0.003, abs=3e-4)

    def test_binomial_bounds(self):
        p, k, s = 10_000, 64, 0.01
        omega = make_projection(ProjectionSpec(p=p, k=k, density=s, seed=5)).columns
        m = p * k
        nz = omega.nnz
        assert abs(nz / m - s) <= 3 * math.sqrt(s * (1 - s) / m)
        pos = int(np.sum(omega.data > 0))
        assert abs(pos / nz - 0.5) <= 3 * math.sqrt(0.25 / nz)

    @pytest.mark.parametrize("s", [0.01, 0.1, 0.5])
    def test_frequencies_on_a_million_entries(self, s):
        p, k = 10_000, 100
        omega = make_projection(ProjectionSpec(p=p, k=k, density=s, seed=11)).toarray()
        m = p * k
        for value, prob in ((1.0, s / 2), (-1.0, s / 2), (0.0, 1 - s)):
            count = int(np.sum(omega == value))
            assert abs(count - m * prob) <= 4 * math.sqrt(m * prob * (1 - prob)), value

    def test_gaussian_moments(self):
        omega = dense(ProjectionSpec(p=10_000, k=100, kind="gaussian", seed=2)).ravel()
        m = omega.size
        assert abs(omega.mean()) <= 4 / math.sqrt(m)
        assert abs(omega.var() - 1) <= 4 * math.sqrt(2 / m)

    @pytest.mark.parametrize("kwargs", [dict(k=0), dict(density=0.0), dict(density=1.5),
                                        dict(kind="hadamard"), dict(p=0)])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            ProjectionSpec(**{"p": 10, "k": 3, **kwargs})

    def test_hyphenated_kind(self):
        assert ProjectionSpec(p=10, k=3, kind="very-sparse").kind == "very_sparse"


class TestProject:
    def test_identity_selection(self, rng):
        X = random_sparse(rng, 12, 6, 0.5)
        Y = project(SparseDesignMatrix(X), ProjectionMatrix.from_array(np.eye(6)[:, :3]))
        np.testing.assert_array_equal(Y, X[:, :3])

    @pytest.mark.parametrize("kind", ["gaussian", "very_sparse"])
    def test_matches_dense_product(self, rng, kind):
        X = random_sparse(rng, 100, 400, 0.05)
        proj = make_projection(ProjectionSpec(p=400, k=32, kind=kind, seed=4))
        np.testing.assert_allclose(project(SparseDesignMatrix(X), proj), X @ proj.toarray(),
                                   rtol=0, atol=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            project(SparseDesignMatrix(np.eye(4)), make_projection(ProjectionSpec(p=5, k=2)))

    def test_distances_preserved(self, rng):
        X = random_sparse(rng, 200, 2000, 0.1, intercept=False)
        k = 512
        Y = project(SparseDesignMatrix(X), make_projection(
            ProjectionSpec(p=2000, k=k, kind="gaussian", seed=8))) / math.sqrt(k)
        ratio = pdist(Y, "sqeuclidean") / pdist(X, "sqeuclidean")
        assert np.mean(np.abs(ratio - 1) <= 0.2) >= 0.95


class TestRecommendK:
    def test_golden(self):
        # 4 ln(1e6) / (1/8 - 1/24) = 663.14...
        assert recommend_k(10**6, 0.5) == 664

    def test_monotone_in_n(self):
        ks = [recommend_k(n, 0.3) for n in np.unique(np.logspace(0, 9, 60).astype(int))]
        assert all(a <= b for a, b in zip(ks, ks[1:]))

    def test_clamps(self):
        assert recommend_k(2, 0.99) == 32
        assert recommend_k(10**6, 0.5, p=100) == 100

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.2])
    def test_rejects_eps(self, eps):
        with pytest.raises(ValueError):
            recommend_k(100, eps)
