import itertools

import numpy as np
import pytest

from pseudocl import clustering


def brute_force_kmeans(x, k):
    """Exhaustive search over all assignments of n points to k clusters."""
    n = x.shape[0]
    best_obj = np.inf
    best_centroids = None
    for assign in itertools.product(range(k), repeat=n):
        assign = np.array(assign)
        if len(np.unique(assign)) < k:
            continue
        centroids = np.array([x[assign == j].mean(axis=0) for j in range(k)])
        diff = x - centroids[assign]
        obj = float(np.mean(np.sum(diff * diff, axis=1)))
        if obj < best_obj:
            best_obj = obj
            best_centroids = centroids
    return best_obj, best_centroids


class TestKmeans:
    def test_well_separated_pairs_on_a_line(self):
        x = np.array([[0.0], [1.0], [10.0], [11.0]])
        res = clustering.kmeans(x, 2, seed=0)
        got = sorted(res.centroids[:, 0].tolist())
        assert got == [0.5, 10.5]
        assert np.isclose(res.objective, 0.25, atol=1e-12)
        assert res.converged

    def test_matches_exhaustive_partition_search(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((8, 2))
        expected_obj, _ = brute_force_kmeans(x, 2)
        res = clustering.kmeans(x, 2, seed=0, n_restarts=8)
        assert np.isclose(res.objective, expected_obj, rtol=1e-10)

    def test_single_cluster_is_global_mean(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((20, 3))
        res = clustering.kmeans(x, 1, seed=5)
        assert np.allclose(res.centroids[0], x.mean(axis=0), atol=1e-12)
        assert np.all(res.assignments == 0)

    def test_k_equals_n_gives_zero_objective(self):
        x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
        res = clustering.kmeans(x, 4, seed=3, n_restarts=4)
        assert res.objective <= 1e-20
        assert len(np.unique(res.assignments)) == 4

    def test_objective_trace_non_increasing(self):
        rng = np.random.default_rng(13)
        x = np.vstack([rng.normal(c, 0.4, (30, 4)) for c in (0.0, 3.0, -3.0)])
        res = clustering.kmeans(x, 3, seed=1)
        trace = np.array(res.objective_trace)
        assert np.all(np.diff(trace) <= 1e-10)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(14)
        x = rng.standard_normal((40, 5))
        a = clustering.kmeans(x, 4, seed=9)
        b = clustering.kmeans(x, 4, seed=9)
        assert np.array_equal(a.centroids, b.centroids)
        assert np.array_equal(a.assignments, b.assignments)

    def test_restarts_never_increase_objective(self):
        rng = np.random.default_rng(15)
        x = rng.standard_normal((25, 3))
        one = clustering.kmeans(x, 5, seed=2, n_restarts=1)
        many = clustering.kmeans(x, 5, seed=2, n_restarts=6)
        assert many.objective <= one.objective + 1e-12

    def test_duplicate_points_still_fill_all_clusters(self):
        x = np.zeros((6, 2))
        x[5] = [1.0, 1.0]
        res = clustering.kmeans(x, 2, seed=0)
        assert len(np.unique(res.assignments)) == 2

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError):
            clustering.kmeans(np.zeros((2, 2)), 3)

    def test_non_finite_points_rejected(self):
        x = np.zeros((4, 2))
        x[1, 0] = np.nan
        with pytest.raises(ValueError):
            clustering.kmeans(x, 2)


class TestGmm:
    def test_ll_trace_non_decreasing(self):
        rng = np.random.default_rng(21)
        x = np.vstack([rng.normal(-2.0, 0.5, (40, 3)),
                       rng.normal(2.0, 0.5, (40, 3))])
        res = clustering.gmm_em(x, 2, seed=0)
        trace = np.array(res.ll_trace)
        assert np.all(np.diff(trace) >= -1e-8)

    def test_recovers_separated_means(self):
        rng = np.random.default_rng(22)
        x = np.vstack([rng.normal(-5.0, 0.3, (60, 2)),
                       rng.normal(5.0, 0.3, (60, 2))])
        res = clustering.gmm_em(x, 2, seed=1)
        means = np.sort(res.means[:, 0])
        assert abs(means[0] + 5.0) < 0.3 and abs(means[1] - 5.0) < 0.3
        assert np.allclose(np.sort(res.weights), [0.5, 0.5], atol=0.05)

    def test_single_component_matches_sample_moments(self):
        rng = np.random.default_rng(23)
        x = rng.normal(1.5, 2.0, (200, 2))
        res = clustering.gmm_em(x, 1, seed=0)
        assert np.allclose(res.means[0], x.mean(axis=0), atol=1e-6)
        assert np.allclose(res.variances[0], x.var(axis=0), atol=1e-4)

    def test_variances_respect_floor(self):
        x = np.zeros((10, 2))
        x[5:] = 1.0
        res = clustering.gmm_em(x, 2, seed=0, var_floor=1e-6)
        assert np.all(res.variances >= 1e-6)

    def test_assignments_match_clear_structure(self):
        rng = np.random.default_rng(24)
        x = np.vstack([rng.normal(0.0, 0.2, (30, 2)),
                       rng.normal(8.0, 0.2, (30, 2))])
        res = clustering.gmm_em(x, 2, seed=2)
        first, second = res.assignments[:30], res.assignments[30:]
        assert len(np.unique(first)) == 1 and len(np.unique(second)) == 1
        assert first[0] != second[0]


def char_poly_eigvals_2x2(cov):
    """Eigenvalues of a symmetric 2x2 from the characteristic polynomial."""
    a, b, c = cov[0, 0], cov[0, 1], cov[1, 1]
    tr, det = a + c, a * c - b * b
    disc = np.sqrt(tr * tr - 4 * det)
    return np.sort([(tr - disc) / 2, (tr + disc) / 2])[::-1]


class TestPca:
    def test_explained_variance_matches_characteristic_polynomial(self):
        rng = np.random.default_rng(31)
        x = rng.standard_normal((50, 2)) @ np.array([[2.0, 0.3], [0.3, 0.5]])
        basis = clustering.pca_fit(x, 2)
        xc = x - x.mean(axis=0)
        cov = xc.T @ xc / (x.shape[0] - 1)
        expected = char_poly_eigvals_2x2(cov)
        assert np.allclose(basis.explained_variance, expected, rtol=1e-10)

    def test_components_orthonormal(self):
        rng = np.random.default_rng(32)
        x = rng.standard_normal((40, 6))
        basis = clustering.pca_fit(x, 4)
        gram = basis.components @ basis.components.T
        assert np.allclose(gram, np.eye(4), atol=1e-10)

    def test_variance_ordering_non_increasing(self):
        rng = np.random.default_rng(33)
        x = rng.standard_normal((60, 5)) * np.array([5.0, 3.0, 1.0, 0.5, 0.1])
        basis = clustering.pca_fit(x, 5)
        assert np.all(np.diff(basis.explained_variance) <= 1e-12)

    def test_axis_aligned_data_recovers_dominant_axis(self):
        rng = np.random.default_rng(34)
        x = np.zeros((100, 3))
        x[:, 1] = rng.standard_normal(100) * 10.0
        x[:, 0] = rng.standard_normal(100) * 0.01
        basis = clustering.pca_fit(x, 1)
        assert abs(basis.components[0, 1]) > 0.999
        assert basis.components[0, 1] > 0  # sign convention

    def test_projection_preserves_pairwise_distances_at_full_rank(self):
        rng = np.random.default_rng(35)
        x = rng.standard_normal((10, 4))
        basis = clustering.pca_fit(x, 4)
        z = np.array([clustering.pca_project(basis, row) for row in x])
        orig = np.linalg.norm(x[:, None] - x[None, :], axis=2)
        proj = np.linalg.norm(z[:, None] - z[None, :], axis=2)
        assert np.allclose(orig, proj, atol=1e-9)

    def test_projection_reconstruction_identity(self):
        rng = np.random.default_rng(36)
        x = rng.standard_normal((30, 3))
        basis = clustering.pca_fit(x, 3)
        p = rng.standard_normal(3)
        z = clustering.pca_project(basis, p)
        back = z @ basis.components + basis.mean
        assert np.allclose(back, p, atol=1e-10)

    def test_deterministic_sign_fix(self):
        rng = np.random.default_rng(37)
        x = rng.standard_normal((50, 4))
        a = clustering.pca_fit(x, 3)
        b = clustering.pca_fit(x.copy(), 3)
        assert np.array_equal(a.components, b.components)
        for row in a.components:
            assert row[np.argmax(np.abs(row))] > 0

    def test_bad_output_dim_rejected(self):
        x = np.zeros((5, 3))
        with pytest.raises(ValueError):
            clustering.pca_fit(x, 4)
        with pytest.raises(ValueError):
            clustering.pca_fit(x, 0)
