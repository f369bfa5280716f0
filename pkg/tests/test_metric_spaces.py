import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import ndtri

from deepfrechet.exceptions import InputError, ShapeError, ValidationError
from deepfrechet.metric_spaces import (
    CovMatrix,
    GraphLaplacian,
    ProbGrid,
    QuantileFunction,
    Space,
    frobenius_distance,
    laplacian_from_edges,
    laplacian_violation,
    quantile_from_samples,
    wasserstein_distance,
)

from conftest import normal_quantiles

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


class TestProbGrid:
    def test_midpoints(self):
        np.testing.assert_allclose(ProbGrid(4).points, [0.125, 0.375, 0.625, 0.875])

    def test_spacing_and_range(self):
        p = ProbGrid(101).points
        assert np.all(np.diff(p) > 0)
        assert p[0] > 0 and p[-1] < 1
        np.testing.assert_allclose(np.diff(p), 1 / 101, atol=1e-15)

    def test_rejects_zero_size(self):
        with pytest.raises(InputError):
            ProbGrid(0)


class TestQuantileFunction:
    def test_rejects_decreasing(self):
        with pytest.raises(ValidationError):
            QuantileFunction(np.array([0.0, 1.0, 0.5]))

    def test_rejects_out_of_bounds(self):
        with pytest.raises(ValidationError):
            QuantileFunction(np.array([0.0, 2.0]), bounds=(0.0, 1.0))

    def test_ties_allowed(self):
        q = QuantileFunction(np.array([1.0, 1.0, 1.0]))
        assert q.grid.size == 3


class TestWasserstein:
    def test_identity(self):
        q = QuantileFunction(normal_quantiles(0.3, 2.0))
        assert wasserstein_distance(q, q) == 0.0

    def test_gaussian_shift(self):
        q1 = QuantileFunction(normal_quantiles(0.0, 1.0, 1001))
        q2 = QuantileFunction(normal_quantiles(1.0, 1.0, 1001))
        assert abs(wasserstein_distance(q1, q2) - 1.0) < 1e-4

    def test_uniform_scale(self):
        # quantiles p and 2p differ by p, and the integral of p^2 is 1/3
        p = ProbGrid(1001).points
        d = wasserstein_distance(QuantileFunction(p), QuantileFunction(2 * p))
        assert abs(d - np.sqrt(1 / 3)) < 1e-4

    def test_grid_mismatch(self):
        with pytest.raises(ShapeError):
            wasserstein_distance(QuantileFunction(np.zeros(3)), QuantileFunction(np.zeros(4)))

    @given(st.lists(st.tuples(finite, st.floats(0.01, 10)), min_size=3, max_size=3))
    def test_metric_axioms(self, params):
        a, b, c = (QuantileFunction(normal_quantiles(m, s, 51)) for m, s in params)
        dab, dba = wasserstein_distance(a, b), wasserstein_distance(b, a)
        assert dab >= 0 and dab == dba
        assert wasserstein_distance(a, c) <= dab + wasserstein_distance(b, c) + 1e-10


class TestFrobenius:
    def test_zero_vs_identity(self):
        assert frobenius_distance(np.zeros((3, 3)), np.eye(3)) == pytest.approx(np.sqrt(3), abs=1e-15)

    def test_unit_offsets(self):
        A = np.arange(4.0).reshape(2, 2)
        assert frobenius_distance(A, A + 1) == pytest.approx(2.0, abs=1e-15)

    def test_mismatch(self):
        with pytest.raises(ShapeError):
            frobenius_distance(np.zeros((2, 2)), np.zeros((3, 3)))

    @given(arrays(np.float64, (3, 3, 3), elements=finite))
    def test_metric_axioms(self, M):
        A, B, C = M
        assert frobenius_distance(A, B) == frobenius_distance(B, A)
        assert frobenius_distance(A, A) < 1e-12
        assert frobenius_distance(A, C) <= frobenius_distance(A, B) + frobenius_distance(B, C) + 1e-10


class TestQuantileFromSamples:
    def test_constant_sample(self):
        np.testing.assert_array_equal(quantile_from_samples([1, 1, 1], ProbGrid(7)).values, np.ones(7))

    def test_two_points_by_hand(self):
        # inverse ECDF with linear interpolation: position (n - 1) * p between sorted values
        p = ProbGrid(4).points
        sorted_x = np.array([0.0, 1.0])
        pos = p * (sorted_x.size - 1)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, sorted_x.size - 1)
        oracle = sorted_x[lo] + (pos - lo) * (sorted_x[hi] - sorted_x[lo])
        np.testing.assert_allclose(quantile_from_samples([1.0, 0.0], ProbGrid(4)).values, oracle, atol=1e-15)

    def test_normal_convergence(self, rng):
        q = quantile_from_samples(rng.standard_normal(100_000), ProbGrid(101))
        assert np.max(np.abs(q.values - ndtri(ProbGrid(101).points))) < 0.05

    def test_empty(self):
        with pytest.raises(InputError):
            quantile_from_samples([])

    @given(arrays(np.float64, st.integers(1, 60), elements=st.floats(-1e6, 1e6)))
    def test_monotone(self, x):
        assert np.all(np.diff(quantile_from_samples(x, ProbGrid(33)).values) >= 0)


class TestLaplacianFromEdges:
    def test_empty(self):
        np.testing.assert_array_equal(laplacian_from_edges([], 2).matrix, np.zeros((2, 2)))

    def test_single_edge(self):
        L = laplacian_from_edges([(1, 2, 0.5)], 2).matrix
        np.testing.assert_array_equal(L, [[0.5, -0.5], [-0.5, 0.5]])

    def test_unit_triangle(self):
        L = laplacian_from_edges([(1, 2, 1), (2, 3, 1), (1, 3, 1)], 3).matrix
        np.testing.assert_array_equal(np.diag(L), [2, 2, 2])
        np.testing.assert_array_equal(L[~np.eye(3, dtype=bool)], -np.ones(6))

    @pytest.mark.parametrize(
        "edges",
        [[(1, 2, 2.0)], [(1, 2, -0.1)], [(1, 2, 0.5), (2, 1, 0.3)], [(1, 1, 0.5)], [(1, 4, 0.5)]],
    )
    def test_invalid(self, edges):
        with pytest.raises(ValidationError):
            laplacian_from_edges(edges, 3, W=1.0)

    def test_default_bound_is_max_weight(self):
        assert laplacian_from_edges([(1, 2, 3.0), (2, 3, 5.0)], 3).weight_bound == 5.0

    @given(st.integers(2, 7).flatmap(
        lambda m: st.tuples(st.just(m), st.lists(st.floats(0, 1), min_size=m * (m - 1) // 2, max_size=m * (m - 1) // 2),
                            st.lists(st.booleans(), min_size=m * (m - 1) // 2, max_size=m * (m - 1) // 2))))
    def test_always_valid(self, case):
        m, weights, keep = case
        iu = zip(*np.triu_indices(m, 1))
        edges = [(i + 1, j + 1, w) for (i, j), w, k in zip(iu, weights, keep) if k]
        L = laplacian_from_edges(edges, m, W=1.0)
        assert laplacian_violation(L.matrix, 1.0) == ""


class TestMatrixTypes:
    def test_laplacian_rejects_positive_offdiag(self):
        with pytest.raises(ValidationError):
            GraphLaplacian(np.array([[-0.5, 0.5], [0.5, -0.5]]))

    def test_cov_rejects_indefinite(self):
        with pytest.raises(ValidationError):
            CovMatrix(np.diag([1.0, -1.0]))

    def test_cov_diag_bound(self):
        with pytest.raises(ValidationError):
            CovMatrix(np.eye(2) * 3, diag_bound=2.0)


class TestSpace:
    def test_sidecar_round_trip(self):
        for space in (Space("wasserstein", grid_size=51), Space("laplacian", nodes=4, weight_bound=2.0),
                      Space("covariance", nodes=3, diag_bound=5.0)):
            again = Space.from_sidecar(json.dumps(space.to_sidecar()))
            assert again == space

    def test_unknown_kind(self):
        with pytest.raises(InputError):
            Space("sphere")

    def test_distance_survives_serialization(self, rng):
        space = Space("wasserstein", grid_size=101)
        a, b = normal_quantiles(0.1, 1.3), normal_quantiles(-2.0, 0.4)
        text = json.dumps([a.tolist(), b.tolist()])
        a2, b2 = (np.array(v) for v in json.loads(text))
        assert abs(space.distance(a, b) - space.distance(a2, b2)) <= 1e-15

    def test_sq_distances_match_distance(self, rng):
        space = Space("laplacian", nodes=3)
        A = np.stack([laplacian_from_edges([(1, 2, w), (2, 3, 1 - w)], 3).matrix.ravel() for w in rng.uniform(size=4)])
        sq = space.sq_distances(A[:2], A[2:])
        np.testing.assert_allclose(sq, [space.distance(A[0], A[2]) ** 2, space.distance(A[1], A[3]) ** 2])

    def test_stack_rejects_mixed_variants(self):
        space = Space("wasserstein", grid_size=3)
        with pytest.raises(ShapeError):
            space.stack([QuantileFunction(np.zeros(3)), GraphLaplacian(np.zeros((2, 2)))])
