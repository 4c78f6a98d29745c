import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate

from guf.gus_sampler import (
    Allocation,
    GaussianBelief,
    ImportanceLevel,
    LevelMode,
    NegativeStretchRadius,
    OrderViolation,
    allocate_designs,
    approximate_expectation,
    basic_points,
    basic_weight,
    build_sigma_set,
    importance_levels,
    importance_value,
    mahalanobis,
    region_importance,
    resolve_radii,
)
from guf.numerics import chi_square_survival, radial_normalizer, random_stream
from guf.sphere_designs import layered_design, reference_sampling

S3 = math.sqrt(3)

AXES2 = reference_sampling([[1, 0]])
OCTAGON = reference_sampling([[1, 0], [1, 1]])
HEX12 = reference_sampling([[1, 0], [S3 / 2, 0.5]])


def closed_levels(n=2):
    return resolve_radii(importance_levels(3, LevelMode.GRID_CLOSED), n)


def random_belief(rng, n):
    A = rng.standard_normal((n, n))
    P = A @ A.T + 0.1 * np.eye(n)
    return GaussianBelief(rng.normal(scale=5.0, size=n), P)


def rel_frob(A, B):
    return np.linalg.norm(A - B) / np.linalg.norm(B)


class TestGaussianBelief:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            GaussianBelief(np.zeros(2), np.eye(3))

    def test_normalizer_standard_two(self):
        assert GaussianBelief.standard(2).normalizer == pytest.approx(1 / (2 * math.pi), rel=1e-14)

    def test_normalizer_scaled(self):
        b = GaussianBelief(np.zeros(2), np.diag([4.0, 9.0]))
        assert b.normalizer == pytest.approx(1 / (2 * math.pi * 6), rel=1e-14)


class TestMahalanobis:
    def test_center(self):
        b = GaussianBelief(np.array([1.0, -2.0]), np.eye(2))
        assert mahalanobis(b, [1.0, -2.0]) == 0.0

    def test_euclidean(self):
        assert mahalanobis(GaussianBelief.standard(2), [1.0, 1.0]) == pytest.approx(2.0)

    def test_scaled_axis(self):
        b = GaussianBelief(np.zeros(2), np.diag([4.0, 1.0]))
        assert mahalanobis(b, [2.0, 0.0]) == pytest.approx(1.0, abs=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_matches_explicit_inverse(self, n, seed):
        rng = np.random.default_rng(seed)
        b = random_belief(rng, n)
        x = rng.standard_normal(n)
        dx = x - b.mean
        assert mahalanobis(b, x) == pytest.approx(dx @ np.linalg.solve(b.cov, dx), rel=1e-9)


class TestImportanceValue:
    def test_center_is_one(self):
        b = GaussianBelief(np.array([3.0, 4.0]), np.diag([2.0, 5.0]))
        assert importance_value(b, b.mean) == 1.0

    def test_worked_shell(self):
        x = np.array([math.sqrt(2.1972), 0.0])
        assert importance_value(GaussianBelief.standard(2), x) == pytest.approx(1 / 3, abs=5e-4)

    def test_five_dim_against_quadrature(self):
        gamma = radial_normalizer(5)
        tail, _ = integrate.quad(lambda s: s**4 * math.exp(-0.5 * s * s), math.sqrt(20), np.inf,
                                 epsabs=1e-15, epsrel=1e-13)
        x = np.array([math.sqrt(20.0), 0, 0, 0, 0])
        assert importance_value(GaussianBelief.standard(5), x) == pytest.approx(gamma * tail, abs=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_mean_is_maximum(self, n, seed):
        rng = np.random.default_rng(seed)
        b = random_belief(rng, n)
        assert importance_value(b, b.mean + rng.standard_normal(n)) <= importance_value(b, b.mean)


class TestRegionImportance:
    @pytest.mark.parametrize("d1, d2, expected", [(0, 1, 1), (1 / 3, 2 / 3, 1 / 3), (0.2, 0.9, 0.7)])
    def test_examples(self, d1, d2, expected):
        assert region_importance(d1, d2) == pytest.approx(expected)

    def test_order_violation(self):
        with pytest.raises(OrderViolation):
            region_importance(0.9, 0.2)


class TestImportanceLevels:
    def test_grid_three(self):
        assert [lv.d for lv in importance_levels(3)] == [0.25, 0.5, 0.75]

    def test_grid_one(self):
        assert [lv.d for lv in importance_levels(1, "grid")] == [0.5]

    def test_grid_closed(self):
        ds = [lv.d for lv in importance_levels(3, LevelMode.GRID_CLOSED)]
        np.testing.assert_allclose(ds, [1 / 3, 2 / 3, 1.0])

    def test_random_reproducible(self):
        a = importance_levels(3, LevelMode.RANDOM, random_stream(5, 0))
        b = importance_levels(3, LevelMode.RANDOM, random_stream(5, 0))
        assert a == b
        ds = [lv.d for lv in a]
        assert all(0.0 < x < 1.0 for x in ds)
        assert ds == sorted(ds)

    def test_random_needs_rng(self):
        with pytest.raises(ValueError):
            importance_levels(2, LevelMode.RANDOM)

    @given(st.integers(1, 40), st.sampled_from(list(LevelMode)), st.integers(0, 1000))
    def test_strictly_increasing_in_unit_interval(self, count, mode, seed):
        ds = [lv.d for lv in importance_levels(count, mode, random_stream(seed, 0))]
        assert len(ds) == count
        assert all(a < b for a, b in zip(ds, ds[1:]))
        assert 0.0 < ds[0] and ds[-1] <= 1.0


class TestResolveRadii:
    def test_worked_radii(self):
        np.testing.assert_allclose([lv.r for lv in closed_levels()], [2.1972, 0.8109, 0.0], atol=5e-4)

    @pytest.mark.parametrize("n", [1, 3, 8])
    def test_whole_space(self, n):
        assert resolve_radii([ImportanceLevel(1.0)], n)[0].r == 0.0

    def test_round_trip_five(self):
        for lv in resolve_radii(importance_levels(3), 5):
            assert chi_square_survival(5, lv.r) == pytest.approx(lv.d, abs=1e-9)


class TestWorkedExamples:
    def test_equal_allocation(self):
        s = build_sigma_set(GaussianBelief.standard(2), closed_levels(), [OCTAGON] * 3)
        assert s.beta == pytest.approx(1.3635, abs=5e-4)
        per_level = [s.weights[s.level == k][0] for k in range(3)]
        np.testing.assert_allclose(per_level, [0.0208, 0.0417, 0.0625], atol=5e-4)
        assert len(s) == 24

    def test_four_eight_twelve(self):
        s = build_sigma_set(GaussianBelief.standard(2), closed_levels(), [AXES2, OCTAGON, HEX12])
        assert s.beta == pytest.approx(1.6114, abs=5e-4)
        per_level = [s.weights[s.level == k][0] for k in range(3)]
        np.testing.assert_allclose(per_level, [0.0179, 0.0357, 0.0536], atol=5e-4)
        assert len(s) == 24

    def test_basic_weights(self):
        b = GaussianBelief.standard(2)
        got = [basic_weight(b, lv.r) for lv in closed_levels()]
        np.testing.assert_allclose(got, [0.0531, 0.1061, 0.1592], atol=5e-4)

    def test_top_level_collapses_onto_mean(self):
        b = GaussianBelief(np.array([1.0, 2.0]), np.eye(2))
        pts = basic_points(b, closed_levels(), [OCTAGON] * 3)
        np.testing.assert_array_equal(pts[16:], np.tile(b.mean, (8, 1)))

    def test_unit_radius_basic_points(self):
        pts = basic_points(GaussianBelief.standard(2), [ImportanceLevel(0.0, 1.0)], [AXES2])
        assert {tuple(p) for p in pts} == {(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)}

    def test_top_level_points_distinct_after_stretch(self):
        s = build_sigma_set(GaussianBelief.standard(2), closed_levels(), [OCTAGON] * 3)
        top = s.points[s.level == 2]
        np.testing.assert_allclose(np.linalg.norm(top, axis=1), math.sqrt(s.beta))


def min_stretched_radius(levels, designs):
    """Smallest ``r + beta`` recomputed from per-point weights and design second moments."""
    r = np.array([lv.r for lv in levels])
    counts = np.array([len(d.points) for d in designs])
    c = np.array([np.sum(d.points**2) / d.points.shape[1] for d in designs])
    w = np.exp(-r / 2) / np.sum(counts * np.exp(-r / 2))
    beta = (1.0 - np.sum(w * r * c)) / np.sum(w * c)
    return r.min() + beta


class TestSigmaSetInvariants:
    def test_single_level_any_belief(self):
        rng = np.random.default_rng(3)
        b = random_belief(rng, 4)
        s = build_sigma_set(b, resolve_radii([ImportanceLevel(0.5)], 4), [layered_design(4, 1)])
        np.testing.assert_allclose(s.mean(), b.mean, atol=1e-10)
        np.testing.assert_allclose(s.covariance(), b.cov, atol=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(
        n=st.integers(1, 8),
        N=st.integers(1, 10),
        depth=st.integers(1, 3),
        mode=st.sampled_from([LevelMode.GRID, LevelMode.GRID_CLOSED, LevelMode.RANDOM]),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_moment_match(self, n, N, depth, mode, seed):
        rng = np.random.default_rng(seed)
        b = random_belief(rng, n)
        levels = resolve_radii(importance_levels(N, mode, rng), n)
        designs = [layered_design(n, min(depth, n))] * N
        try:
            s = build_sigma_set(b, levels, designs)
        except NegativeStretchRadius:
            # only clustered random levels may be rejected, and only when the stretch really fails
            assert mode is LevelMode.RANDOM
            assert min_stretched_radius(levels, designs) < 0.0
            assume(False)
        assert (s.weights > 0).all()
        assert abs(s.weights.sum() - 1.0) <= 1e-12
        for k in range(N):
            assert np.ptp(s.weights[s.level == k]) == 0.0
        scale = np.sqrt(np.diag(b.cov))
        assert (np.abs(s.mean() - b.mean) / scale).max() <= 1e-10
        assert rel_frob(s.covariance(), b.cov) <= 1e-8

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_affine_equivariance(self, n, seed):
        rng = np.random.default_rng(seed)
        b = random_belief(rng, n)
        # lower triangular with positive diagonal keeps the Cholesky factor A L
        A = np.tril(rng.standard_normal((n, n)))
        A[np.diag_indices(n)] = rng.uniform(0.5, 2.0, n)
        shift = rng.standard_normal(n)
        mapped = GaussianBelief(A @ b.mean + shift, A @ b.cov @ A.T)
        levels = resolve_radii(importance_levels(3), n)
        designs = [layered_design(n, 1)] * 3
        s1 = build_sigma_set(b, levels, designs)
        s2 = build_sigma_set(mapped, levels, designs)
        np.testing.assert_allclose(s2.points, s1.points @ A.T + shift, atol=1e-9)
        np.testing.assert_array_equal(s2.weights, s1.weights)
        assert s2.beta == s1.beta


class TestErrors:
    def test_clustered_random_levels_in_one_dim(self):
        # five shells squeezed into the far tail outweigh the n + r_min budget
        rng = np.random.default_rng(2969)
        random_belief(rng, 1)
        levels = resolve_radii(importance_levels(6, LevelMode.RANDOM, rng), 1)
        designs = [layered_design(1, 1)] * 6
        assert min_stretched_radius(levels, designs) == pytest.approx(-0.05544, abs=1e-5)
        with pytest.raises(NegativeStretchRadius, match="r \\+ beta = -0.0554"):
            build_sigma_set(GaussianBelief.standard(1), levels, designs)

    def test_negative_stretch_radius(self):
        # a dense low-importance level drags the mean radius far past the top one
        angles = np.linspace(0.02, math.pi / 4 - 0.02, 60)
        dense = reference_sampling([[math.cos(t), math.sin(t)] for t in angles])
        levels = resolve_radii([ImportanceLevel(0.01), ImportanceLevel(1.0)], 2)
        with pytest.raises(NegativeStretchRadius):
            build_sigma_set(GaussianBelief.standard(2), levels, [dense, AXES2])

    def test_unresolved_levels(self):
        with pytest.raises(ValueError):
            build_sigma_set(GaussianBelief.standard(2), [ImportanceLevel(0.5)], [AXES2])

    def test_unordered_levels(self):
        levels = resolve_radii([ImportanceLevel(0.7), ImportanceLevel(0.3)], 2)
        with pytest.raises(OrderViolation):
            build_sigma_set(GaussianBelief.standard(2), levels, [AXES2, AXES2])

    def test_design_dimension_mismatch(self):
        with pytest.raises(ValueError):
            build_sigma_set(GaussianBelief.standard(3), resolve_radii([ImportanceLevel(0.5)], 3), [AXES2])

    def test_level_design_count_mismatch(self):
        with pytest.raises(ValueError):
            build_sigma_set(GaussianBelief.standard(2), closed_levels(), [AXES2])


class TestAllocation:
    def test_equal_uses_largest(self):
        assert allocate_designs(closed_levels(), [AXES2, HEX12, OCTAGON]) == [HEX12] * 3

    def test_density_reproduces_four_eight_twelve(self):
        chosen = allocate_designs(closed_levels(), [AXES2, OCTAGON, HEX12], Allocation.DENSITY)
        assert [d.size for d in chosen] == [4, 8, 12]

    def test_empty_catalogue(self):
        with pytest.raises(ValueError):
            allocate_designs(closed_levels(), [])


class TestApproximateExpectation:
    def setup_method(self):
        rng = np.random.default_rng(11)
        self.belief = random_belief(rng, 3)
        levels = resolve_radii(importance_levels(4), 3)
        self.s = build_sigma_set(self.belief, levels, [layered_design(3, 2)] * 4)

    def test_identity(self):
        np.testing.assert_allclose(approximate_expectation(self.s, lambda x: x), self.belief.mean, atol=1e-10)

    def test_outer_product(self):
        m = self.belief.mean
        got = approximate_expectation(self.s, lambda x: np.outer(x - m, x - m).ravel()).reshape(3, 3)
        assert rel_frob(got, self.belief.cov) <= 1e-8

    def test_squared_norm_standard_two(self):
        s = build_sigma_set(GaussianBelief.standard(2), closed_levels(), [OCTAGON] * 3)
        assert approximate_expectation(s, lambda x: x @ x) == pytest.approx(2.0, abs=1e-8)


def test_grid_shift_invariance_in_two_dims():
    # in two dimensions exp(-r/2) = d, so scaling every d shifts r uniformly and beta absorbs it
    b = GaussianBelief.standard(2)
    for N in (2, 5):
        s1 = build_sigma_set(b, resolve_radii(importance_levels(N, "grid"), 2), [OCTAGON] * N)
        s2 = build_sigma_set(b, resolve_radii(importance_levels(N, "gridclosed"), 2), [OCTAGON] * N)
        np.testing.assert_allclose(s1.points, s2.points, atol=1e-12)
        np.testing.assert_allclose(s1.weights, s2.weights, atol=1e-15)
