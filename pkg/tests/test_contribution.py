import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condmon.contribution import (
    BASELINE_FLOOR,
    baseline_contribution,
    contribution_ratios,
    contribution_vector,
    distance_vector,
    distance_vectors,
    normalized_squared,
)
from condmon.errors import ContractViolationError, DegenerateVectorError, InvalidInputError
from condmon.som import neighborhood_weights

from conftest import make_model


class TestDistanceVector:
    def test_pattern_on_single_cell_is_zero(self):
        model = make_model([[1.0, -1.0]], rows=1, cols=1)
        assert np.allclose(distance_vector(model, np.array([1.0, -1.0])), 0.0)

    def test_single_cell_offset(self):
        model = make_model([[1.0, 3.0]], rows=1, cols=1)
        d = distance_vector(model, np.array([3.0, 3.0]))  # pattern - m0 = (2, 0)
        assert np.allclose(d, [2.0, 0.0])

    def test_two_cell_hand_value(self):
        # pattern = m0, m1 = m0 - (0, 4), sigma = 1:
        # d = (1/2) e^{-1/2} (0, 4) = (0, 1.21306...)
        m0 = np.array([5.0, 7.0])
        m1 = m0 - np.array([0.0, 4.0])
        model = make_model([m0, m1], rows=1, cols=2, sigma=1.0)
        d = distance_vector(model, m0)
        assert d[0] == pytest.approx(0.0, abs=1e-15)
        assert d[1] == pytest.approx(2.0 * math.exp(-0.5), abs=1e-12)

    def test_batch_matches_scalar(self, rng):
        model = make_model(rng.normal(size=(6, 4)), rows=2, cols=3, sigma=0.9)
        data = rng.normal(size=(30, 4))
        batch = distance_vectors(model, data)
        singles = np.array([distance_vector(model, row) for row in data])
        assert np.allclose(batch, singles, rtol=1e-12)

    def test_all_missing_rejected(self):
        model = make_model([[0.0, 0.0]], rows=1, cols=1)
        with pytest.raises(InvalidInputError):
            distance_vector(model, np.array([np.nan, np.nan]))

    def test_missing_entries_contribute_zero(self, rng):
        model = make_model(rng.normal(size=(4, 3)), rows=2, cols=2)
        pattern = np.array([1.0, np.nan, -0.5])
        d = distance_vector(model, pattern)
        assert d[1] == 0.0
        assert np.isfinite(d).all()


class TestNormalizedSquared:
    def test_pythagorean_pair(self):
        out = normalized_squared(np.array([3.0, 4.0]))
        assert np.allclose(out, [9.0 / 25.0, 16.0 / 25.0])

    def test_axis_vector(self):
        out = normalized_squared(np.array([1.0, 0.0, 0.0, 0.0]))
        assert np.allclose(out, [1.0, 0.0, 0.0, 0.0])

    def test_symmetric_pair(self):
        assert np.allclose(normalized_squared(np.array([1.0, 1.0])), [0.5, 0.5])

    def test_zero_vector_rejected(self):
        with pytest.raises(DegenerateVectorError):
            normalized_squared(np.zeros(3))

    @given(st.integers(0, 200))
    @settings(max_examples=60, deadline=None)
    def test_sums_to_one(self, seed):
        rng = np.random.default_rng(seed)
        d = rng.normal(size=rng.integers(1, 12))
        if np.all(d == 0):
            return
        out = normalized_squared(d)
        assert out.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(out >= 0)


class TestContributionVector:
    def test_degenerate_pattern_is_uniform_and_neutral(self):
        model = make_model([[2.0, 2.0]], rows=1, cols=1)
        out = contribution_vector(model, np.array([2.0, 2.0]))
        assert out.neutral
        assert np.allclose(out.values, 0.5)

    def test_regular_pattern_not_neutral(self, rng):
        model = make_model(rng.normal(size=(4, 3)), rows=2, cols=2)
        out = contribution_vector(model, rng.normal(size=3))
        assert not out.neutral
        assert out.values.sum() == pytest.approx(1.0, abs=1e-12)


def _brute_force_baseline(codebook, weights, data):
    """Independent loop-based evaluation of the mean contribution profile."""
    total = np.zeros(data.shape[1])
    for row in data:
        dists = [np.linalg.norm(row - m) for m in codebook]
        c = int(np.argmin(dists))
        d = np.zeros(data.shape[1])
        for i, m in enumerate(codebook):
            d += weights[c, i] * (row - m)
        d /= codebook.shape[0]
        sq = d * d
        total += sq / sq.sum()
    return total / data.shape[0]


class TestBaselineContribution:
    def test_identical_patterns(self, rng):
        model = make_model(rng.normal(size=(4, 3)), rows=2, cols=2)
        p = rng.normal(size=3)
        data = np.tile(p, (9, 1))
        expected = contribution_vector(model, p).values
        assert np.allclose(baseline_contribution(model, data), expected, rtol=1e-12)

    def test_two_pattern_average(self):
        # patterns whose contribution vectors are (1,0) and (0,1)
        model = make_model([[0.0, 0.0]], rows=1, cols=1)
        data = np.array([[2.0, 0.0], [0.0, 5.0]])
        assert np.allclose(baseline_contribution(model, data), [0.5, 0.5])

    def test_matches_brute_force(self, rng):
        model = make_model(rng.normal(size=(6, 4)), rows=3, cols=2, sigma=1.2)
        data = rng.normal(size=(40, 4))
        w = neighborhood_weights(model.topology, model.sigma)
        oracle = _brute_force_baseline(model.codebook, w, data)
        assert np.allclose(baseline_contribution(model, data), oracle, rtol=1e-10)

    def test_mean_share_identity(self, rng):
        # definition identity: mean of per-pattern shares equals the baseline
        model = make_model(rng.normal(size=(4, 5)), rows=2, cols=2)
        data = rng.normal(size=(60, 5))
        shares = np.array([contribution_vector(model, r).values for r in data])
        assert np.allclose(shares.mean(axis=0), baseline_contribution(model, data),
                           atol=1e-9)

    def test_empty_rejected(self, rng):
        model = make_model(rng.normal(size=(4, 2)), rows=2, cols=2)
        with pytest.raises(InvalidInputError):
            baseline_contribution(model, np.empty((0, 2)))


class TestRatios:
    def test_identical_profiles_no_flags(self):
        base = np.array([0.25, 0.25, 0.5])
        out = contribution_ratios(base, base, threshold=1.3)
        assert np.allclose(out.ratios, 1.0)
        assert out.flagged == ()

    def test_direct_division(self):
        out = contribution_ratios(
            np.array([0.5, 0.5]), np.array([0.9, 0.1]), threshold=1.3
        )
        assert np.allclose(out.ratios, [1.8, 0.2])
        assert out.flagged == (0,)

    def test_uniform_baseline_scales_by_n(self):
        n = 5
        shares = np.array([0.4, 0.3, 0.1, 0.1, 0.1])
        out = contribution_ratios(np.full(n, 1.0 / n), shares, threshold=1.3)
        assert np.allclose(out.ratios, n * shares)

    def test_floor_prevents_infinite_ratio(self):
        base = np.array([0.0, 1.0])
        shares = np.array([0.3, 0.7])
        out = contribution_ratios(base, shares, threshold=1.3)
        assert out.ratios[0] == pytest.approx(0.3 / BASELINE_FLOOR)
        assert np.isfinite(out.ratios).all()

    def test_single_active_component(self):
        # one nonzero deviation: its share is 1, everyone else ratio 0
        shares = normalized_squared(np.array([0.0, 0.0, 2.5]))
        base = np.array([0.2, 0.3, 0.5])
        out = contribution_ratios(base, shares, threshold=1.3)
        assert shares[2] == 1.0
        assert out.ratios[0] == 0.0 and out.ratios[1] == 0.0
        assert out.flagged == (2,)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolationError):
            contribution_ratios(np.array([0.5, 0.5]), np.array([1.0]), 1.3)

    def test_flag_set_matches_definition(self, rng):
        base = rng.uniform(0.05, 0.5, size=6)
        shares = rng.uniform(0, 1, size=6)
        shares /= shares.sum()
        out = contribution_ratios(base, shares, threshold=1.3)
        expected = tuple(np.nonzero(out.ratios > 1.3)[0])
        assert out.flagged == expected


class TestPermutationEquivariance:
    @given(st.integers(0, 50))
    @settings(max_examples=30, deadline=None)
    def test_permuting_variables_permutes_shares(self, seed):
        rng = np.random.default_rng(seed)
        codebook = rng.normal(size=(4, 5))
        pattern = rng.normal(size=5)
        perm = rng.permutation(5)
        model = make_model(codebook, rows=2, cols=2)
        permuted = make_model(codebook[:, perm], rows=2, cols=2)
        original = contribution_vector(model, pattern).values
        shuffled = contribution_vector(permuted, pattern[perm]).values
        assert np.allclose(shuffled, original[perm], rtol=1e-10, atol=1e-12)
