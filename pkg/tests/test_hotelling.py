import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condmon.errors import (
    ContractViolationError,
    InsufficientDataError,
    SingularCovarianceError,
)
from condmon.hotelling import fit_baseline, t2, t2_many
from condmon.kpi import WarningPolicy, run_state_machine


class TestHandOracle:
    def test_one_dimensional_example(self):
        # rows {0, 2}: mean 1, sample covariance 2, t2(3) = 2*(1/2)*2 = 2
        base = fit_baseline(np.array([[0.0], [2.0]]))
        assert base.mean[0] == 1.0
        assert base.covariance[0, 0] == 2.0
        assert t2(base, np.array([3.0])) == pytest.approx(2.0, abs=1e-12)

    def test_pattern_at_mean_is_zero(self, rng):
        data = rng.normal(size=(50, 3))
        base = fit_baseline(data)
        assert t2(base, base.mean) == pytest.approx(0.0, abs=1e-12)

    def test_identity_covariance_unit_step(self, rng):
        # large sample of unit-variance independent data: covariance ~ I;
        # use exactly whitened data so covariance is exactly I
        raw = rng.normal(size=(500, 3))
        centered = raw - raw.mean(axis=0)
        cov = np.cov(centered, rowvar=False, ddof=1)
        whitened = centered @ np.linalg.inv(np.linalg.cholesky(cov)).T
        base = fit_baseline(whitened)
        assert np.allclose(base.covariance, np.eye(3), atol=1e-10)
        step = base.mean + np.array([1.0, 0.0, 0.0])
        assert t2(base, step) == pytest.approx(1.0, abs=1e-9)


class TestIdentities:
    @given(st.integers(0, 60))
    @settings(max_examples=40, deadline=None)
    def test_training_mean_t2_identity(self, seed):
        rng = np.random.default_rng(seed)
        n_obs = int(rng.integers(10, 200))
        n_var = int(rng.integers(1, 6))
        data = rng.normal(size=(n_obs, n_var)) @ rng.normal(size=(n_var, n_var))
        try:
            base = fit_baseline(data)
        except SingularCovarianceError:
            return
        values = t2_many(base, data)
        expected = n_var * (n_obs - 1) / n_obs
        assert values.mean() == pytest.approx(expected, rel=1e-8)

    @given(st.integers(0, 60))
    @settings(max_examples=30, deadline=None)
    def test_affine_invariance(self, seed):
        rng = np.random.default_rng(seed)
        data = rng.normal(size=(80, 4))
        patterns = rng.normal(size=(10, 4)) * 2
        a = rng.normal(size=(4, 4)) + 4 * np.eye(4)  # comfortably invertible
        b = rng.normal(size=4)
        base = fit_baseline(data)
        mapped = fit_baseline(data @ a.T + b)
        original = t2_many(base, patterns)
        transformed = t2_many(mapped, patterns @ a.T + b)
        assert np.allclose(original, transformed, rtol=1e-8)

    def test_symmetry_about_mean(self, rng):
        data = rng.normal(size=(60, 3))
        base = fit_baseline(data)
        v = rng.normal(size=3)
        assert t2(base, base.mean + v) == pytest.approx(
            t2(base, base.mean - v), rel=1e-12
        )

    def test_convexity_along_lines(self, rng):
        data = rng.normal(size=(60, 3))
        base = fit_baseline(data)
        p, q = rng.normal(size=3), rng.normal(size=3)
        mid = t2(base, (p + q) / 2)
        assert mid <= (t2(base, p) + t2(base, q)) / 2 + 1e-12

    def test_stored_stats_reproducible(self, rng):
        data = rng.normal(size=(120, 4))
        base = fit_baseline(data)
        values = t2_many(base, data)
        assert values.mean() == pytest.approx(base.t2_mean, rel=1e-12)
        assert values.std(ddof=1) == pytest.approx(base.t2_std, rel=1e-12)
        assert base.ucl == base.t2_mean + 3 * base.t2_std
        assert base.lcl == max(base.t2_mean - 3 * base.t2_std, 0.0)


class TestGuards:
    def test_duplicate_columns_rejected_with_names(self, rng):
        col = rng.normal(size=100)
        data = np.column_stack([col, col, rng.normal(size=100)])
        with pytest.raises(SingularCovarianceError) as exc_info:
            fit_baseline(data, variable_names=["a", "a_copy", "b"])
        suspects = exc_info.value.suspects
        assert "a" in suspects and "a_copy" in suspects

    def test_ridge_rescues_degenerate_fit(self, rng):
        col = rng.normal(size=100)
        data = np.column_stack([col, col])
        base = fit_baseline(data, ridge=1e-6)
        assert np.isfinite(base.ucl)

    def test_too_few_rows(self, rng):
        with pytest.raises(InsufficientDataError):
            fit_baseline(rng.normal(size=(3, 3)))

    def test_dimension_mismatch(self, rng):
        base = fit_baseline(rng.normal(size=(30, 2)))
        with pytest.raises(ContractViolationError):
            t2(base, np.array([1.0, 2.0, 3.0]))


class TestMonitoring:
    def test_stream_at_mean_never_out_of_control(self, rng):
        data = rng.normal(size=(100, 3))
        base = fit_baseline(data)
        stream = np.tile(base.mean, (50, 1))
        values = t2_many(base, stream)
        ooc = (values > base.ucl).astype(float)
        events, _ = run_state_machine(ooc, values, WarningPolicy(3, 60), sign=+1)
        assert events == []

    def test_nominal_fraction_beyond_ucl_small(self, rng):
        # 3-sigma limit on the skewed t2 statistic: small but nonzero tail
        train = rng.normal(size=(5000, 4))
        base = fit_baseline(train)
        fresh = rng.normal(size=(5000, 4))
        frac = float((t2_many(base, fresh) > base.ucl).mean())
        assert frac <= 0.02

    def test_missing_variable_is_no_data(self, rng):
        base = fit_baseline(rng.normal(size=(40, 3)))
        stream = rng.normal(size=(5, 3))
        stream[2, 1] = np.nan
        values = t2_many(base, stream)
        assert np.isnan(values[2])
        assert np.isfinite(np.delete(values, 2)).all()

    def test_shift_in_low_variance_direction_detected(self, rng):
        # anisotropic data: shift along the quiet axis has large t2
        scales = np.array([5.0, 1.0, 0.1])
        train = rng.normal(size=(2000, 3)) * scales
        base = fit_baseline(train)
        shifted = rng.normal(size=(50, 3)) * scales
        shifted[:, 2] += 4 * 0.1  # 4 sigma along the quiet axis
        values = t2_many(base, shifted)
        ooc = (values > base.ucl).astype(float)
        events, _ = run_state_machine(ooc, values, WarningPolicy(3, 60), sign=+1)
        assert len(events) >= 1
        assert events[0].start_index <= 3
