import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condmon.errors import ConfigError, EmptyTrainingSetError, InvalidInputError
from condmon.preprocess import (
    EXCLUDED_FAULT_WINDOW,
    FROZEN,
    MISSING,
    OUT_OF_LIMIT,
    OUTLIER,
    SPIKE,
    VALID,
    CleaningConfig,
    FaultWindow,
    ObservationFrame,
    VariableMeta,
    clean,
    concat_frames,
    exclude_fault_windows,
    fault_windows_to_csv,
    merge_fault_windows,
    normalize,
    parse_fault_windows_csv,
    read_frame_csv,
    write_frame_csv,
)

BASE = 1735689600  # 2025-01-01T00:00:00Z


def frame_from(values, period=60, quality=None):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    n, m = values.shape
    return ObservationFrame(
        timestamps=BASE + period * np.arange(n, dtype=np.int64),
        variables=[VariableMeta(id=f"v{j}") for j in range(m)],
        values=values,
        quality=(
            quality
            if quality is not None
            else np.where(np.isnan(values), MISSING, VALID).astype(np.uint8)
        ),
    )


class TestCsvParsing:
    def test_round_trip(self, rng):
        values = rng.normal(size=(6, 2))
        values[3, 1] = np.nan
        frame = frame_from(values)
        csv_text, flags_text = write_frame_csv(frame)
        back = read_frame_csv(csv_text, flags_source=flags_text)
        assert np.array_equal(back.timestamps, frame.timestamps)
        assert np.allclose(back.values, frame.values, equal_nan=True)
        assert np.array_equal(back.quality, frame.quality)

    def test_empty_cell_is_missing(self):
        text = "timestamp,a,b\n2025-01-01T00:00:00Z,1.5,\n2025-01-01T00:01:00Z,2.5,3\n"
        frame = read_frame_csv(text)
        assert frame.quality[0, 1] == MISSING
        assert np.isnan(frame.values[0, 1])
        assert frame.quality[0, 0] == VALID

    def test_non_monotone_rejected_with_row(self):
        text = (
            "timestamp,a\n"
            "2025-01-01T00:02:00Z,1\n"
            "2025-01-01T00:01:00Z,2\n"
        )
        with pytest.raises(InvalidInputError, match="row 2"):
            read_frame_csv(text)

    def test_irregular_spacing_rejected(self):
        text = (
            "timestamp,a\n"
            "2025-01-01T00:00:00Z,1\n"
            "2025-01-01T00:01:00Z,2\n"
            "2025-01-01T00:03:00Z,3\n"
        )
        with pytest.raises(InvalidInputError, match="spacing"):
            read_frame_csv(text)

    def test_non_numeric_cell_rejected(self):
        text = "timestamp,a\n2025-01-01T00:00:00Z,abc\n"
        with pytest.raises(InvalidInputError, match="non-numeric"):
            read_frame_csv(text)

    def test_missing_timestamp_header(self):
        with pytest.raises(InvalidInputError):
            read_frame_csv("time,a\n2025-01-01T00:00:00Z,1\n")

    def test_no_rows(self):
        with pytest.raises(InvalidInputError):
            read_frame_csv("timestamp,a\n")


class TestCleaningRules:
    def test_frozen_rule_exact_boundary(self):
        F = 5
        frame = frame_from(np.full((2 * F, 1), 7.0))
        cleaned, report = clean(frame, CleaningConfig(frozen_run=F))
        flags = cleaned.quality[:, 0]
        assert np.all(flags[: F - 1] == VALID)
        assert np.all(flags[F - 1 :] == FROZEN)
        assert report.counts["v0"]["frozen"] == F + 1

    def test_changing_series_not_frozen(self, rng):
        frame = frame_from(rng.normal(size=(50, 1)))
        cleaned, _ = clean(frame, CleaningConfig(frozen_run=5))
        assert np.all(cleaned.quality[:, 0] == VALID)

    def test_out_of_limit_single_cell(self, rng):
        values = rng.normal(size=(20, 1))
        values[7, 0] = 150.0
        frame = frame_from(values)
        cfg = CleaningConfig(limits={"v0": (-50.0, 100.0)})
        cleaned, report = clean(frame, cfg)
        assert cleaned.quality[7, 0] == OUT_OF_LIMIT
        assert report.counts["v0"]["out-of-limit"] == 1
        assert (cleaned.quality[:, 0] == VALID).sum() == 19

    def test_unknown_limit_variable_rejected(self, rng):
        frame = frame_from(rng.normal(size=(5, 1)))
        with pytest.raises(ConfigError):
            clean(frame, CleaningConfig(limits={"nope": (0.0, 1.0)}))

    def test_spike_flagged(self, rng):
        values = np.sin(np.linspace(0, 20, 300))[:, None] + rng.normal(
            scale=0.05, size=(300, 1)
        )
        values[150, 0] += 25.0
        frame = frame_from(values)
        cleaned, report = clean(frame, CleaningConfig(spike_sigma=8.0))
        assert cleaned.quality[150, 0] == SPIKE
        assert report.counts["v0"]["spike"] >= 1

    def test_outlier_flagged(self, rng):
        values = rng.normal(size=(200, 1))
        values[60, 0] = 40.0  # far beyond 5 IQR
        frame = frame_from(values)
        cleaned, _ = clean(frame, CleaningConfig(spike_sigma=1e9))  # isolate rule
        assert cleaned.quality[60, 0] in (OUTLIER, SPIKE)
        cleaned2, _ = clean(frame, CleaningConfig(spike_sigma=1e9, outlier_iqr=5.0))
        assert cleaned2.quality[60, 0] == OUTLIER

    def test_missing_takes_precedence(self):
        values = np.full((10, 1), 3.0)
        values[4, 0] = np.nan
        frame = frame_from(values)
        cleaned, report = clean(frame, CleaningConfig(frozen_run=3))
        assert cleaned.quality[4, 0] == MISSING
        counts = report.counts["v0"]
        assert sum(counts.values()) == 10  # partition

    def test_clean_random_walk_mostly_valid(self, rng):
        steps = rng.normal(scale=0.5, size=(2000, 3))
        values = 50 + np.cumsum(steps, axis=0)
        frame = frame_from(values)
        cleaned, report = clean(frame, CleaningConfig())
        for var in ("v0", "v1", "v2"):
            assert report.regular_fraction[var] >= 0.99

    def test_idempotent(self, rng):
        values = rng.normal(size=(500, 2))
        values[100:200, 0] = 5.0  # frozen stretch
        values[300, 1] = 60.0  # outlier
        values[44, 0] = np.nan
        frame = frame_from(values)
        cfg = CleaningConfig(frozen_run=30)
        once, report1 = clean(frame, cfg)
        twice, report2 = clean(once, cfg)
        assert np.array_equal(once.quality, twice.quality)
        assert report1.counts == report2.counts

    def test_below_threshold_listing(self):
        values = np.full((100, 2), 1.0)
        values[:, 1] = np.linspace(0, 1, 100)  # healthy ramp
        frame = frame_from(values)
        cleaned, report = clean(frame, CleaningConfig(frozen_run=10))
        assert "v0" in report.below_threshold  # almost fully frozen
        assert "v1" not in report.below_threshold

    @given(st.integers(0, 100))
    @settings(max_examples=25, deadline=None)
    def test_counts_partition_randomized(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(10, 120))
        values = rng.normal(size=(n, 2)) * rng.uniform(0.1, 10)
        mask = rng.random(size=(n, 2)) < 0.1
        values[mask] = np.nan
        if rng.random() < 0.5:
            lo = int(rng.integers(0, n // 2))
            values[lo : lo + int(rng.integers(1, n // 2)), 0] = 3.0
        frame = frame_from(values)
        _, report = clean(frame, CleaningConfig(frozen_run=5))
        for var in ("v0", "v1"):
            assert sum(report.counts[var].values()) == n


class TestFaultWindows:
    def test_empty_log_is_identity(self, rng):
        frame = frame_from(rng.normal(size=(10, 2)))
        out = exclude_fault_windows(frame, [])
        assert np.array_equal(out.quality, frame.quality)

    def test_full_cover_excludes_all(self, rng):
        frame = frame_from(rng.normal(size=(10, 2)))
        out = exclude_fault_windows(
            frame, [FaultWindow(int(frame.timestamps[0]), int(frame.timestamps[-1]))]
        )
        assert np.all(out.quality == EXCLUDED_FAULT_WINDOW)

    def test_overlapping_windows_merge(self):
        merged = merge_fault_windows(
            [FaultWindow(100, 200, "a"), FaultWindow(150, 300, "b"), FaultWindow(500, 600)]
        )
        assert [(w.start, w.end) for w in merged] == [(100, 300), (500, 600)]
        assert merged[0].note == "a; b"

    def test_exclusion_never_unflags(self, rng):
        values = rng.normal(size=(10, 1))
        values[2, 0] = np.nan
        frame = frame_from(values)
        out = exclude_fault_windows(
            frame, [FaultWindow(int(frame.timestamps[0]), int(frame.timestamps[-1]))]
        )
        assert np.all(out.quality != VALID)

    def test_csv_round_trip(self):
        windows = [FaultWindow(BASE, BASE + 3600, "pump check")]
        text = fault_windows_to_csv(windows)
        back = parse_fault_windows_csv(text)
        assert back == windows

    def test_windows_outside_frame_ignored(self, rng):
        frame = frame_from(rng.normal(size=(5, 1)))
        out = exclude_fault_windows(frame, [FaultWindow(0, 10)])  # epoch 1970
        assert np.all(out.quality == frame.quality)

    def test_inverted_window_rejected(self):
        with pytest.raises(InvalidInputError):
            FaultWindow(100, 50)


class TestNormalize:
    def test_two_value_convention_pinned(self):
        # sample std (ddof=1): {0, 2} -> mean 1, std sqrt(2), z = +-0.7071
        frame = frame_from(np.array([[0.0], [2.0]]))
        result = normalize(frame)
        assert np.allclose(result.matrix.ravel(), [-0.70710678, 0.70710678], atol=1e-8)

    def test_constant_variable_deactivated(self, rng):
        values = np.column_stack([np.full(30, 5.0), rng.normal(size=30)])
        frame = frame_from(values)
        result = normalize(frame)
        assert result.deactivated == ["v0"]
        assert result.matrix.shape == (30, 1)

    def test_already_normalized_is_near_identity(self, rng):
        raw = rng.normal(size=(400, 2))
        z = (raw - raw.mean(axis=0)) / raw.std(axis=0, ddof=1)
        result = normalize(frame_from(z))
        assert np.allclose(result.stats.means[result.stats.active], 0.0, atol=1e-12)
        assert np.allclose(result.stats.stds[result.stats.active], 1.0, atol=1e-12)
        assert np.allclose(result.matrix, z, atol=1e-10)

    def test_round_trip_denormalize(self, rng):
        values = rng.normal(size=(50, 3)) * [3, 0.1, 40] + [10, -4, 1000]
        frame = frame_from(values)
        result = normalize(frame)
        back = result.stats.invert(result.matrix)
        assert np.allclose(back, values, rtol=1e-10)

    def test_rows_with_missing_cells_dropped(self, rng):
        values = rng.normal(size=(20, 2))
        values[5, 0] = np.nan
        values[11, 1] = np.nan
        frame = frame_from(values)
        result = normalize(frame)
        assert result.dropped_rows == 2
        assert result.matrix.shape == (18, 2)
        assert 5 not in result.kept_rows and 11 not in result.kept_rows

    def test_all_constant_rejected(self):
        frame = frame_from(np.ones((10, 2)))
        with pytest.raises(EmptyTrainingSetError):
            normalize(frame)


class TestConcat:
    def test_contiguous_frames_merge(self, rng):
        a = frame_from(rng.normal(size=(5, 2)))
        b_vals = rng.normal(size=(4, 2))
        b = ObservationFrame(
            timestamps=a.timestamps[-1] + 60 * np.arange(1, 5, dtype=np.int64),
            variables=list(a.variables),
            values=b_vals,
            quality=np.full((4, 2), VALID, dtype=np.uint8),
        )
        merged = concat_frames([b, a])  # order independent
        assert merged.n_rows == 9
        assert np.all(np.diff(merged.timestamps) == 60)

    def test_overlap_rejected(self, rng):
        a = frame_from(rng.normal(size=(5, 2)))
        with pytest.raises(InvalidInputError):
            concat_frames([a, a])

    def test_off_grid_gap_rejected(self, rng):
        a = frame_from(rng.normal(size=(5, 2)))
        b = ObservationFrame(
            timestamps=a.timestamps[-1] + 90 + 60 * np.arange(3, dtype=np.int64),
            variables=list(a.variables),
            values=rng.normal(size=(3, 2)),
            quality=np.full((3, 2), VALID, dtype=np.uint8),
        )
        with pytest.raises(InvalidInputError):
            concat_frames([a, b])

    def test_header_mismatch_rejected(self, rng):
        a = frame_from(rng.normal(size=(5, 2)))
        b = ObservationFrame(
            timestamps=a.timestamps + 5 * 60,
            variables=[VariableMeta(id="x"), VariableMeta(id="y")],
            values=rng.normal(size=(5, 2)),
            quality=np.full((5, 2), VALID, dtype=np.uint8),
        )
        with pytest.raises(InvalidInputError):
            concat_frames([a, b])
