"""Data-quality pipeline from raw sensor CSV to a clean, normalized matrix.

Every cell of a frame carries exactly one quality flag. Cleaning flags, in
order of precedence: missing (empty cell), out-of-limit (outside declared
physical limits), frozen (the ``F``-th and later samples of a run of
identical consecutive values), spike (first difference beyond ``s`` times
its trailing rolling std) and outlier (beyond ``q`` IQRs from the median).
All rule statistics are computed from raw values only, never from earlier
flags, so cleaning an already-cleaned frame reproduces the same flags.

Operator-confirmed fault windows are excluded separately and override any
other flag. Normalization is per-variable z-scoring over valid cells with
the sample (ddof=1) standard deviation; constant variables are deactivated
and rows missing any active variable are dropped from training.

File formats: a values CSV (first column ISO-8601 UTC timestamp, one
column per variable id, empty cell = missing), an optional flags CSV of
the same shape holding flag tokens, and a fault-window CSV with columns
start, end, note.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, EmptyTrainingSetError, InvalidInputError


def _as_buffer(source: str | Path) -> io.StringIO:
    """CSV text (str) or file path (Path) to a readable buffer."""
    if isinstance(source, Path):
        return io.StringIO(source.read_text())
    return io.StringIO(source)

VALID = 0
MISSING = 1
FROZEN = 2
OUT_OF_LIMIT = 3
SPIKE = 4
OUTLIER = 5
EXCLUDED_FAULT_WINDOW = 6

FLAG_TOKENS = {
    VALID: "valid",
    MISSING: "missing",
    FROZEN: "frozen",
    OUT_OF_LIMIT: "out-of-limit",
    SPIKE: "spike",
    OUTLIER: "outlier",
    EXCLUDED_FAULT_WINDOW: "excluded-fault-window",
}
TOKEN_FLAGS = {v: k for k, v in FLAG_TOKENS.items()}

TIMESTAMP_COLUMN = "timestamp"


@dataclass(frozen=True)
class VariableMeta:
    """One sensor channel: id from the CSV header plus optional metadata."""

    id: str
    name: str = ""
    unit: str = ""
    min_limit: float | None = None
    max_limit: float | None = None

    def __post_init__(self):
        if not self.name:
            object.__setattr__(self, "name", self.id)


@dataclass
class ObservationFrame:
    """Timestamped N x n value matrix with a per-cell quality flag."""

    timestamps: np.ndarray  # int64 epoch seconds, strictly increasing
    variables: list[VariableMeta]
    values: np.ndarray  # float, NaN where missing
    quality: np.ndarray  # uint8 flag codes

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    @property
    def variable_ids(self) -> list[str]:
        return [v.id for v in self.variables]

    @property
    def period_seconds(self) -> int:
        if self.n_rows < 2:
            return 60
        return int(self.timestamps[1] - self.timestamps[0])

    def copy(self) -> "ObservationFrame":
        return ObservationFrame(
            timestamps=self.timestamps.copy(),
            variables=list(self.variables),
            values=self.values.copy(),
            quality=self.quality.copy(),
        )


@dataclass
class CleaningConfig:
    """Rule constants; the defaults are deliberate, not derived."""

    frozen_run: int = 60
    spike_sigma: float = 8.0
    spike_window: int = 720
    outlier_iqr: float = 5.0
    min_regular_fraction: float = 0.8
    limits: dict[str, tuple[float | None, float | None]] = field(default_factory=dict)


@dataclass
class CleaningReport:
    """Flag histogram per variable; counts partition the N samples."""

    n_rows: int
    counts: dict[str, dict[str, int]]
    regular_fraction: dict[str, float]
    below_threshold: list[str]

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "counts": self.counts,
            "regular_fraction": self.regular_fraction,
            "below_threshold": self.below_threshold,
        }


@dataclass(frozen=True)
class FaultWindow:
    """Operator-confirmed anomalous interval [start, end], epoch seconds."""

    start: int
    end: int
    note: str = ""

    def __post_init__(self):
        if self.end < self.start:
            raise InvalidInputError(
                f"fault window end {self.end} precedes start {self.start}"
            )


def _parse_timestamps(raw: pd.Series) -> np.ndarray:
    try:
        ts = pd.to_datetime(raw, utc=True, format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise InvalidInputError(f"unparseable timestamp column: {exc}") from exc
    if ts.isna().any():
        row = int(np.nonzero(ts.isna().to_numpy())[0][0])
        raise InvalidInputError(f"unparseable timestamp at data row {row + 1}")
    return (ts.astype("int64") // 1_000_000_000).to_numpy()


def _check_timeline(ts: np.ndarray) -> None:
    if ts.shape[0] < 2:
        return
    diffs = np.diff(ts)
    bad = np.nonzero(diffs <= 0)[0]
    if bad.size:
        row = int(bad[0]) + 1
        raise InvalidInputError(
            f"timestamps must be strictly increasing; data row {row + 1} is not"
        )
    irregular = np.nonzero(diffs != diffs[0])[0]
    if irregular.size:
        row = int(irregular[0]) + 1
        raise InvalidInputError(
            f"timestamps must be evenly spaced ({int(diffs[0])} s); "
            f"data row {row + 1} breaks the spacing"
        )


def read_frame_csv(
    source: str | Path,
    flags_source: str | Path | None = None,
    variables: list[VariableMeta] | None = None,
) -> ObservationFrame:
    """Parse a values CSV (text or path) into a frame.

    Cells that are empty become missing; non-numeric cells are rejected.
    An optional flags CSV restores a previously cleaned frame's quality
    matrix.
    """
    try:
        df = pd.read_csv(_as_buffer(source), dtype=str, keep_default_na=False)
    except Exception as exc:
        raise InvalidInputError(f"unreadable CSV: {exc}") from exc
    if df.shape[1] < 2 or df.columns[0] != TIMESTAMP_COLUMN:
        raise InvalidInputError(
            f"first column must be '{TIMESTAMP_COLUMN}' followed by variable columns"
        )
    if df.shape[0] == 0:
        raise InvalidInputError("CSV contains no data rows")
    ts = _parse_timestamps(df.iloc[:, 0])
    _check_timeline(ts)
    var_ids = list(df.columns[1:])
    raw = df.iloc[:, 1:].to_numpy()
    values = np.full(raw.shape, np.nan)
    nonempty = raw != ""
    if nonempty.any():
        try:
            values[nonempty] = raw[nonempty].astype(float)
        except ValueError:
            for i, j in zip(*np.nonzero(nonempty)):
                try:
                    values[i, j] = float(raw[i, j])
                except ValueError as exc:
                    raise InvalidInputError(
                        f"non-numeric value {raw[i, j]!r} for variable "
                        f"{var_ids[j]!r} at data row {i + 1}"
                    ) from exc
    values[~np.isfinite(values)] = np.nan
    quality = np.where(np.isnan(values), MISSING, VALID).astype(np.uint8)
    if variables is None:
        variables = [VariableMeta(id=v) for v in var_ids]
    elif [v.id for v in variables] != var_ids:
        raise InvalidInputError("variable metadata does not match CSV header")
    frame = ObservationFrame(
        timestamps=ts, variables=variables, values=values, quality=quality
    )
    if flags_source is not None:
        _apply_flags_csv(frame, flags_source)
    return frame


def _apply_flags_csv(frame: ObservationFrame, source: str | Path) -> None:
    df = pd.read_csv(_as_buffer(source), dtype=str, keep_default_na=False)
    if list(df.columns) != [TIMESTAMP_COLUMN] + frame.variable_ids:
        raise InvalidInputError("flags CSV header does not match the values CSV")
    if df.shape[0] != frame.n_rows:
        raise InvalidInputError("flags CSV row count does not match the values CSV")
    tokens = df.iloc[:, 1:].to_numpy()
    quality = np.empty(tokens.shape, dtype=np.uint8)
    for token, code in TOKEN_FLAGS.items():
        quality[tokens == token] = code
    unknown = ~np.isin(tokens, list(TOKEN_FLAGS))
    if unknown.any():
        i, j = next(zip(*np.nonzero(unknown)))
        raise InvalidInputError(
            f"unknown flag token {tokens[i, j]!r} at data row {i + 1}"
        )
    frame.quality = quality


def format_timestamps(ts: np.ndarray) -> list[str]:
    as_dt = pd.to_datetime(ts, unit="s", utc=True)
    return [t.strftime("%Y-%m-%dT%H:%M:%SZ") for t in as_dt]


def write_frame_csv(frame: ObservationFrame) -> tuple[str, str]:
    """Serialize a frame to (values CSV, flags CSV) text."""
    stamps = format_timestamps(frame.timestamps)
    vals = pd.DataFrame(frame.values, columns=frame.variable_ids)
    vals.insert(0, TIMESTAMP_COLUMN, stamps)
    tokens = np.vectorize(FLAG_TOKENS.get)(frame.quality)
    flags = pd.DataFrame(tokens, columns=frame.variable_ids)
    flags.insert(0, TIMESTAMP_COLUMN, stamps)
    return (
        vals.to_csv(index=False, float_format="%.10g"),
        flags.to_csv(index=False),
    )


def _flag_frozen(col: np.ndarray, quality: np.ndarray, run_min: int) -> None:
    """Flag the run_min-th and later samples of each constant run."""
    n = col.shape[0]
    if n == 0:
        return
    present = ~np.isnan(col)
    same = np.zeros(n, dtype=bool)
    same[1:] = present[1:] & present[:-1] & (col[1:] == col[:-1])
    # same[0] is always False, so every index has a run start at or before it.
    starts = np.where(~same, np.arange(n), 0)
    run_start = np.maximum.accumulate(starts)
    run = np.arange(n) - run_start + 1
    quality[present & (run >= run_min)] = FROZEN


def _flag_spikes(col: np.ndarray, quality: np.ndarray, cfg: CleaningConfig) -> None:
    deltas = np.diff(col, prepend=np.nan)
    s = pd.Series(deltas)
    roll = s.rolling(cfg.spike_window, min_periods=30).std(ddof=1).shift(1).to_numpy()
    mean_abs = s.abs().rolling(cfg.spike_window, min_periods=30).mean().shift(1).to_numpy()
    finite = np.isfinite(deltas)
    if finite.sum() >= 2:
        global_std = float(np.nanstd(deltas, ddof=1))
        global_mean_abs = float(np.nanmean(np.abs(deltas)))
    else:
        global_std, global_mean_abs = float("nan"), float("nan")
    scale = np.where(np.isfinite(roll), roll, global_std)
    typical = np.where(np.isfinite(mean_abs), mean_abs, global_mean_abs)
    with np.errstate(invalid="ignore"):
        # A spread below 1e-9 of the typical step is floating-point residue
        # of deterministic increments; with exact arithmetic it would be 0
        # and the rule inactive.
        active = scale > np.maximum(1e-9 * typical, 0.0)
        hit = finite & active & (np.abs(deltas) > cfg.spike_sigma * scale)
    quality[hit] = SPIKE


def _flag_outliers(col: np.ndarray, quality: np.ndarray, cfg: CleaningConfig) -> None:
    present = col[~np.isnan(col)]
    if present.size < 4:
        return
    q1, median, q3 = np.percentile(present, [25, 50, 75])
    iqr = q3 - q1
    if iqr <= 0:
        return
    with np.errstate(invalid="ignore"):
        hit = np.abs(col - median) > cfg.outlier_iqr * iqr
    hit &= ~np.isnan(col)
    quality[hit] = OUTLIER


def clean(
    frame: ObservationFrame, config: CleaningConfig | None = None
) -> tuple[ObservationFrame, CleaningReport]:
    """Apply the cleaning rules and report the flag histogram.

    Idempotent: all rule statistics come from raw values, so re-cleaning a
    cleaned frame reproduces its flags. Fault-window exclusions already on
    the frame are preserved.
    """
    cfg = config or CleaningConfig()
    unknown = set(cfg.limits) - set(frame.variable_ids)
    if unknown:
        raise ConfigError(
            f"limits configured for unknown variables: {', '.join(sorted(unknown))}"
        )
    out = frame.copy()
    previously_excluded = frame.quality == EXCLUDED_FAULT_WINDOW
    n = out.n_rows
    quality = np.full(out.values.shape, VALID, dtype=np.uint8)
    for j, var in enumerate(out.variables):
        col = out.values[:, j]
        qcol = quality[:, j]
        _flag_outliers(col, qcol, cfg)
        _flag_spikes(col, qcol, cfg)
        _flag_frozen(col, qcol, cfg.frozen_run)
        lo, hi = cfg.limits.get(var.id, (var.min_limit, var.max_limit))
        with np.errstate(invalid="ignore"):
            if lo is not None:
                qcol[col < lo] = OUT_OF_LIMIT
            if hi is not None:
                qcol[col > hi] = OUT_OF_LIMIT
        qcol[np.isnan(col)] = MISSING
    quality[previously_excluded] = EXCLUDED_FAULT_WINDOW
    out.quality = quality
    counts = {}
    regular = {}
    below = []
    for j, var in enumerate(out.variables):
        col_counts = {
            token: int((quality[:, j] == code).sum())
            for code, token in FLAG_TOKENS.items()
        }
        counts[var.id] = col_counts
        frac = col_counts["valid"] / n if n else 0.0
        regular[var.id] = frac
        if frac < cfg.min_regular_fraction:
            below.append(var.id)
    report = CleaningReport(
        n_rows=n, counts=counts, regular_fraction=regular, below_threshold=below
    )
    return out, report


def merge_fault_windows(windows: list[FaultWindow]) -> list[FaultWindow]:
    """Normalize a window log: sort and merge overlapping intervals."""
    if not windows:
        return []
    ordered = sorted(windows, key=lambda w: (w.start, w.end))
    merged = [ordered[0]]
    for w in ordered[1:]:
        last = merged[-1]
        if w.start <= last.end:
            note = last.note if last.note else w.note
            if w.note and w.note != last.note and last.note:
                note = f"{last.note}; {w.note}"
            merged[-1] = FaultWindow(last.start, max(last.end, w.end), note)
        else:
            merged.append(w)
    return merged


def parse_fault_windows_csv(source: str | Path) -> list[FaultWindow]:
    """Read a fault-window log CSV with columns start, end, note."""
    df = pd.read_csv(_as_buffer(source), dtype=str, keep_default_na=False)
    required = {"start", "end"}
    if not required.issubset(df.columns):
        raise InvalidInputError("fault-window CSV needs 'start' and 'end' columns")
    windows = []
    for _, row in df.iterrows():
        start = _parse_timestamps(pd.Series([row["start"]]))[0]
        end = _parse_timestamps(pd.Series([row["end"]]))[0]
        windows.append(FaultWindow(int(start), int(end), row.get("note", "")))
    return merge_fault_windows(windows)


def fault_windows_to_csv(windows: list[FaultWindow]) -> str:
    rows = [
        {
            "start": format_timestamps(np.array([w.start]))[0],
            "end": format_timestamps(np.array([w.end]))[0],
            "note": w.note,
        }
        for w in windows
    ]
    return pd.DataFrame(rows, columns=["start", "end", "note"]).to_csv(index=False)


def exclude_fault_windows(
    frame: ObservationFrame, windows: list[FaultWindow]
) -> ObservationFrame:
    """Flag every cell inside any window (endpoints inclusive) as excluded."""
    out = frame.copy()
    for w in merge_fault_windows(windows):
        rows = (out.timestamps >= w.start) & (out.timestamps <= w.end)
        out.quality[rows, :] = EXCLUDED_FAULT_WINDOW
    return out


def concat_frames(frames: list[ObservationFrame]) -> ObservationFrame:
    """Concatenate frames in time order; headers and spacing must agree."""
    if not frames:
        raise InvalidInputError("no frames to concatenate")
    if len(frames) == 1:
        return frames[0].copy()
    ordered = sorted(frames, key=lambda f: int(f.timestamps[0]))
    head = ordered[0]
    for f in ordered[1:]:
        if f.variable_ids != head.variable_ids:
            raise InvalidInputError("frames have different variable columns")
    merged = ObservationFrame(
        timestamps=np.concatenate([f.timestamps for f in ordered]),
        variables=list(head.variables),
        values=np.vstack([f.values for f in ordered]),
        quality=np.vstack([f.quality for f in ordered]),
    )
    diffs = np.diff(merged.timestamps)
    if (diffs <= 0).any():
        raise InvalidInputError("concatenated frames overlap in time")
    period = head.period_seconds
    if (diffs % period != 0).any():
        raise InvalidInputError(
            f"concatenated frames break the {period}-second sampling grid"
        )
    return merged


@dataclass(frozen=True)
class NormStats:
    """Frozen per-variable z-scoring statistics (sample std, ddof=1)."""

    variable_ids: tuple[str, ...]
    means: np.ndarray
    stds: np.ndarray
    active: np.ndarray  # bool per variable

    @property
    def active_ids(self) -> list[str]:
        return [v for v, a in zip(self.variable_ids, self.active) if a]

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Z-score raw rows onto the active variables; NaN passes through."""
        x = np.asarray(values, dtype=float)
        squeeze = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != len(self.variable_ids):
            raise InvalidInputError(
                f"pattern has {x.shape[1]} variables, expected {len(self.variable_ids)}"
            )
        z = (x[:, self.active] - self.means[self.active]) / self.stds[self.active]
        return z[0] if squeeze else z

    def invert(self, z: np.ndarray) -> np.ndarray:
        """Map normalized active-variable rows back to raw units."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return z * self.stds[self.active] + self.means[self.active]


@dataclass
class NormalizationResult:
    matrix: np.ndarray  # rows fully valid on active variables, z-scored
    stats: NormStats
    kept_rows: np.ndarray  # indices into the frame's rows
    dropped_rows: int
    deactivated: list[str]


def normalize(frame: ObservationFrame) -> NormalizationResult:
    """Z-score valid cells and keep rows fully observed on active variables."""
    valid = frame.quality == VALID
    n_vars = frame.n_vars
    means = np.zeros(n_vars)
    stds = np.zeros(n_vars)
    active = np.zeros(n_vars, dtype=bool)
    for j in range(n_vars):
        cells = frame.values[valid[:, j], j]
        if cells.size >= 2:
            means[j] = cells.mean()
            stds[j] = cells.std(ddof=1)
            active[j] = stds[j] > 0
    deactivated = [v for v, a in zip(frame.variable_ids, active) if not a]
    if not active.any():
        raise EmptyTrainingSetError("no variable has nonzero variance on valid cells")
    keep = valid[:, active].all(axis=1)
    kept_rows = np.nonzero(keep)[0]
    if kept_rows.size == 0:
        raise EmptyTrainingSetError("no rows are fully valid on the active variables")
    stats = NormStats(
        variable_ids=tuple(frame.variable_ids),
        means=means,
        stds=stds,
        active=active,
    )
    matrix = stats.apply(frame.values[kept_rows])
    return NormalizationResult(
        matrix=matrix,
        stats=stats,
        kept_rows=kept_rows,
        dropped_rows=frame.n_rows - kept_rows.size,
        deactivated=deactivated,
    )
