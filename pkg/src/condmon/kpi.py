"""SOM-based monitoring KPI, its filter, control limit and warning machine.

A monitored pattern r is scored by how far its distortion measure DM(r)
sits from the nominal average DM_delta:

    KPI(r) = 1 / (1 + |1 - DM(r) / DM_delta|)

so nominal patterns score near 1 and any deviation, high or low, pushes
the score toward 0. The KPI is smoothed with a truncated, renormalized
exponentially weighted average over the last W samples,

    filtered[t] = sum_k lambda^k raw[t-k] / sum_k lambda^k,  k < W,

where no-data samples are skipped and the weights renormalized over the
points actually present. The lower control limit is frozen at training
time from the filtered KPI of the training set:

    LCL = mean - 3 * std.

A warning opens after K consecutive filtered points strictly below the
LCL and closes after M consecutive points at or above it; no-data points
interrupt both runs. There is no upper control limit on the KPI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import som
from .contribution import baseline_contribution
from .errors import (
    ContractViolationError,
    InvalidBaselineError,
    InvalidInputError,
)

# Default smoothing horizon: 12 hours of 1-minute samples.
DEFAULT_WINDOW = 720

# Largest fraction of active variables a monitored pattern may be missing
# and still be scored (distances rescaled over the present ones).
MISSING_FRACTION_LIMIT = 0.2

STATUS_IN_CONTROL = "in-control"
STATUS_OUT_OF_CONTROL = "out-of-control"
STATUS_NO_DATA = "no-data"


def default_decay(window: int) -> float:
    """Decay giving the oldest in-window sample a relative weight of 1%."""
    if window <= 1:
        return 0.5
    return float(0.01 ** (1.0 / (window - 1)))


@dataclass(frozen=True)
class FilterConfig:
    """Truncated EWMA parameters: window length W and per-lag decay lambda."""

    window: int = DEFAULT_WINDOW
    decay: float | None = None

    def __post_init__(self):
        if self.window < 1:
            raise ContractViolationError(f"window must be >= 1, got {self.window}")
        if self.decay is not None and not (0.0 < self.decay < 1.0):
            raise ContractViolationError(
                f"decay must lie in (0, 1), got {self.decay}"
            )

    @property
    def resolved_decay(self) -> float:
        return self.decay if self.decay is not None else default_decay(self.window)

    def kernel(self) -> np.ndarray:
        return self.resolved_decay ** np.arange(self.window)


@dataclass(frozen=True)
class WarningPolicy:
    """Persistence rule: K consecutive bad points open, M good points close."""

    k_consecutive: int = 3
    m_release: int = 60

    def __post_init__(self):
        if self.k_consecutive < 1 or self.m_release < 1:
            raise ContractViolationError("persistence counts must be >= 1")


def kpi(dm_single: float, dm_delta: float) -> float:
    """Score one distortion value against the nominal average; in (0, 1]."""
    if dm_delta <= 0:
        raise InvalidBaselineError(
            f"nominal average distortion must be positive, got {dm_delta}"
        )
    if not math.isfinite(dm_single) or dm_single < 0:
        raise InvalidInputError(f"distortion must be finite and >= 0, got {dm_single}")
    return 1.0 / (1.0 + abs(1.0 - dm_single / dm_delta))


def kpi_many(dm: np.ndarray, dm_delta: float) -> np.ndarray:
    """Vectorized :func:`kpi`; NaN entries stay NaN (no-data)."""
    if dm_delta <= 0:
        raise InvalidBaselineError(
            f"nominal average distortion must be positive, got {dm_delta}"
        )
    dm = np.asarray(dm, dtype=float)
    return 1.0 / (1.0 + np.abs(1.0 - dm / dm_delta))


def ewma_filter(raw: np.ndarray, config: FilterConfig) -> np.ndarray:
    """Truncated, renormalized EWMA of a sample-spaced series.

    ``raw`` may contain NaN for no-data samples; their weights are dropped
    and the remaining weights renormalized. Output is NaN only where the
    whole trailing window is empty.
    """
    x = np.asarray(raw, dtype=float)
    if x.ndim != 1:
        raise ContractViolationError(f"expected 1-D series, got shape {x.shape}")
    avail = np.isfinite(x)
    filled = np.where(avail, x, 0.0)
    kernel = config.kernel()
    num = np.convolve(filled, kernel)[: x.shape[0]]
    den = np.convolve(avail.astype(float), kernel)[: x.shape[0]]
    out = np.full(x.shape[0], np.nan)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


class EwmaState:
    """Incremental form of :func:`ewma_filter` for one sample at a time."""

    def __init__(self, config: FilterConfig, seed_values: np.ndarray | None = None):
        self.config = config
        w = config.window
        self._values = np.zeros(w)
        self._avail = np.zeros(w)
        self._kernel = config.kernel()[::-1].copy()  # oldest-first
        self._pos = 0
        if seed_values is not None:
            for v in np.asarray(seed_values, dtype=float)[-w:]:
                self.push(v)

    def push(self, value: float) -> float:
        """Append one raw sample (NaN for no-data) and return the filtered value."""
        w = self.config.window
        ok = math.isfinite(value)
        self._values[self._pos % w] = value if ok else 0.0
        self._avail[self._pos % w] = 1.0 if ok else 0.0
        self._pos += 1
        # Ring layout: element (pos - 1 - k) % w has lag k. Roll so the
        # kernel (oldest-first) lines up with a contiguous slice.
        idx = (self._pos - 1) % w
        order = np.roll(np.arange(w), w - 1 - idx)
        vals = self._values[order]
        av = self._avail[order]
        if self._pos < w:
            vals = vals[w - self._pos :]
            av = av[w - self._pos :]
            kern = self._kernel[w - self._pos :]
        else:
            kern = self._kernel
        den = float(kern @ av)
        if den == 0.0:
            return float("nan")
        return float(kern @ (vals * av)) / den


@dataclass(frozen=True)
class NominalBaseline:
    """Everything frozen at training time that monitoring needs.

    ``filter_seed_values`` holds the tail of the training-set raw KPI
    series (NaN marking gaps) so a monitored stream that continues the
    training period starts with a warm filter window instead of a noisy
    cold start.
    """

    dm_delta: float
    kpi_mean: float
    kpi_std: float
    lcl: float
    contribution_baseline: np.ndarray
    filter_config: FilterConfig
    filter_seed_values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if self.dm_delta <= 0:
            raise InvalidBaselineError(
                f"nominal average distortion must be positive, got {self.dm_delta}"
            )


def compute_baseline(
    model: som.SomModel,
    train_data: np.ndarray,
    filter_config: FilterConfig | None = None,
    row_positions: np.ndarray | None = None,
) -> NominalBaseline:
    """Derive the KPI baseline from the model's own training set.

    ``row_positions`` maps each row of ``train_data`` to its slot on the
    original sampling timeline (rows dropped by cleaning leave gaps that
    the filter treats as no-data); default is a gap-free timeline. The
    first W filtered samples are discarded as filter warm-up before the
    mean/std are taken.
    """
    cfg = filter_config or FilterConfig()
    data = np.asarray(train_data, dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise InvalidInputError("training data must be a nonempty 2-D matrix")
    dm = som.distortion_many(model, data)
    dm_delta = float(dm.mean())
    if dm_delta <= 0:
        raise InvalidBaselineError(
            "training distortion is zero (constant data); KPI would be undefined"
        )
    if row_positions is None:
        positions = np.arange(data.shape[0])
    else:
        positions = np.asarray(row_positions, dtype=np.int64)
        if positions.shape != (data.shape[0],) or np.any(np.diff(positions) <= 0):
            raise InvalidInputError("row positions must be strictly increasing")
    horizon = int(positions[-1]) + 1
    raw = np.full(horizon, np.nan)
    raw[positions] = kpi_many(dm, dm_delta)
    filtered = ewma_filter(raw, cfg)
    warmup = min(cfg.window, horizon - 1)
    tail = filtered[warmup:]
    tail = tail[np.isfinite(tail)]
    if tail.size == 0:
        raise InvalidInputError(
            "no filtered KPI values survive the warm-up; training set too short"
        )
    kpi_mean = float(tail.mean())
    kpi_std = float(tail.std(ddof=1)) if tail.size > 1 else 0.0
    seed = raw[-(cfg.window - 1) :] if cfg.window > 1 else np.empty(0)
    return NominalBaseline(
        dm_delta=dm_delta,
        kpi_mean=kpi_mean,
        kpi_std=kpi_std,
        lcl=kpi_mean - 3.0 * kpi_std,
        contribution_baseline=baseline_contribution(model, data),
        filter_config=cfg,
        filter_seed_values=seed.copy(),
    )


@dataclass
class WarningEvent:
    """One contiguous out-of-control episode."""

    event_id: int
    start_index: int
    end_index: int | None = None  # index of the first point of the closing run
    peak_index: int = -1
    peak_value: float = math.nan
    implicated: list[tuple[str, float]] = field(default_factory=list)

    @property
    def open(self) -> bool:
        return self.end_index is None


class WarningStateMachine:
    """K-consecutive open / M-consecutive close episode tracker.

    ``sign`` is -1 when violations push the statistic down (KPI below its
    LCL) and +1 when they push it up (T2 above its UCL); peaks are tracked
    accordingly (minimum or maximum of the filtered statistic).
    """

    def __init__(self, policy: WarningPolicy, sign: int = -1):
        self.policy = policy
        self.sign = sign
        self.events: list[WarningEvent] = []
        self._run_bad = 0
        self._run_good = 0
        self._run_start = -1
        self._run_peak_index = -1
        self._run_peak_value = math.inf
        self._close_candidate = -1
        self._active: WarningEvent | None = None

    @property
    def active_event(self) -> WarningEvent | None:
        return self._active

    def step(self, index: int, out_of_control: bool | None, value: float) -> WarningEvent | None:
        """Advance one sample; returns an event on open/close transitions.

        ``out_of_control`` of None marks a no-data sample, which resets
        both persistence runs without changing the active episode.
        """
        if out_of_control is None:
            self._run_bad = 0
            self._run_good = 0
            return None
        badness = self.sign * value  # larger is worse; peak = most-bad point
        if self._active is None:
            if out_of_control:
                if self._run_bad == 0:
                    self._run_start = index
                    self._run_peak_index = index
                    self._run_peak_value = badness
                elif badness > self._run_peak_value:
                    self._run_peak_value = badness
                    self._run_peak_index = index
                self._run_bad += 1
                if self._run_bad >= self.policy.k_consecutive:
                    event = WarningEvent(
                        event_id=len(self.events) + 1,
                        start_index=self._run_start,
                        peak_index=self._run_peak_index,
                        peak_value=self.sign * self._run_peak_value,
                    )
                    self.events.append(event)
                    self._active = event
                    self._run_bad = 0
                    self._run_good = 0
                    return event
            else:
                self._run_bad = 0
            return None
        # An episode is active.
        if out_of_control:
            self._run_good = 0
            if badness > self.sign * self._active.peak_value:
                self._active.peak_value = value
                self._active.peak_index = index
        else:
            if self._run_good == 0:
                self._close_candidate = index
            self._run_good += 1
            if self._run_good >= self.policy.m_release:
                self._active.end_index = self._close_candidate
                closed = self._active
                self._active = None
                self._run_good = 0
                return closed
        return None


def run_state_machine(
    out_of_control: np.ndarray,
    values: np.ndarray,
    policy: WarningPolicy,
    sign: int = -1,
) -> tuple[list[WarningEvent], np.ndarray]:
    """Run the machine over a whole series.

    ``out_of_control`` is a float array with 1.0 (bad), 0.0 (good) or NaN
    (no data). Returns the events (last one possibly still open) and a
    per-sample active event id (0 = none). Samples between an episode's
    retroactive start and its confirmation carry its id.
    """
    machine = WarningStateMachine(policy, sign=sign)
    n = out_of_control.shape[0]
    ids = np.zeros(n, dtype=np.int64)
    for i in range(n):
        flag = out_of_control[i]
        status = None if math.isnan(flag) else bool(flag)
        machine.step(i, status, float(values[i]) if status else math.nan)
    for event in machine.events:
        end = event.end_index if event.end_index is not None else n
        ids[event.start_index : end] = event.event_id
    return machine.events, ids
