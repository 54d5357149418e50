"""Deterministic plant-like signal generator with injectable faults.

Signals follow a latent-factor model: a daily sinusoid plus shared AR(1)
factors, mixed into each variable through per-variable loadings, plus
independent Gaussian noise:

    x_j(t) = base_j + amp_j * sin(2 pi t / P) + sum_k load_jk * f_k(t)
             + noise_j * e_j(t)

Randomness comes from the counter-based Philox generator keyed per
(seed, stream), one stream per factor and per variable, so adding a
variable never perturbs the others' draws and output is bit-reproducible
across platforms.

Faults are overlaid on the nominal signal: mean shifts, linear drifts,
frozen sensors (value held at onset), hourly spike trains and extra-noise
variance inflation. Magnitudes are expressed in units of the target
variable's nominal standard deviation. Ground-truth labels mark the exact
affected cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import ContractViolationError, InvalidInputError
from .preprocess import ObservationFrame, VariableMeta, VALID, MISSING

SECONDS_PER_DAY = 86400

FAULT_KINDS = ("mean-shift", "drift", "sensor-freeze", "spike-train", "variance-inflation")

SPIKE_TRAIN_PERIOD = 60  # samples between spikes

# Philox stream ids: factors, per-variable noise, per-variable fault noise.
_STREAM_FACTOR = 10
_STREAM_NOISE = 1000
_STREAM_FAULT = 2000


@dataclass(frozen=True)
class VariableSpec:
    name: str
    base: float
    daily_amplitude: float = 0.0
    noise_std: float = 1.0
    loadings: tuple[float, ...] = ()
    unit: str = ""

    def __post_init__(self):
        if self.noise_std < 0:
            raise ContractViolationError("noise_std must be >= 0")


@dataclass(frozen=True)
class SignalSpec:
    variables: tuple[VariableSpec, ...]
    n_samples: int
    period_seconds: int = 60
    seed: int = 0
    start_epoch: int = 1735689600  # 2025-01-01T00:00:00Z
    ar_coefficient: float = 0.98

    def __post_init__(self):
        if self.n_samples < 1:
            raise ContractViolationError("n_samples must be >= 1")
        if not (0.0 <= self.ar_coefficient < 1.0):
            raise ContractViolationError("ar_coefficient must lie in [0, 1)")

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_factors(self) -> int:
        return max((len(v.loadings) for v in self.variables), default=0)


@dataclass(frozen=True)
class FaultSpec:
    kind: str
    variable: int
    onset: int  # sample index
    duration: int  # samples
    magnitude: float = 4.0  # in units of the variable's nominal std

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise ContractViolationError(
                f"unknown fault kind {self.kind!r}; expected one of {FAULT_KINDS}"
            )
        if self.duration < 1:
            raise ContractViolationError("fault duration must be >= 1 sample")
        if self.onset < 0:
            raise ContractViolationError("fault onset must be >= 0")

    @property
    def end(self) -> int:
        return self.onset + self.duration


def nominal_std(spec: SignalSpec, j: int) -> float:
    """Analytic stationary std of variable j (sinusoid + unit AR factors + noise)."""
    v = spec.variables[j]
    var = v.noise_std**2 + v.daily_amplitude**2 / 2.0
    var += sum(l * l for l in v.loadings)
    return math.sqrt(var)


def _stream(seed: int, stream: int) -> np.random.Generator:
    key = np.array([seed % 2**64, stream % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _ar1_series(rng: np.random.Generator, n: int, phi: float) -> np.ndarray:
    """Stationary unit-variance AR(1): x_t = phi x_{t-1} + sqrt(1-phi^2) e_t."""
    eps = rng.standard_normal(n)
    eps[0] /= math.sqrt(1.0 - phi * phi) if phi > 0 else 1.0
    return lfilter([math.sqrt(1.0 - phi * phi)], [1.0, -phi], eps)


def _validate_faults(spec: SignalSpec, faults: list[FaultSpec]) -> None:
    by_var: dict[int, list[FaultSpec]] = {}
    for f in faults:
        if not (0 <= f.variable < spec.n_vars):
            raise ContractViolationError(
                f"fault targets variable {f.variable}, spec has {spec.n_vars}"
            )
        if f.end > spec.n_samples:
            raise InvalidInputError(
                f"fault on variable {f.variable} ends at sample {f.end}, "
                f"beyond the {spec.n_samples}-sample signal"
            )
        by_var.setdefault(f.variable, []).append(f)
    for j, var_faults in by_var.items():
        ordered = sorted(var_faults, key=lambda f: f.onset)
        for a, b in zip(ordered, ordered[1:]):
            if b.onset < a.end:
                raise InvalidInputError(
                    f"overlapping faults on variable {j}: "
                    f"[{a.onset}, {a.end}) and [{b.onset}, {b.end})"
                )


def generate(
    spec: SignalSpec, faults: list[FaultSpec] | None = None
) -> tuple[ObservationFrame, np.ndarray]:
    """Build the frame and a uint8 label matrix marking fault cells."""
    faults = list(faults or [])
    _validate_faults(spec, faults)
    n, m = spec.n_samples, spec.n_vars
    t = np.arange(n)
    day_samples = SECONDS_PER_DAY / spec.period_seconds
    sinus = np.sin(2.0 * math.pi * t / day_samples)
    factors = np.empty((spec.n_factors, n))
    for k in range(spec.n_factors):
        factors[k] = _ar1_series(
            _stream(spec.seed, _STREAM_FACTOR + k), n, spec.ar_coefficient
        )
    values = np.empty((n, m))
    for j, v in enumerate(spec.variables):
        x = np.full(n, v.base)
        x += v.daily_amplitude * sinus
        for k, load in enumerate(v.loadings):
            x += load * factors[k]
        if v.noise_std > 0:
            x += v.noise_std * _stream(spec.seed, _STREAM_NOISE + j).standard_normal(n)
        values[:, j] = x
    labels = np.zeros((n, m), dtype=np.uint8)
    for f in faults:
        j = f.variable
        window = slice(f.onset, f.end)
        scale = f.magnitude * nominal_std(spec, j)
        if f.kind == "mean-shift":
            values[window, j] += scale
            labels[window, j] = 1
        elif f.kind == "drift":
            values[window, j] += np.linspace(0.0, scale, f.duration)
            labels[window, j] = 1
        elif f.kind == "sensor-freeze":
            values[window, j] = values[f.onset, j]
            labels[window, j] = 1
        elif f.kind == "spike-train":
            hits = np.arange(f.onset, f.end, SPIKE_TRAIN_PERIOD)
            values[hits, j] += scale
            labels[hits, j] = 1
        elif f.kind == "variance-inflation":
            extra = _stream(spec.seed, _STREAM_FAULT + j).standard_normal(f.duration)
            values[window, j] += scale * extra
            labels[window, j] = 1
    timestamps = spec.start_epoch + spec.period_seconds * t
    frame = ObservationFrame(
        timestamps=timestamps.astype(np.int64),
        variables=[VariableMeta(id=v.name, unit=v.unit) for v in spec.variables],
        values=values,
        quality=np.full((n, m), VALID, dtype=np.uint8),
    )
    return frame, labels


def labels_to_csv(frame: ObservationFrame, labels: np.ndarray) -> str:
    """Sidecar CSV: timestamp column plus one 0/1 column per variable."""
    import pandas as pd

    from .preprocess import format_timestamps

    df = pd.DataFrame(labels, columns=frame.variable_ids)
    df.insert(0, "timestamp", format_timestamps(frame.timestamps))
    return df.to_csv(index=False)


DEFAULT_VARIABLES = (
    VariableSpec("gen_temp_1", base=55.0, daily_amplitude=4.0, noise_std=0.4, loadings=(1.5, 0.0), unit="degC"),
    VariableSpec("gen_temp_2", base=52.0, daily_amplitude=3.5, noise_std=0.4, loadings=(1.4, 0.0), unit="degC"),
    VariableSpec("brg_temp", base=48.0, daily_amplitude=2.0, noise_std=0.3, loadings=(1.0, 0.3), unit="degC"),
    VariableSpec("oil_press", base=96.0, daily_amplitude=1.0, noise_std=0.8, loadings=(0.0, 1.2), unit="bar"),
    VariableSpec("pen_press", base=310.0, daily_amplitude=2.0, noise_std=1.0, loadings=(0.0, 1.5), unit="bar"),
    VariableSpec("flow", base=88.0, daily_amplitude=3.0, noise_std=1.2, loadings=(0.4, 1.8), unit="m3s"),
    VariableSpec("vib_x", base=2.4, daily_amplitude=0.2, noise_std=0.35, loadings=(0.3, 0.2), unit="mms"),
    VariableSpec("vib_y", base=2.2, daily_amplitude=0.2, noise_std=0.3, loadings=(0.25, 0.2), unit="mms"),
)


def build_signal_spec(section) -> tuple[SignalSpec, list[FaultSpec]]:
    """Turn the [synthetic] config section into specs.

    Without configured variables the default eight-variable plant set is
    used. Fault targets are referenced by variable name.
    """
    import pandas as pd

    if section.variables:
        variables = tuple(
            VariableSpec(
                name=v.name,
                base=v.base,
                daily_amplitude=v.daily_amplitude,
                noise_std=v.noise_std,
                loadings=tuple(v.loadings),
                unit=v.unit,
            )
            for v in section.variables
        )
    else:
        variables = DEFAULT_VARIABLES
    start = int(pd.to_datetime(section.start, utc=True).timestamp())
    spec = SignalSpec(
        variables=variables,
        n_samples=section.n_samples,
        period_seconds=section.period_seconds,
        seed=section.seed,
        start_epoch=start,
    )
    names = [v.name for v in variables]
    faults = []
    for f in section.faults:
        if f.variable not in names:
            raise InvalidInputError(
                f"fault targets unknown variable {f.variable!r}"
            )
        faults.append(
            FaultSpec(
                kind=f.kind,
                variable=names.index(f.variable),
                onset=f.onset,
                duration=f.duration,
                magnitude=f.magnitude,
            )
        )
    return spec, faults


@dataclass(frozen=True)
class FaultOutcome:
    fault: FaultSpec
    detected: bool
    delay_samples: int | None  # first matching event's open minus onset


@dataclass
class DetectionScore:
    """Detector quality against ground truth on one monitored stream."""

    outcomes: list[FaultOutcome]
    false_positives: int

    @property
    def detected(self) -> int:
        return sum(1 for o in self.outcomes if o.detected)


def score_events(
    events: list[tuple[int, int | None]],
    faults: list[FaultSpec],
    grace_samples: int,
    stream_end: int,
) -> DetectionScore:
    """Match warning events (sample-index intervals) to fault windows.

    A fault's detection window runs from its onset to the later of its end
    and onset + grace (the filter width: a short fault's filtered effect
    lingers). An event counts for the earliest fault whose detection window
    it intersects; events matching no fault are false positives.
    """
    windows = [
        (f, f.onset, max(f.end, f.onset + grace_samples)) for f in faults
    ]
    windows.sort(key=lambda w: w[1])
    first_event: dict[int, tuple[int, int | None]] = {}
    false_pos = 0
    for open_at, close_at in events:
        closed = close_at if close_at is not None else stream_end
        matched = None
        for idx, (_, lo, hi) in enumerate(windows):
            if open_at <= hi and closed >= lo:
                matched = idx
                break
        if matched is None:
            false_pos += 1
        elif matched not in first_event or open_at < first_event[matched][0]:
            first_event[matched] = (open_at, close_at)
    outcomes = []
    for idx, (fault, _, _) in enumerate(windows):
        if idx in first_event:
            outcomes.append(
                FaultOutcome(
                    fault=fault,
                    detected=True,
                    delay_samples=first_event[idx][0] - fault.onset,
                )
            )
        else:
            outcomes.append(FaultOutcome(fault=fault, detected=False, delay_samples=None))
    return DetectionScore(outcomes=outcomes, false_positives=false_pos)
