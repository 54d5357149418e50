"""End-to-end training and monitoring flows built from the core modules.

Training: exclude operator-confirmed fault windows, z-score the surviving
rows, fit the map, freeze the KPI baseline (including the contribution
profile and the filter seed) and the Hotelling baseline, and wrap it all
in one bundle.

Monitoring: score a raw stream against a bundle. Patterns missing at most
a configurable fraction of the active variables are scored with distances
rescaled over the present ones; patterns missing more are no-data. The
Hotelling detector requires complete patterns. Both detectors share the
same K-consecutive/M-release warning machine so their detection delays
are comparable. Contribution ratios are computed at each warning's KPI
minimum (its peak) and name the implicated variables.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import contribution, hotelling, kpi, preprocess, som
from .bundle import Bundle
from .config import ProjectConfig
from .errors import InvalidInputError
from .preprocess import ObservationFrame

STATUS_TOKENS = {
    True: kpi.STATUS_OUT_OF_CONTROL,
    False: kpi.STATUS_IN_CONTROL,
    None: kpi.STATUS_NO_DATA,
}


@dataclass
class TrainSummary:
    rows_total: int
    rows_used: int
    rows_dropped: int
    grid: tuple[int, int]
    dm_delta: float
    lcl_kpi: float
    ucl_t2: float
    deactivated: list[str]
    fingerprint: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "rows_total": self.rows_total,
            "rows_used": self.rows_used,
            "rows_dropped": self.rows_dropped,
            "grid": {"rows": self.grid[0], "cols": self.grid[1]},
            "dm_delta": self.dm_delta,
            "lcl_kpi": self.lcl_kpi,
            "ucl_t2": self.ucl_t2,
            "deactivated_variables": self.deactivated,
            "data_fingerprint": self.fingerprint,
        }


def data_fingerprint(matrix: np.ndarray, config_echo: dict[str, Any]) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(matrix).tobytes())
    digest.update(json.dumps(config_echo, sort_keys=True).encode())
    return "sha256:" + digest.hexdigest()


def run_training(
    frame: ObservationFrame,
    fault_windows: list[preprocess.FaultWindow],
    cfg: ProjectConfig,
) -> tuple[Bundle, TrainSummary]:
    """Train both detectors on a cleaned frame and bundle the results."""
    excluded = preprocess.exclude_fault_windows(frame, fault_windows)
    norm = preprocess.normalize(excluded)
    echo = cfg.echo()
    fingerprint = data_fingerprint(norm.matrix, echo)
    model = som.train_batch(norm.matrix, cfg.train, data_fingerprint=fingerprint)
    period = frame.period_seconds
    filter_cfg = cfg.resolve_filter(period)
    # Positions on the sampling grid, so rows dropped by cleaning (and any
    # whole-period gaps between concatenated frames) appear to the filter
    # as no-data slots rather than silently compressing time.
    positions = (frame.timestamps - frame.timestamps[0]) // period
    baseline = kpi.compute_baseline(
        model, norm.matrix, filter_cfg, row_positions=positions[norm.kept_rows]
    )
    h_baseline = hotelling.fit_baseline(norm.matrix, variable_names=norm.stats.active_ids)
    bundle = Bundle(
        model=model,
        baseline=baseline,
        hotelling=h_baseline,
        norm_stats=norm.stats,
        policy=cfg.policy,
        contribution_threshold=cfg.contribution_threshold,
        missing_fraction_limit=cfg.missing_fraction_limit,
        period_seconds=period,
        config_echo=echo,
    )
    summary = TrainSummary(
        rows_total=frame.n_rows,
        rows_used=int(norm.kept_rows.size),
        rows_dropped=norm.dropped_rows,
        grid=(model.topology.rows, model.topology.cols),
        dm_delta=baseline.dm_delta,
        lcl_kpi=baseline.lcl,
        ucl_t2=h_baseline.ucl,
        deactivated=norm.deactivated,
        fingerprint=fingerprint,
    )
    return bundle, summary


def _rescaled_distortion(model: som.SomModel, row: np.ndarray) -> float:
    """Distortion of a partially observed pattern.

    Squared distances over the present variables are scaled by
    n_active / n_present before the square root, approximating the full
    distance under the missing coordinates.
    """
    present = ~np.isnan(row)
    scale = row.shape[0] / present.sum()
    diff = model.codebook[:, present] - row[present][None, :]
    dist = np.sqrt((diff**2).sum(axis=1) * scale)
    c = int(np.argmin(dist))
    return float(model.weights()[c] @ dist)


def stream_distortions(
    model: som.SomModel, z: np.ndarray, missing_fraction_limit: float
) -> np.ndarray:
    """Per-row distortion; NaN for rows missing too many variables."""
    n = z.shape[0]
    out = np.full(n, np.nan)
    missing = np.isnan(z)
    complete = ~missing.any(axis=1)
    if complete.any():
        out[complete] = som.distortion_many(model, z[complete])
    partial = np.nonzero(~complete)[0]
    for i in partial:
        frac = missing[i].mean()
        if 0.0 < frac <= missing_fraction_limit:
            out[i] = _rescaled_distortion(model, z[i])
    return out


@dataclass
class SeriesResult:
    timestamps: np.ndarray
    values: dict[str, np.ndarray]
    statuses: np.ndarray  # object array of status tokens
    warning_ids: np.ndarray
    events: list[kpi.WarningEvent]


@dataclass
class MonitoringResult:
    kpi_series: SeriesResult
    t2_series: SeriesResult
    diagnostics: list[dict[str, Any]]
    n_samples: int

    def event_summaries(self, detector: str) -> list[dict[str, Any]]:
        series = self.kpi_series if detector == "som-kpi" else self.t2_series
        stamps = preprocess.format_timestamps(series.timestamps)
        out = []
        for ev in series.events:
            entry = {
                "id": ev.event_id,
                "detector": detector,
                "start": stamps[ev.start_index],
                "end": stamps[ev.end_index] if ev.end_index is not None else None,
                "peak": stamps[ev.peak_index],
            }
            if detector == "som-kpi":
                entry["min_filtered_kpi"] = ev.peak_value
                entry["implicated"] = [
                    {"variable": name, "ratio": ratio} for name, ratio in ev.implicated
                ]
            else:
                entry["peak_t2"] = ev.peak_value
            out.append(entry)
        return out


def run_monitoring(
    bundle: Bundle,
    stream: ObservationFrame,
    use_filter_seed: bool = True,
    ratios_everywhere: bool = False,
) -> MonitoringResult:
    """Score a raw observation stream with both detectors."""
    if stream.variable_ids != list(bundle.norm_stats.variable_ids):
        raise InvalidInputError(
            "stream variables do not match the bundle's training variables"
        )
    z = bundle.norm_stats.apply(stream.values)
    z = np.atleast_2d(z)
    n = z.shape[0]
    baseline = bundle.baseline

    dm = stream_distortions(bundle.model, z, bundle.missing_fraction_limit)
    raw_kpi = np.full(n, np.nan)
    have = np.isfinite(dm)
    raw_kpi[have] = kpi.kpi_many(dm[have], baseline.dm_delta)

    seed = baseline.filter_seed_values if use_filter_seed else np.empty(0)
    padded = np.concatenate([seed, raw_kpi])
    filtered = kpi.ewma_filter(padded, baseline.filter_config)[seed.shape[0] :]

    ooc = np.full(n, np.nan)
    scored = np.isfinite(raw_kpi)
    ooc[scored] = (filtered[scored] < baseline.lcl).astype(float)
    events, ids = kpi.run_state_machine(ooc, filtered, bundle.policy, sign=-1)

    diagnostics = _diagnose_events(bundle, z, stream, events, ratios_everywhere, ids)

    kpi_series = SeriesResult(
        timestamps=stream.timestamps,
        values={"raw_kpi": raw_kpi, "filtered_kpi": filtered},
        statuses=_tokens(ooc),
        warning_ids=ids,
        events=events,
    )

    t2_vals = hotelling.t2_many(bundle.hotelling, z)
    t2_ooc = np.full(n, np.nan)
    t2_have = np.isfinite(t2_vals)
    t2_ooc[t2_have] = (t2_vals[t2_have] > bundle.hotelling.ucl).astype(float)
    t2_events, t2_ids = kpi.run_state_machine(t2_ooc, t2_vals, bundle.policy, sign=+1)
    t2_series = SeriesResult(
        timestamps=stream.timestamps,
        values={"t2": t2_vals},
        statuses=_tokens(t2_ooc),
        warning_ids=t2_ids,
        events=t2_events,
    )
    return MonitoringResult(
        kpi_series=kpi_series,
        t2_series=t2_series,
        diagnostics=diagnostics,
        n_samples=n,
    )


def _tokens(ooc: np.ndarray) -> np.ndarray:
    out = np.empty(ooc.shape[0], dtype=object)
    for i, flag in enumerate(ooc):
        out[i] = STATUS_TOKENS[None if math.isnan(flag) else bool(flag)]
    return out


def _diagnose_events(
    bundle: Bundle,
    z: np.ndarray,
    stream: ObservationFrame,
    events: list[kpi.WarningEvent],
    ratios_everywhere: bool,
    warning_ids: np.ndarray,
) -> list[dict[str, Any]]:
    """Contribution ratios at each event's KPI minimum (and optionally at
    every sample inside a warning)."""
    names = bundle.norm_stats.active_ids
    stamps = preprocess.format_timestamps(stream.timestamps)
    diagnostics = []
    for ev in events:
        entry = _ratio_entry(bundle, z, ev.peak_index)
        flagged_named = sorted(
            ((names[i], entry["ratios"][i]) for i in entry["flagged"]),
            key=lambda item: item[1],
            reverse=True,
        )
        ev.implicated = flagged_named
        record = {
            "event_id": ev.event_id,
            "at": stamps[ev.peak_index],
            "min_filtered_kpi": ev.peak_value,
            "ratios": dict(zip(names, entry["ratios"])),
            "flagged": [name for name, _ in flagged_named],
            "neutral": entry["neutral"],
        }
        if ratios_everywhere:
            end = ev.end_index if ev.end_index is not None else z.shape[0]
            trace = []
            for i in range(ev.start_index, end):
                if warning_ids[i] != ev.event_id or np.isnan(z[i]).all():
                    continue
                per_point = _ratio_entry(bundle, z, i)
                trace.append(
                    {"at": stamps[i], "ratios": dict(zip(names, per_point["ratios"]))}
                )
            record["trace"] = trace
        diagnostics.append(record)
    return diagnostics


def _ratio_entry(bundle: Bundle, z: np.ndarray, index: int) -> dict[str, Any]:
    vector = contribution.contribution_vector(bundle.model, z[index])
    ratios = contribution.contribution_ratios(
        bundle.baseline.contribution_baseline,
        vector.values,
        threshold=bundle.contribution_threshold,
    )
    return {
        "ratios": [float(r) for r in ratios.ratios],
        "flagged": list(ratios.flagged) if not vector.neutral else [],
        "neutral": vector.neutral,
    }


def kpi_series_csv(result: MonitoringResult) -> str:
    s = result.kpi_series
    stamps = preprocess.format_timestamps(s.timestamps)
    lines = ["timestamp,raw_kpi,filtered_kpi,status,active_warning_id"]
    raw = s.values["raw_kpi"]
    filt = s.values["filtered_kpi"]
    for i in range(len(stamps)):
        rv = f"{raw[i]:.10g}" if math.isfinite(raw[i]) else ""
        fv = f"{filt[i]:.10g}" if math.isfinite(filt[i]) else ""
        wid = str(s.warning_ids[i]) if s.warning_ids[i] else ""
        lines.append(f"{stamps[i]},{rv},{fv},{s.statuses[i]},{wid}")
    return "\n".join(lines) + "\n"


def t2_series_csv(result: MonitoringResult) -> str:
    s = result.t2_series
    stamps = preprocess.format_timestamps(s.timestamps)
    lines = ["timestamp,t2,status"]
    vals = s.values["t2"]
    for i in range(len(stamps)):
        tv = f"{vals[i]:.10g}" if math.isfinite(vals[i]) else ""
        lines.append(f"{stamps[i]},{tv},{s.statuses[i]}")
    return "\n".join(lines) + "\n"


def events_json(result: MonitoringResult) -> dict[str, Any]:
    return {
        "som_kpi_events": result.event_summaries("som-kpi"),
        "t2_episodes": result.event_summaries("t2"),
        "n_samples": result.n_samples,
    }
