"""The desk-bench suite: both detectors against seeded synthetic faults.

Eight plant-like variables (temperatures, pressures, flow, vibrations)
with a daily cycle and two shared AR(1) factors; 30 days of 1-minute
training data followed by a 10-day monitoring window. Five fault
scenarios plus an all-nominal run, repeated over a set of seeds. Per
seed, one model is trained on the nominal history and reused for every
scenario, mirroring how a deployed system monitors alternative futures
of the same plant.

Reported per scenario and detector: detection rate, delay quantiles and
false-positive counts, as CSV and as a markdown table.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .config import ProjectConfig
from .pipeline import run_monitoring, run_training
from .preprocess import clean
from .som import TrainConfig
from .synthetic import (
    DEFAULT_VARIABLES,
    DetectionScore,
    FaultSpec,
    SignalSpec,
    generate,
    score_events,
)

TRAIN_DAYS = 30
MONITOR_DAYS = 10
SAMPLES_PER_DAY = 1440

# Smaller than the auto-sized grid: plenty for 8 variables and keeps the
# 120-run suite within its time budget.
BENCH_GRID = (12, 12)
BENCH_EPOCHS = 30

DESK_BENCH_SEEDS = tuple(range(1, 21))

DESK_BENCH_VARIABLES = DEFAULT_VARIABLES


def _fault_scenarios(train_n: int, monitor_n: int) -> dict[str, list[FaultSpec]]:
    onset = train_n + 2 * SAMPLES_PER_DAY  # two days into monitoring
    to_end = train_n + monitor_n - onset
    return {
        "nominal": [],
        "mean-shift-4s": [FaultSpec("mean-shift", variable=2, onset=onset, duration=to_end, magnitude=4.0)],
        "drift-6s": [FaultSpec("drift", variable=5, onset=onset, duration=5 * SAMPLES_PER_DAY, magnitude=6.0)],
        "sensor-freeze": [FaultSpec("sensor-freeze", variable=1, onset=onset, duration=to_end, magnitude=0.0)],
        "spike-train-8s": [FaultSpec("spike-train", variable=6, onset=onset, duration=3 * SAMPLES_PER_DAY, magnitude=8.0)],
        "variance-3s": [FaultSpec("variance-inflation", variable=3, onset=onset, duration=5 * SAMPLES_PER_DAY, magnitude=3.0)],
    }


@dataclass
class ScenarioRun:
    """One (seed, scenario, detector) outcome."""

    seed: int
    scenario: str
    detector: str
    score: DetectionScore
    n_events: int
    top_flagged: str | None  # top implicated variable at the first event
    top_ratio: float | None
    faulted_variable: str | None
    delay_samples: int | None


@dataclass
class BenchResult:
    runs: list[ScenarioRun]
    seeds: tuple[int, ...]
    filter_window: int
    k_consecutive: int

    def rows(self) -> list[dict[str, Any]]:
        """Aggregate (scenario, detector) table rows."""
        keys = sorted({(r.scenario, r.detector) for r in self.runs})
        table = []
        for scenario, detector in keys:
            group = [r for r in self.runs if r.scenario == scenario and r.detector == detector]
            n = len(group)
            delays = [r.delay_samples for r in group if r.delay_samples is not None]
            detected = sum(1 for r in group if r.score.detected > 0)
            has_fault = any(r.score.outcomes for r in group)
            fp_counts = [r.score.false_positives for r in group]
            row = {
                "scenario": scenario,
                "detector": detector,
                "seeds": n,
                "detection_rate": round(detected / n, 4) if has_fault else None,
                "median_delay_samples": float(np.median(delays)) if delays else None,
                "mean_delay_samples": round(float(np.mean(delays)), 1) if delays else None,
                "max_delay_samples": int(np.max(delays)) if delays else None,
                "fp_events_total": int(np.sum(fp_counts)),
                "seeds_fp_free": int(np.sum(np.array(fp_counts) == 0)),
            }
            table.append(row)
        return table

    def to_csv(self) -> str:
        rows = self.rows()
        header = list(rows[0].keys())
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join("" if row[k] is None else str(row[k]) for k in header))
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        rows = self.rows()
        header = list(rows[0].keys())
        lines = [
            "| " + " | ".join(header) + " |",
            "| " + " | ".join("---" for _ in header) + " |",
        ]
        for row in rows:
            lines.append(
                "| " + " | ".join("" if row[k] is None else str(row[k]) for k in header) + " |"
            )
        return "\n".join(lines) + "\n"


def bench_config() -> ProjectConfig:
    cfg = ProjectConfig()
    cfg.train = TrainConfig(
        rows=BENCH_GRID[0], cols=BENCH_GRID[1], epochs=BENCH_EPOCHS, seed=0
    )
    return cfg


def run_desk_bench(
    seeds: tuple[int, ...] = DESK_BENCH_SEEDS,
    scenarios: list[str] | None = None,
) -> BenchResult:
    """Run the suite; one training per seed, one monitoring run per scenario."""
    train_n = TRAIN_DAYS * SAMPLES_PER_DAY
    monitor_n = MONITOR_DAYS * SAMPLES_PER_DAY
    all_scenarios = _fault_scenarios(train_n, monitor_n)
    if scenarios is not None:
        unknown = set(scenarios) - set(all_scenarios)
        if unknown:
            raise ValueError(f"unknown scenarios: {sorted(unknown)}")
        all_scenarios = {k: v for k, v in all_scenarios.items() if k in scenarios}
    cfg = bench_config()
    runs: list[ScenarioRun] = []
    filter_window = cfg.resolve_filter(60).window
    for seed in seeds:
        spec = SignalSpec(
            variables=DESK_BENCH_VARIABLES,
            n_samples=train_n + monitor_n,
            seed=seed,
        )
        nominal_frame, _ = generate(spec, [])
        train_frame, _ = clean(_slice_frame(nominal_frame, 0, train_n), cfg.cleaning)
        bundle, _ = run_training(train_frame, [], cfg)
        for name, faults in all_scenarios.items():
            if faults:
                frame, _ = generate(spec, faults)
            else:
                frame = nominal_frame
            stream = _slice_frame(frame, train_n, train_n + monitor_n)
            result = run_monitoring(bundle, stream)
            local_faults = [
                FaultSpec(f.kind, f.variable, f.onset - train_n, f.duration, f.magnitude)
                for f in faults
            ]
            for detector, series in (
                ("som-kpi", result.kpi_series),
                ("t2", result.t2_series),
            ):
                events = [(ev.start_index, ev.end_index) for ev in series.events]
                score = score_events(events, local_faults, filter_window, monitor_n)
                top_name, top_ratio = None, None
                if detector == "som-kpi" and result.diagnostics:
                    first = result.diagnostics[0]
                    if first["flagged"]:
                        top_name = first["flagged"][0]
                        top_ratio = first["ratios"][top_name]
                delay = None
                for outcome in score.outcomes:
                    if outcome.detected:
                        delay = outcome.delay_samples
                        break
                runs.append(
                    ScenarioRun(
                        seed=seed,
                        scenario=name,
                        detector=detector,
                        score=score,
                        n_events=len(events),
                        top_flagged=top_name,
                        top_ratio=top_ratio,
                        faulted_variable=(
                            DESK_BENCH_VARIABLES[faults[0].variable].name if faults else None
                        ),
                        delay_samples=delay,
                    )
                )
    return BenchResult(
        runs=runs,
        seeds=tuple(seeds),
        filter_window=filter_window,
        k_consecutive=cfg.policy.k_consecutive,
    )


def _slice_frame(frame, lo: int, hi: int):
    from .preprocess import ObservationFrame

    return ObservationFrame(
        timestamps=frame.timestamps[lo:hi].copy(),
        variables=list(frame.variables),
        values=frame.values[lo:hi].copy(),
        quality=frame.quality[lo:hi].copy(),
    )
