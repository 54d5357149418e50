"""Project configuration: TOML file in, fully resolved settings out.

Absent keys take the documented defaults; the resolved result is echoed
next to every command's outputs so a run can be reproduced from the echo
alone. Unknown sections or keys are rejected rather than ignored.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .kpi import FilterConfig, WarningPolicy
from .preprocess import CleaningConfig
from .som import TrainConfig

SECONDS_PER_HOUR = 3600

# Smoothing horizon used to derive the filter window from the sampling
# period when no explicit window is configured.
DEFAULT_FILTER_HOURS = 12.0

_KNOWN_SECTIONS = {
    "data",
    "cleaning",
    "train",
    "filter",
    "monitor",
    "contribution",
    "synthetic",
}


@dataclass
class SyntheticVariableConfig:
    name: str
    base: float
    daily_amplitude: float = 0.0
    noise_std: float = 1.0
    loadings: list[float] = field(default_factory=list)
    unit: str = ""


@dataclass
class SyntheticFaultConfig:
    kind: str
    variable: str
    onset: int
    duration: int
    magnitude: float = 4.0


@dataclass
class SyntheticSection:
    n_samples: int = 14400
    period_seconds: int = 60
    seed: int = 0
    start: str = "2025-01-01T00:00:00Z"
    variables: list[SyntheticVariableConfig] = field(default_factory=list)
    faults: list[SyntheticFaultConfig] = field(default_factory=list)


@dataclass
class ProjectConfig:
    """All knobs for the pipeline, with defaults applied."""

    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    filter_window: int | None = None  # None: 12 h of samples at the data period
    filter_decay: float | None = None
    policy: WarningPolicy = field(default_factory=WarningPolicy)
    contribution_threshold: float = 1.3
    missing_fraction_limit: float = 0.2
    use_filter_seed: bool = True
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)

    def resolve_filter(self, period_seconds: int) -> FilterConfig:
        window = self.filter_window
        if window is None:
            window = max(int(DEFAULT_FILTER_HOURS * SECONDS_PER_HOUR / period_seconds), 1)
        return FilterConfig(window=window, decay=self.filter_decay)

    def echo(self) -> dict[str, Any]:
        """Resolved settings as a JSON-able dict."""
        return {
            "cleaning": {
                "frozen_run": self.cleaning.frozen_run,
                "spike_sigma": self.cleaning.spike_sigma,
                "spike_window": self.cleaning.spike_window,
                "outlier_iqr": self.cleaning.outlier_iqr,
                "min_regular_fraction": self.cleaning.min_regular_fraction,
                "limits": {
                    k: {"min": lo, "max": hi}
                    for k, (lo, hi) in sorted(self.cleaning.limits.items())
                },
            },
            "train": {
                "rows": self.train.rows,
                "cols": self.train.cols,
                "epochs": self.train.epochs,
                "sigma_initial": self.train.sigma_initial,
                "sigma_final": self.train.sigma_final,
                "seed": self.train.seed,
            },
            "filter": {
                "window": self.filter_window,
                "decay": self.filter_decay,
            },
            "monitor": {
                "k_consecutive": self.policy.k_consecutive,
                "m_release": self.policy.m_release,
                "missing_fraction_limit": self.missing_fraction_limit,
                "use_filter_seed": self.use_filter_seed,
            },
            "contribution": {"threshold": self.contribution_threshold},
        }


def _expect_table(value: Any, name: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"section [{name}] must be a table")
    return value


def _take(table: dict, key: str, default: Any, kinds: tuple[type, ...]) -> Any:
    if key not in table:
        return default
    value = table.pop(key)
    if value is None:  # round-tripped resolved configs carry explicit nulls
        return default
    if bool in kinds and isinstance(value, bool):
        return value
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise ConfigError(f"config key {key!r} has wrong type {type(value).__name__}")
    return value


def _reject_leftovers(table: dict, section: str) -> None:
    if table:
        raise ConfigError(
            f"unknown keys in [{section}]: {', '.join(sorted(table))}"
        )


def _parse_limits(table: dict) -> dict[str, tuple[float | None, float | None]]:
    limits = {}
    for var, entry in table.items():
        if not isinstance(entry, dict):
            raise ConfigError(f"limits for {var!r} must be a table with min/max")
        lo = entry.pop("min", None)
        hi = entry.pop("max", None)
        _reject_leftovers(entry, f"cleaning.limits.{var}")
        limits[var] = (
            float(lo) if lo is not None else None,
            float(hi) if hi is not None else None,
        )
    return limits


def parse_config(raw: dict[str, Any]) -> ProjectConfig:
    raw = dict(raw)
    unknown = set(raw) - _KNOWN_SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")

    cleaning_tbl = _expect_table(raw.get("cleaning", {}), "cleaning")
    cleaning = CleaningConfig(
        frozen_run=int(_take(cleaning_tbl, "frozen_run", 60, (int,))),
        spike_sigma=float(_take(cleaning_tbl, "spike_sigma", 8.0, (int, float))),
        spike_window=int(_take(cleaning_tbl, "spike_window", 720, (int,))),
        outlier_iqr=float(_take(cleaning_tbl, "outlier_iqr", 5.0, (int, float))),
        min_regular_fraction=float(
            _take(cleaning_tbl, "min_regular_fraction", 0.8, (int, float))
        ),
        limits=_parse_limits(_expect_table(cleaning_tbl.pop("limits", {}), "cleaning.limits")),
    )
    _reject_leftovers(cleaning_tbl, "cleaning")

    train_tbl = _expect_table(raw.get("train", {}), "train")
    rows = _take(train_tbl, "rows", None, (int,))
    cols = _take(train_tbl, "cols", None, (int,))
    if (rows is None) != (cols is None):
        raise ConfigError("set both train.rows and train.cols or neither")
    train = TrainConfig(
        rows=rows,
        cols=cols,
        epochs=int(_take(train_tbl, "epochs", 30, (int,))),
        sigma_initial=_take(train_tbl, "sigma_initial", None, (int, float)),
        sigma_final=float(_take(train_tbl, "sigma_final", 0.8, (int, float))),
        seed=int(_take(train_tbl, "seed", 0, (int,))),
    )
    _reject_leftovers(train_tbl, "train")

    filter_tbl = _expect_table(raw.get("filter", {}), "filter")
    window = _take(filter_tbl, "window", None, (int,))
    decay = _take(filter_tbl, "decay", None, (int, float))
    _reject_leftovers(filter_tbl, "filter")

    monitor_tbl = _expect_table(raw.get("monitor", {}), "monitor")
    policy = WarningPolicy(
        k_consecutive=int(_take(monitor_tbl, "k_consecutive", 3, (int,))),
        m_release=int(_take(monitor_tbl, "m_release", 60, (int,))),
    )
    missing_limit = float(
        _take(monitor_tbl, "missing_fraction_limit", 0.2, (int, float))
    )
    use_seed = bool(_take(monitor_tbl, "use_filter_seed", True, (bool,)))
    _reject_leftovers(monitor_tbl, "monitor")

    contrib_tbl = _expect_table(raw.get("contribution", {}), "contribution")
    threshold = float(_take(contrib_tbl, "threshold", 1.3, (int, float)))
    _reject_leftovers(contrib_tbl, "contribution")

    synth = _parse_synthetic(_expect_table(raw.get("synthetic", {}), "synthetic"))

    return ProjectConfig(
        cleaning=cleaning,
        train=train,
        filter_window=window,
        filter_decay=float(decay) if decay is not None else None,
        policy=policy,
        contribution_threshold=threshold,
        missing_fraction_limit=missing_limit,
        use_filter_seed=use_seed,
        synthetic=synth,
    )


def _parse_synthetic(table: dict) -> SyntheticSection:
    variables = []
    for entry in table.pop("variables", []):
        entry = dict(entry)
        variables.append(
            SyntheticVariableConfig(
                name=str(entry.pop("name")),
                base=float(entry.pop("base", 0.0)),
                daily_amplitude=float(entry.pop("daily_amplitude", 0.0)),
                noise_std=float(entry.pop("noise_std", 1.0)),
                loadings=[float(x) for x in entry.pop("loadings", [])],
                unit=str(entry.pop("unit", "")),
            )
        )
        _reject_leftovers(entry, "synthetic.variables")
    faults = []
    for entry in table.pop("faults", []):
        entry = dict(entry)
        faults.append(
            SyntheticFaultConfig(
                kind=str(entry.pop("kind")),
                variable=str(entry.pop("variable")),
                onset=int(entry.pop("onset")),
                duration=int(entry.pop("duration")),
                magnitude=float(entry.pop("magnitude", 4.0)),
            )
        )
        _reject_leftovers(entry, "synthetic.faults")
    section = SyntheticSection(
        n_samples=int(_take(table, "n_samples", 14400, (int,))),
        period_seconds=int(_take(table, "period_seconds", 60, (int,))),
        seed=int(_take(table, "seed", 0, (int,))),
        start=str(_take(table, "start", "2025-01-01T00:00:00Z", (str,))),
        variables=variables,
        faults=faults,
    )
    _reject_leftovers(table, "synthetic")
    return section


def load_config(source: str | Path | dict | None) -> ProjectConfig:
    """Load configuration from a TOML path/text, a dict, or defaults."""
    if source is None:
        return ProjectConfig()
    if isinstance(source, dict):
        return parse_config(source)
    if isinstance(source, Path):
        try:
            text = source.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {source}: {exc}") from exc
    else:
        text = source
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return parse_config(raw)
