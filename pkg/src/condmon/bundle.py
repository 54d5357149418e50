"""One JSON bundle couples everything monitoring needs.

The map, its KPI baseline, the Hotelling baseline and the normalization
statistics always refer to the same training data, so they are persisted
together. Serialization is deterministic (sorted keys, fixed indentation,
full decimal float precision) so identical training runs produce byte
identical bundles.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .errors import InvalidInputError
from .hotelling import HotellingBaseline
from .kpi import FilterConfig, NominalBaseline, WarningPolicy
from .preprocess import NormStats
from .som import GridTopology, SomModel, TrainingMeta

BUNDLE_VERSION = "bundle/1"
SOM_MODEL_VERSION = "som-model/1"
HOTELLING_VERSION = "hotelling-baseline/1"


@dataclass
class Bundle:
    model: SomModel
    baseline: NominalBaseline
    hotelling: HotellingBaseline
    norm_stats: NormStats
    policy: WarningPolicy
    contribution_threshold: float
    missing_fraction_limit: float
    period_seconds: int
    config_echo: dict[str, Any]


def _floats(arr: np.ndarray) -> list:
    return np.asarray(arr, dtype=float).tolist()


def _optional_floats(arr: np.ndarray) -> list:
    """Float list with NaN mapped to null (strict-JSON safe)."""
    return [float(v) if math.isfinite(v) else None for v in np.asarray(arr, dtype=float)]


def _from_optional(values: list) -> np.ndarray:
    return np.array([math.nan if v is None else float(v) for v in values])


def model_to_dict(model: SomModel, baseline: NominalBaseline | None = None) -> dict:
    doc = {
        "version": SOM_MODEL_VERSION,
        "topology": {
            "rows": model.topology.rows,
            "cols": model.topology.cols,
            "metric": model.topology.metric,
        },
        "sigma": model.sigma,
        "codebook": [_floats(row) for row in model.codebook],
        "training_meta": {
            "epochs": model.training_meta.epochs,
            "final_distortion": model.training_meta.final_distortion,
            "data_fingerprint": model.training_meta.data_fingerprint,
        },
    }
    if baseline is not None:
        doc["baseline"] = {
            "dm_delta": baseline.dm_delta,
            "kpi_mean": baseline.kpi_mean,
            "kpi_std": baseline.kpi_std,
            "lcl": baseline.lcl,
            "contribution_baseline": _floats(baseline.contribution_baseline),
            "filter": {
                "window": baseline.filter_config.window,
                "decay": baseline.filter_config.decay,
            },
            "filter_seed": _optional_floats(baseline.filter_seed_values),
        }
    return doc


def model_from_dict(doc: dict) -> tuple[SomModel, NominalBaseline | None]:
    if doc.get("version") != SOM_MODEL_VERSION:
        raise InvalidInputError(
            f"unsupported model version {doc.get('version')!r}"
        )
    topo = doc["topology"]
    model = SomModel(
        topology=GridTopology(rows=topo["rows"], cols=topo["cols"], metric=topo["metric"]),
        codebook=np.array(doc["codebook"], dtype=float),
        sigma=float(doc["sigma"]),
        training_meta=TrainingMeta(
            epochs=int(doc["training_meta"]["epochs"]),
            final_distortion=float(doc["training_meta"]["final_distortion"]),
            data_fingerprint=str(doc["training_meta"]["data_fingerprint"]),
        ),
    )
    baseline = None
    if "baseline" in doc:
        b = doc["baseline"]
        baseline = NominalBaseline(
            dm_delta=float(b["dm_delta"]),
            kpi_mean=float(b["kpi_mean"]),
            kpi_std=float(b["kpi_std"]),
            lcl=float(b["lcl"]),
            contribution_baseline=np.array(b["contribution_baseline"], dtype=float),
            filter_config=FilterConfig(
                window=int(b["filter"]["window"]),
                decay=b["filter"]["decay"],
            ),
            filter_seed_values=_from_optional(b["filter_seed"]),
        )
    return model, baseline


def hotelling_to_dict(h: HotellingBaseline) -> dict:
    return {
        "version": HOTELLING_VERSION,
        "mean": _floats(h.mean),
        "covariance": [_floats(row) for row in h.covariance],
        "covariance_inverse": [_floats(row) for row in h.covariance_inverse],
        "t2_mean": h.t2_mean,
        "t2_std": h.t2_std,
        "ucl": h.ucl,
        "lcl": h.lcl,
    }


def hotelling_from_dict(doc: dict) -> HotellingBaseline:
    if doc.get("version") != HOTELLING_VERSION:
        raise InvalidInputError(
            f"unsupported hotelling baseline version {doc.get('version')!r}"
        )
    return HotellingBaseline(
        mean=np.array(doc["mean"], dtype=float),
        covariance=np.array(doc["covariance"], dtype=float),
        covariance_inverse=np.array(doc["covariance_inverse"], dtype=float),
        t2_mean=float(doc["t2_mean"]),
        t2_std=float(doc["t2_std"]),
        ucl=float(doc["ucl"]),
        lcl=float(doc["lcl"]),
    )


def bundle_to_json(bundle: Bundle) -> str:
    doc = {
        "version": BUNDLE_VERSION,
        "som_model": model_to_dict(bundle.model, bundle.baseline),
        "hotelling": hotelling_to_dict(bundle.hotelling),
        "normalization": {
            "variable_ids": list(bundle.norm_stats.variable_ids),
            "means": _floats(bundle.norm_stats.means),
            "stds": _floats(bundle.norm_stats.stds),
            "active": [bool(a) for a in bundle.norm_stats.active],
        },
        "monitor": {
            "k_consecutive": bundle.policy.k_consecutive,
            "m_release": bundle.policy.m_release,
            "contribution_threshold": bundle.contribution_threshold,
            "missing_fraction_limit": bundle.missing_fraction_limit,
            "period_seconds": bundle.period_seconds,
        },
        "config": bundle.config_echo,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def bundle_from_json(source: str | Path) -> Bundle:
    text = source.read_text() if isinstance(source, Path) else source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"bundle is not valid JSON: {exc}") from exc
    if doc.get("version") != BUNDLE_VERSION:
        raise InvalidInputError(f"unsupported bundle version {doc.get('version')!r}")
    model, baseline = model_from_dict(doc["som_model"])
    if baseline is None:
        raise InvalidInputError("bundle model is missing its monitoring baseline")
    norm = doc["normalization"]
    monitor = doc["monitor"]
    return Bundle(
        model=model,
        baseline=baseline,
        hotelling=hotelling_from_dict(doc["hotelling"]),
        norm_stats=NormStats(
            variable_ids=tuple(norm["variable_ids"]),
            means=np.array(norm["means"], dtype=float),
            stds=np.array(norm["stds"], dtype=float),
            active=np.array(norm["active"], dtype=bool),
        ),
        policy=WarningPolicy(
            k_consecutive=int(monitor["k_consecutive"]),
            m_release=int(monitor["m_release"]),
        ),
        contribution_threshold=float(monitor["contribution_threshold"]),
        missing_fraction_limit=float(monitor["missing_fraction_limit"]),
        period_seconds=int(monitor["period_seconds"]),
        config_echo=doc.get("config", {}),
    )
