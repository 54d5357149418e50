"""Request/response models for the monitoring service.

Payloads carry CSV and JSON artifacts as text so the service stays
stateless: every request is self-contained and every response can be
written straight to disk by the client.
"""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class GenerateRequest(BaseModel):
    config_toml: Optional[str] = None
    seed: Optional[int] = None
    n_samples: Optional[int] = None


class GenerateResponse(BaseModel):
    data_csv: str
    labels_csv: str
    n_samples: int
    variables: list[str]
    resolved_config: dict[str, Any]


class CleanRequest(BaseModel):
    data_csv: str
    config_toml: Optional[str] = None


class CleanResponse(BaseModel):
    cleaned_csv: str
    flags_csv: str
    report: dict[str, Any]
    resolved_config: dict[str, Any]


class TrainRequest(BaseModel):
    data_csv: str
    flags_csv: Optional[str] = None
    fault_windows_csv: Optional[str] = None
    config_toml: Optional[str] = None
    seed: Optional[int] = None


class TrainResponse(BaseModel):
    bundle_json: str
    summary: dict[str, Any]
    resolved_config: dict[str, Any]


class MonitorRequest(BaseModel):
    bundle_json: str
    stream_csv: str
    ratios_everywhere: bool = False
    use_filter_seed: bool = True
    include_plot: bool = False


class MonitorResponse(BaseModel):
    kpi_csv: str
    t2_csv: str
    events: dict[str, Any]
    diagnostics: list[dict[str, Any]]
    plot_svg: Optional[str] = None


class RetrainRequest(BaseModel):
    bundle_json: str
    data_csvs: list[str] = Field(min_length=1)
    flags_csvs: Optional[list[str]] = None
    fault_windows_csv: Optional[str] = None


class RetrainResponse(BaseModel):
    bundle_json: str
    summary: dict[str, Any]
    resolved_config: dict[str, Any]


class BenchRequest(BaseModel):
    suite: str = "desk-bench"
    seeds: Optional[list[int]] = None
    scenarios: Optional[list[str]] = None


class BenchResponse(BaseModel):
    table_csv: str
    table_markdown: str
    runs: list[dict[str, Any]]


class ErrorBody(BaseModel):
    code: str
    message: str
