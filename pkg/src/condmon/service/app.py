"""FastAPI service exposing the monitoring pipeline.

The service is a stateless compute server: models, baselines and data
travel inside the requests and responses, so any number of plants or
clients can share one instance and identical requests always produce
identical responses.
"""

from __future__ import annotations

import dataclasses

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..bench import DESK_BENCH_SEEDS, run_desk_bench
from ..bundle import bundle_from_json, bundle_to_json
from ..config import load_config
from ..errors import CondmonError, ConfigError, ContractViolationError
from ..pipeline import (
    events_json,
    kpi_series_csv,
    run_monitoring,
    run_training,
    t2_series_csv,
)
from ..plots import monitoring_chart_svg
from ..preprocess import (
    clean,
    concat_frames,
    parse_fault_windows_csv,
    read_frame_csv,
    write_frame_csv,
)
from ..synthetic import build_signal_spec, generate, labels_to_csv
from . import schemas


def create_app() -> FastAPI:
    app = FastAPI(
        title="condmon",
        description="SOM-based condition monitoring with a Hotelling T2 benchmark",
        version=__version__,
    )

    @app.exception_handler(CondmonError)
    async def condmon_error_handler(request: Request, exc: CondmonError):
        status = 500
        if isinstance(exc, ConfigError):
            status = 422
        elif isinstance(exc, (ContractViolationError,)) or exc.code == "invalid-input":
            status = 400
        return JSONResponse(
            status_code=status,
            content={"detail": {"code": exc.code, "message": str(exc)}},
        )

    @app.get("/v1/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/v1/generate", response_model=schemas.GenerateResponse)
    def generate_endpoint(req: schemas.GenerateRequest) -> schemas.GenerateResponse:
        cfg = load_config(req.config_toml)
        if req.seed is not None:
            cfg.synthetic.seed = req.seed
        if req.n_samples is not None:
            cfg.synthetic.n_samples = req.n_samples
        spec, faults = build_signal_spec(cfg.synthetic)
        frame, labels = generate(spec, faults)
        data_csv, _ = write_frame_csv(frame)
        return schemas.GenerateResponse(
            data_csv=data_csv,
            labels_csv=labels_to_csv(frame, labels),
            n_samples=frame.n_rows,
            variables=frame.variable_ids,
            resolved_config=cfg.echo(),
        )

    @app.post("/v1/clean", response_model=schemas.CleanResponse)
    def clean_endpoint(req: schemas.CleanRequest) -> schemas.CleanResponse:
        cfg = load_config(req.config_toml)
        frame = read_frame_csv(req.data_csv)
        cleaned, report = clean(frame, cfg.cleaning)
        values_csv, flags_csv = write_frame_csv(cleaned)
        return schemas.CleanResponse(
            cleaned_csv=values_csv,
            flags_csv=flags_csv,
            report=report.to_dict(),
            resolved_config=cfg.echo(),
        )

    @app.post("/v1/train", response_model=schemas.TrainResponse)
    def train_endpoint(req: schemas.TrainRequest) -> schemas.TrainResponse:
        cfg = load_config(req.config_toml)
        if req.seed is not None:
            cfg.train = dataclasses.replace(cfg.train, seed=req.seed)
        frame = read_frame_csv(req.data_csv, flags_source=req.flags_csv)
        windows = (
            parse_fault_windows_csv(req.fault_windows_csv)
            if req.fault_windows_csv
            else []
        )
        bundle, summary = run_training(frame, windows, cfg)
        return schemas.TrainResponse(
            bundle_json=bundle_to_json(bundle),
            summary=summary.to_dict(),
            resolved_config=cfg.echo(),
        )

    @app.post("/v1/monitor", response_model=schemas.MonitorResponse)
    def monitor_endpoint(req: schemas.MonitorRequest) -> schemas.MonitorResponse:
        bundle = bundle_from_json(req.bundle_json)
        stream = read_frame_csv(req.stream_csv)
        result = run_monitoring(
            bundle,
            stream,
            use_filter_seed=req.use_filter_seed,
            ratios_everywhere=req.ratios_everywhere,
        )
        plot = None
        if req.include_plot:
            plot = monitoring_chart_svg(result, bundle.baseline.lcl, bundle.hotelling.ucl)
        return schemas.MonitorResponse(
            kpi_csv=kpi_series_csv(result),
            t2_csv=t2_series_csv(result),
            events=events_json(result),
            diagnostics=result.diagnostics,
            plot_svg=plot,
        )

    @app.post("/v1/retrain", response_model=schemas.RetrainResponse)
    def retrain_endpoint(req: schemas.RetrainRequest) -> schemas.RetrainResponse:
        bundle = bundle_from_json(req.bundle_json)
        cfg = load_config({k: v for k, v in bundle.config_echo.items()})
        flags = req.flags_csvs or [None] * len(req.data_csvs)
        if len(flags) != len(req.data_csvs):
            raise ContractViolationError(
                "flags_csvs must match data_csvs in length when provided"
            )
        frames = [
            read_frame_csv(csv, flags_source=fl)
            for csv, fl in zip(req.data_csvs, flags)
        ]
        frame = concat_frames(frames)
        windows = (
            parse_fault_windows_csv(req.fault_windows_csv)
            if req.fault_windows_csv
            else []
        )
        new_bundle, summary = run_training(frame, windows, cfg)
        return schemas.RetrainResponse(
            bundle_json=bundle_to_json(new_bundle),
            summary=summary.to_dict(),
            resolved_config=cfg.echo(),
        )

    @app.post("/v1/bench", response_model=schemas.BenchResponse)
    def bench_endpoint(req: schemas.BenchRequest) -> schemas.BenchResponse:
        if req.suite != "desk-bench":
            raise ConfigError(f"unknown suite {req.suite!r}; available: desk-bench")
        seeds = tuple(req.seeds) if req.seeds else DESK_BENCH_SEEDS
        result = run_desk_bench(seeds=seeds, scenarios=req.scenarios)
        return schemas.BenchResponse(
            table_csv=result.to_csv(),
            table_markdown=result.to_markdown(),
            runs=result.rows(),
        )

    return app
