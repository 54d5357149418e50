"""Command-line client for the condmon service.

Each subcommand reads local files, sends one request to the service
(in-process by default, remote with --server) and writes the returned
artifacts under the output directory, echoing the resolved configuration
next to them.

Exit codes: 0 success, 1 internal error, 2 invalid input, 3 bad
configuration.
"""

from __future__ import annotations

import datetime as _dt
import json
import shutil
import sys
from pathlib import Path

import click

from . import __version__
from .client import ServiceClient, ServiceError
from .errors import CondmonError

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID_INPUT = 2
EXIT_CONFIG = 3

_CODE_EXITS = {
    "invalid-input": EXIT_INVALID_INPUT,
    "contract-violation": EXIT_INVALID_INPUT,
    "config-error": EXIT_CONFIG,
}


def _exit_for(err: CondmonError) -> int:
    return _CODE_EXITS.get(err.code, EXIT_INTERNAL)


def _read(path: Path, what: str) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        click.echo(f"error: cannot read {what} {path}: {exc}", err=True)
        sys.exit(EXIT_INVALID_INPUT)


def _out_dir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(out: Path, name: str, content: str) -> Path:
    target = out / name
    target.write_text(content)
    return target


def _write_json(out: Path, name: str, payload) -> Path:
    return _write(out, name, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _client(server: str | None) -> ServiceClient:
    return ServiceClient(base_url=server)


def _fail(err: Exception) -> None:
    if isinstance(err, (ServiceError, CondmonError)):
        click.echo(f"error [{err.code}]: {err}", err=True)
        sys.exit(_exit_for(err))
    click.echo(f"internal error: {err}", err=True)
    sys.exit(EXIT_INTERNAL)


server_option = click.option(
    "--server", default=None, metavar="URL", help="Remote service URL (default: in-process)."
)
config_option = click.option(
    "--config", "config_path", default=None, type=click.Path(path_type=Path), help="Project config TOML."
)
out_option = click.option(
    "--out", default="out", metavar="DIR", show_default=True, help="Output directory."
)
format_option = click.option(
    "--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True
)


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Condition monitoring: clean, train, monitor, retrain, compare."""


@main.command("gen")
@server_option
@config_option
@click.option("--seed", type=int, default=None, help="Override the generator seed.")
@click.option("--samples", type=int, default=None, help="Override the sample count.")
@out_option
def cmd_gen(server, config_path, seed, samples, out):
    """Generate a synthetic plant-like dataset with optional faults."""
    config_toml = _read(config_path, "config") if config_path else None
    out_path = _out_dir(out)
    try:
        with _client(server) as client:
            res = client.generate(config_toml=config_toml, seed=seed, n_samples=samples)
    except Exception as exc:
        _fail(exc)
    _write(out_path, "data.csv", res["data_csv"])
    _write(out_path, "labels.csv", res["labels_csv"])
    _write_json(out_path, "resolved_config.json", res["resolved_config"])
    click.echo(
        f"generated {res['n_samples']} samples x {len(res['variables'])} variables "
        f"-> {out_path / 'data.csv'}"
    )


@main.command("clean")
@click.argument("input_csv", type=click.Path(path_type=Path))
@server_option
@config_option
@out_option
def cmd_clean(input_csv, server, config_path, out):
    """Flag bad samples in a raw sensor CSV and report per-variable quality."""
    config_toml = _read(config_path, "config") if config_path else None
    data_csv = _read(input_csv, "input CSV")
    out_path = _out_dir(out)
    try:
        with _client(server) as client:
            res = client.clean(data_csv=data_csv, config_toml=config_toml)
    except Exception as exc:
        _fail(exc)
    stem = input_csv.stem
    _write(out_path, f"{stem}.cleaned.csv", res["cleaned_csv"])
    _write(out_path, f"{stem}.cleaned.flags.csv", res["flags_csv"])
    _write_json(out_path, "cleaning_report.json", res["report"])
    _write_json(out_path, "resolved_config.json", res["resolved_config"])
    report = res["report"]
    click.echo(f"cleaned {report['n_rows']} rows")
    click.echo(f"{'variable':<20}{'valid%':>8}  flags")
    for var, counts in report["counts"].items():
        frac = report["regular_fraction"][var]
        notable = {k: v for k, v in counts.items() if v and k != "valid"}
        click.echo(f"{var:<20}{100 * frac:>7.2f}%  {notable if notable else ''}")
    if report["below_threshold"]:
        click.echo(
            "below regular-sample threshold: " + ", ".join(report["below_threshold"])
        )


@main.command("train")
@click.argument("data_csv", type=click.Path(path_type=Path))
@click.option("--flags", "flags_path", type=click.Path(path_type=Path), default=None, help="Flags CSV from `clean`.")
@click.option("--fault-log", "fault_log", type=click.Path(path_type=Path), default=None, help="Fault-window CSV to exclude.")
@click.option("--seed", type=int, default=None, help="Override the training seed.")
@server_option
@config_option
@out_option
def cmd_train(data_csv, flags_path, fault_log, seed, server, config_path, out):
    """Train the map and freeze both detectors' baselines into a bundle."""
    config_toml = _read(config_path, "config") if config_path else None
    payload = {
        "data_csv": _read(data_csv, "data CSV"),
        "flags_csv": _read(flags_path, "flags CSV") if flags_path else None,
        "fault_windows_csv": _read(fault_log, "fault log") if fault_log else None,
        "config_toml": config_toml,
        "seed": seed,
    }
    out_path = _out_dir(out)
    try:
        with _client(server) as client:
            res = client.train(**payload)
    except Exception as exc:
        _fail(exc)
    _write(out_path, "bundle.json", res["bundle_json"])
    _write_json(out_path, "train_summary.json", res["summary"])
    _write_json(out_path, "resolved_config.json", res["resolved_config"])
    s = res["summary"]
    click.echo(
        f"trained {s['grid']['rows']}x{s['grid']['cols']} map on {s['rows_used']} rows "
        f"({s['rows_dropped']} dropped)"
    )
    click.echo(f"DM_delta = {s['dm_delta']:.6g}")
    click.echo(f"LCL_kpi  = {s['lcl_kpi']:.6g}")
    click.echo(f"UCL_t2   = {s['ucl_t2']:.6g}")
    if s["deactivated_variables"]:
        click.echo("deactivated variables: " + ", ".join(s["deactivated_variables"]))


def _stream_is_empty(text: str) -> bool:
    lines = [line for line in text.splitlines() if line.strip()]
    return len(lines) <= 1


@main.command("monitor")
@click.argument("bundle_path", type=click.Path(path_type=Path))
@click.argument("stream_csv", type=click.Path(path_type=Path))
@click.option("--plot/--no-plot", default=False, help="Also render an SVG chart.")
@click.option("--ratios-everywhere", is_flag=True, default=False, help="Record contribution ratios at every in-warning sample.")
@click.option("--no-filter-seed", is_flag=True, default=False, help="Cold-start the KPI filter instead of seeding it from training.")
@server_option
@format_option
@out_option
def cmd_monitor(bundle_path, stream_csv, plot, ratios_everywhere, no_filter_seed, server, fmt, out):
    """Score a monitoring stream with both detectors and emit warnings."""
    bundle_json = _read(bundle_path, "bundle")
    stream_text = _read(stream_csv, "stream CSV")
    out_path = _out_dir(out)
    if _stream_is_empty(stream_text):
        click.echo("warning: stream is empty; writing empty outputs", err=True)
        _write(out_path, "kpi.csv", "timestamp,raw_kpi,filtered_kpi,status,active_warning_id\n")
        _write(out_path, "t2.csv", "timestamp,t2,status\n")
        _write_json(out_path, "warnings.json", {"som_kpi_events": [], "t2_episodes": [], "n_samples": 0})
        _write_json(out_path, "diagnostics.json", [])
        return
    try:
        with _client(server) as client:
            res = client.monitor(
                bundle_json=bundle_json,
                stream_csv=stream_text,
                ratios_everywhere=ratios_everywhere,
                use_filter_seed=not no_filter_seed,
                include_plot=plot,
            )
    except Exception as exc:
        _fail(exc)
    _write(out_path, "kpi.csv", res["kpi_csv"])
    _write(out_path, "t2.csv", res["t2_csv"])
    if fmt == "json":
        _write_json(out_path, "kpi.json", _csv_to_records(res["kpi_csv"]))
        _write_json(out_path, "t2.json", _csv_to_records(res["t2_csv"]))
    _write_json(out_path, "warnings.json", res["events"])
    _write_json(out_path, "diagnostics.json", res["diagnostics"])
    _write_json(
        out_path,
        "monitor_options.json",
        {
            "bundle": str(bundle_path),
            "stream": str(stream_csv),
            "ratios_everywhere": ratios_everywhere,
            "use_filter_seed": not no_filter_seed,
        },
    )
    if plot and res.get("plot_svg"):
        _write(out_path, "chart.svg", res["plot_svg"])
    events = res["events"]
    n_kpi = len(events["som_kpi_events"])
    n_t2 = len(events["t2_episodes"])
    click.echo(
        f"monitored {events['n_samples']} samples: "
        f"{n_kpi} KPI warning(s), {n_t2} t2 episode(s)"
    )
    for ev in events["som_kpi_events"]:
        implicated = ", ".join(
            f"{e['variable']} (x{e['ratio']:.2f})" for e in ev["implicated"]
        )
        end = ev["end"] or "open"
        click.echo(f"  warning {ev['id']}: {ev['start']} .. {end}  [{implicated}]")


def _csv_to_records(text: str) -> list[dict]:
    lines = [line for line in text.splitlines() if line]
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


@main.command("retrain")
@click.argument("bundle_path", type=click.Path(path_type=Path))
@click.argument("data_csvs", nargs=-1, required=True, type=click.Path(path_type=Path))
@click.option("--flags", "flags_paths", multiple=True, type=click.Path(path_type=Path), help="Flags CSV per data CSV, in order.")
@click.option("--fault-log", "fault_log", type=click.Path(path_type=Path), default=None, help="Updated fault-window CSV.")
@server_option
@out_option
def cmd_retrain(bundle_path, data_csvs, flags_paths, fault_log, server, out):
    """Retrain on accumulated history and archive the previous bundle."""
    bundle_json = _read(bundle_path, "bundle")
    if flags_paths and len(flags_paths) != len(data_csvs):
        click.echo("error: --flags must be given once per data CSV", err=True)
        sys.exit(EXIT_INVALID_INPUT)
    payload = {
        "bundle_json": bundle_json,
        "data_csvs": [_read(p, "data CSV") for p in data_csvs],
        "flags_csvs": [_read(p, "flags CSV") for p in flags_paths] or None,
        "fault_windows_csv": _read(fault_log, "fault log") if fault_log else None,
    }
    out_path = _out_dir(out)
    try:
        with _client(server) as client:
            res = client.retrain(**payload)
    except Exception as exc:
        _fail(exc)
    stamp = _dt.datetime.now(tz=_dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    archive = bundle_path.with_name(f"{bundle_path.stem}.{stamp}{bundle_path.suffix}")
    shutil.copy2(bundle_path, archive)
    _write(out_path, "bundle.json", res["bundle_json"])
    _write_json(out_path, "train_summary.json", res["summary"])
    _write_json(out_path, "resolved_config.json", res["resolved_config"])
    s = res["summary"]
    click.echo(f"archived previous bundle -> {archive}")
    click.echo(
        f"retrained on {s['rows_used']} rows; DM_delta = {s['dm_delta']:.6g}, "
        f"LCL_kpi = {s['lcl_kpi']:.6g}, UCL_t2 = {s['ucl_t2']:.6g}"
    )


@main.command("bench")
@click.argument("suite", default="desk-bench")
@click.option("--seeds", default=None, help="Comma-separated seed list (default: 20 suite seeds).")
@click.option("--scenarios", default=None, help="Comma-separated scenario subset.")
@server_option
@out_option
def cmd_bench(suite, seeds, scenarios, server, out):
    """Run the synthetic benchmark and tabulate both detectors."""
    seed_list = [int(s) for s in seeds.split(",")] if seeds else None
    scenario_list = scenarios.split(",") if scenarios else None
    out_path = _out_dir(out)
    try:
        with _client(server) as client:
            res = client.bench(suite=suite, seeds=seed_list, scenarios=scenario_list)
    except Exception as exc:
        _fail(exc)
    _write(out_path, "bench.csv", res["table_csv"])
    _write(out_path, "bench.md", res["table_markdown"])
    _write_json(out_path, "bench_rows.json", res["runs"])
    click.echo(res["table_markdown"])


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8043, show_default=True, type=int)
def cmd_serve(host, port):
    """Run the monitoring service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
