"""Static SVG chart of the two monitoring statistics with control limits."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.dates as mdates
import matplotlib.pyplot as plt
import numpy as np

from .pipeline import MonitoringResult


def monitoring_chart_svg(
    result: MonitoringResult, lcl_kpi: float, ucl_t2: float
) -> str:
    """Filtered KPI with its LCL on top, T2 with its UCL below.

    Warning episodes are shaded on their detector's axis.
    """
    times = result.kpi_series.timestamps.astype("datetime64[s]")
    fig, (ax_kpi, ax_t2) = plt.subplots(2, 1, figsize=(11, 6), sharex=True)

    filtered = result.kpi_series.values["filtered_kpi"]
    ax_kpi.plot(times, filtered, lw=0.8, color="#1f6fb4", label="filtered KPI")
    ax_kpi.axhline(lcl_kpi, color="#c23b22", ls="--", lw=1.0, label="LCL")
    for ev in result.kpi_series.events:
        end = ev.end_index if ev.end_index is not None else len(times) - 1
        ax_kpi.axvspan(times[ev.start_index], times[end], color="#c23b22", alpha=0.15)
    ax_kpi.set_ylabel("KPI")
    ax_kpi.legend(loc="lower left", fontsize=8)

    t2_vals = result.t2_series.values["t2"]
    ax_t2.plot(times, t2_vals, lw=0.8, color="#2e7d32", label="t2")
    ax_t2.axhline(ucl_t2, color="#c23b22", ls="--", lw=1.0, label="UCL")
    for ev in result.t2_series.events:
        end = ev.end_index if ev.end_index is not None else len(times) - 1
        ax_t2.axvspan(times[ev.start_index], times[end], color="#c23b22", alpha=0.15)
    ax_t2.set_ylabel("t2")
    if np.isfinite(t2_vals).any() and np.nanmax(t2_vals) > 50 * max(ucl_t2, 1e-9):
        ax_t2.set_yscale("log")
    ax_t2.legend(loc="upper left", fontsize=8)
    ax_t2.xaxis.set_major_formatter(mdates.DateFormatter("%m-%d %H:%M"))
    fig.autofmt_xdate()
    fig.tight_layout()

    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()
