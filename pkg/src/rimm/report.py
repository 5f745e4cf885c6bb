"""Figure rendering for experiment and demo outputs.

Kept separate from the numeric modules so the core library stays free of
plotting imports; the CLI report path calls in here after writing the CSV,
dropping PNG files alongside the delimited output.
"""

from __future__ import annotations

import math
import os
from collections import defaultdict

import numpy as np

from .harness import HashDemoReport, ResultRow

__all__ = ["render_experiment_figures", "render_hashdemo_figure"]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _median_by(rows: list[ResultRow], axis: str) -> dict[str, tuple[list, list]]:
    grouped: dict[str, dict[float, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if r.status != "ok" or not math.isfinite(r.l2_error):
            continue
        grouped[r.variant][getattr(r.cell, axis)].append(r.l2_error)
    out = {}
    for variant, by_x in grouped.items():
        xs = sorted(by_x)
        out[variant] = (xs, [float(np.median(by_x[x])) for x in xs])
    return out


def _error_axis_plot(plt, rows, axis, xlabel, out_path):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for variant, (xs, meds) in sorted(_median_by(rows, axis).items()):
        ax.plot(xs, meds, marker="o", label=variant)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("median L2 error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path


def render_experiment_figures(rows: list[ResultRow], out_dir: str) -> list[str]:
    """Render median-error figures for every swept axis; returns file paths."""
    plt = _pyplot()
    os.makedirs(out_dir, exist_ok=True)
    written = []
    dims = {r.cell.d for r in rows}
    epss = {r.cell.epsilon for r in rows}
    gammas = {r.cell.gamma for r in rows}
    if len(dims) > 1:
        written.append(
            _error_axis_plot(
                plt, rows, "d", "dimension d", os.path.join(out_dir, "error_vs_dimension.png")
            )
        )
    if len(epss) > 1:
        written.append(
            _error_axis_plot(
                plt, rows, "epsilon", "corruption fraction",
                os.path.join(out_dir, "error_vs_epsilon.png"),
            )
        )
    if len(gammas) > 1:
        written.append(
            _error_axis_plot(
                plt, rows, "gamma", "presence fraction",
                os.path.join(out_dir, "error_vs_gamma.png"),
            )
        )
    if not written:
        written.append(
            _error_axis_plot(
                plt, rows, "epsilon", "corruption fraction",
                os.path.join(out_dir, "error_summary.png"),
            )
        )
    return written


def render_hashdemo_figure(reports: list[HashDemoReport], out_dir: str) -> str:
    """Observed vs predicted missing fraction across compression levels."""
    plt = _pyplot()
    os.makedirs(out_dir, exist_ok=True)
    reports = sorted(reports, key=lambda r: r.c_factor)
    cs = [r.c_factor for r in reports]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(cs, [r.observed_missing for r in reports], marker="o", label="observed")
    ax.plot(cs, [r.predicted_missing for r in reports], marker="s", label="predicted")
    ax.plot(cs, [r.bound_e4c for r in reports], ls="--", label="exp(-4C)")
    ax.plot(cs, [r.floor for r in reports], ls=":", label="exp(-(4C+2)) floor")
    ax.set_yscale("log")
    ax.set_xlabel("compression factor C")
    ax.set_ylabel("missing-entry fraction")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, "hashdemo_missing_fraction.png")
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
