"""Figures for benchmark reports, written straight to files (no display needed)."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import matplotlib as mpl
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .bench import BenchReport

STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 120,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "axes.spines.right": False,
    "axes.spines.top": False,
    "legend.frameon": False,
}

COLORS = {False: "#4c72b0", True: "#dd8452"}


def _figure():
    with mpl.rc_context(STYLE):
        fig = Figure()
        FigureCanvasAgg(fig)
        ax = fig.add_subplot()
    return fig, ax


def _grouped_bars(ax, report: BenchReport, value, ylabel: str, legend_loc: str = "best"):
    engines = list(dict.fromkeys(r.engine for r in report.rows))
    variants = sorted({r.reordered for r in report.rows})
    width = 0.8 / len(variants)
    x = np.arange(len(engines))
    for k, reordered in enumerate(variants):
        heights = []
        for e in engines:
            v = value(report.row(e, reordered))
            heights.append(np.nan if v is None else v)
        bars = ax.bar(
            x + (k - (len(variants) - 1) / 2) * width,
            heights,
            width,
            color=COLORS[reordered],
            label="with reorder" if reordered else "without reorder",
        )
        ax.bar_label(bars, fmt="%.1f", fontsize=8, padding=2)
    ax.set_xticks(x, engines)
    ax.set_ylabel(ylabel)
    if len(variants) > 1:
        ax.legend(loc=legend_loc)


def plot_time_reduction(report: BenchReport, path) -> Path:
    fig, ax = _figure()
    with mpl.rc_context(STYLE):
        _grouped_bars(ax, report, lambda r: r.time_reduction_percent, "time reduction vs baseline (%)", "upper left")
        ax.set_ylim(top=110)
        ax.set_title(f"Inference time reduction ({report.n_samples} samples)")
        fig.savefig(path)
    return Path(path)


def plot_work(report: BenchReport, path) -> Path:
    """Mean words examined per clause for the bitwise engines."""
    fig, ax = _figure()
    bitwise = replace(report, rows=[r for r in report.rows if r.engine.startswith("bitwise")])
    with mpl.rc_context(STYLE):
        _grouped_bars(ax, bitwise, lambda r: r.mean_words_examined_per_clause, "words examined per clause")
        ax.set_title("Clause evaluation work")
        fig.savefig(path)
    return Path(path)


def render_report_figures(report: BenchReport, outdir, stem: str = "bench") -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    if any(r.time_reduction_percent is not None for r in report.rows):
        paths.append(plot_time_reduction(report, outdir / f"{stem}_time_reduction.png"))
    if any(r.engine.startswith("bitwise") for r in report.rows):
        paths.append(plot_work(report, outdir / f"{stem}_words_examined.png"))
    return paths
