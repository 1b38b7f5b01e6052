"""Matplotlib helpers for report figures: fixed style, file-only backend, reproducible bytes."""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "svg.hashsalt": "geofm-bench",
}

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")


def figsize(scale: float = 1.0, aspect: float = 0.62) -> tuple[float, float]:
    width = 6.0 * scale
    return width, width * aspect


@contextmanager
def styled():
    with matplotlib.rc_context(STYLE):
        yield


def save_figure(fig, path) -> Path:
    """Write *fig* with no timestamp/software metadata so reruns give identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def _fraction_label(k: float) -> str:
    return f"{k:g}%"


def plot_score_curves(curves: Mapping[str, Mapping[float, float]], path, ylabel="mIoU (%)",
                      title: str | None = None) -> Path:
    """Score versus labelled fraction on a log x axis, one line per model."""
    with styled():
        fig, ax = plt.subplots(figsize=figsize())
        ks = sorted({k for c in curves.values() for k in c})
        for i, (name, curve) in enumerate(curves.items()):
            xs = sorted(curve)
            ax.plot(xs, [curve[k] for k in xs], marker="o", color=PALETTE[i % len(PALETTE)], label=name)
        ax.set_xscale("log")
        ax.set_xticks(ks)
        ax.set_xticklabels([_fraction_label(k) for k in ks])
        ax.minorticks_off()
        ax.set_xlabel("labelled training fraction k")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        return save_figure(fig, path)


def plot_grouped_bars(groups: Sequence[str], series: Mapping[str, Sequence[float]], path, ylabel: str,
                      title: str | None = None, reference: float | None = None, fmt: str = "{:.2f}") -> Path:
    """Bars grouped along x by *groups*, one coloured series per key of *series*."""
    with styled():
        fig, ax = plt.subplots(figsize=figsize())
        n = max(len(series), 1)
        width = 0.8 / n
        x = np.arange(len(groups))
        for i, (name, values) in enumerate(series.items()):
            pos = x - 0.4 + width * (i + 0.5)
            bars = ax.bar(pos, values, width, color=PALETTE[i % len(PALETTE)], label=name)
            ax.bar_label(bars, labels=[fmt.format(v) for v in values], fontsize=6, padding=1)
        if reference is not None:
            ax.axhline(reference, color="k", lw=0.8, ls="--")
        ax.set_xticks(x)
        ax.set_xticklabels(groups)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(frameon=False)
        return save_figure(fig, path)


def plot_row_bars(labels: Sequence[str], values: Sequence[float], path, xlabel: str,
                  title: str | None = None, fmt: str = "{:.2f}") -> Path:
    """One horizontal bar per table row, top to bottom in table order; height grows with the row count."""
    with styled():
        fig, ax = plt.subplots(figsize=(6.0, max(1.6, 0.5 + 0.24 * len(labels))))
        y = np.arange(len(labels))
        bars = ax.barh(y, values, 0.7, color=PALETTE[0])
        ax.bar_label(bars, labels=[fmt.format(v) for v in values], fontsize=6, padding=2)
        ax.set_yticks(y)
        ax.set_yticklabels(labels, fontsize=7)
        ax.invert_yaxis()
        ax.grid(axis="y", visible=False)
        ax.set_xlabel(xlabel)
        if title:
            ax.set_title(title)
        return save_figure(fig, path)
