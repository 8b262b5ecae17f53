"""Figure rendering for the report commands. Figures go to files, never to screen."""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "axes.linewidth": 0.8,
    "axes.labelsize": 10,
    "axes.titlesize": 10,
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 100,
    "font.family": "sans-serif",
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "savefig.bbox": "tight",
    "savefig.dpi": 150,
    # stable SVG ids so reruns produce identical files
    "svg.hashsalt": "mnac",
}


@contextmanager
def figure_style():
    with plt.rc_context(STYLE):
        yield


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"Date": None} if path.suffix == ".svg" else None
    fig.savefig(path, metadata=meta)
    plt.close(fig)
    return path


def plot_capacity_curves(curves: Mapping[str, tuple[Sequence[float], Sequence[float]]], path,
                         units: str = "nats", title: str | None = None) -> Path:
    """Symmetric capacity against blocklength, one line per user-growth law."""
    with figure_style():
        fig, ax = plt.subplots()
        for label, (ns, caps) in curves.items():
            ax.plot(ns, caps, label=label)
        ax.set_xscale("log")
        ax.set_xlabel("blocklength n")
        ax.set_ylabel(f"C(n) [{units}]")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper left")
        return _save(fig, path)


def plot_error_rates(xs: Sequence[float], rates: Sequence[float], halfwidths: Sequence[float], path,
                     xlabel: str, ylabel: str = "error rate", title: str | None = None) -> Path:
    with figure_style():
        fig, ax = plt.subplots()
        ax.errorbar(xs, rates, yerr=halfwidths, marker="o", capsize=3)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_xscale("log", base=2)
        ax.set_ylim(bottom=0)
        if title:
            ax.set_title(title)
        return _save(fig, path)
