"""Matplotlib figures written next to the CSV outputs, plus gnuplot scripts."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NetworkIOError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
FIG_WIDTH = 5.0

PARAMS = {
    "axes.labelsize": 11,
    "font.size": 10,
    "font.family": "serif",
    "mathtext.fontset": "stix",
    "legend.fontsize": 9,
    "legend.frameon": False,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "figure.figsize": (FIG_WIDTH, FIG_WIDTH * GOLDEN),
    "figure.dpi": 150,
    "savefig.bbox": "tight",
}

COLORS = {"balanced": "#c0392b", "unbalanced": "#2b8cbe", "theory": "k"}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path) -> Path:
    plt = _pyplot()
    path = Path(path)
    try:
        fig.savefig(path)
    except OSError as exc:
        raise NetworkIOError(str(exc)) from exc
    finally:
        plt.close(fig)
    return path


def plot_traces(path, traces: dict, xlabel: str = "time", title: str = "") -> Path:
    """Fidelity vs time; ``traces`` maps a label to a ``FidelityTrace``."""
    plt = _pyplot()
    with plt.rc_context(PARAMS):
        fig, ax = plt.subplots()
        for label, tr in traces.items():
            style = ":" if label == "unbalanced" else "-"
            ax.plot(tr.times, tr.values, style, color=COLORS.get(label), label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("fidelity")
        ax.set_ylim(0.0, 1.02)
        if title:
            ax.set_title(title)
        if len(traces) > 1:
            ax.legend(loc="best")
        return _save(fig, path)


def plot_gamma_scan(path, rows) -> Path:
    """Peak fidelity and peak time against gamma (two panels)."""
    plt = _pyplot()
    g = [r.gamma for r in rows]
    with plt.rc_context(PARAMS):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(2 * FIG_WIDTH, FIG_WIDTH * GOLDEN))
        a1.plot(g, [r.peak_fidelity for r in rows], "o-", color=COLORS["balanced"])
        a1.set_xlabel(r"$\gamma$")
        a1.set_ylabel("peak fidelity")
        a2.loglog(g, [r.peak_time for r in rows], "s-", color=COLORS["unbalanced"], label="simulated")
        a2.loglog(g, [r.tm for r in rows], "--", color=COLORS["theory"], label=r"$t_m$")
        a2.set_xlabel(r"$\gamma$")
        a2.set_ylabel("peak time")
        a2.legend()
        return _save(fig, path)


def plot_convergence(path, rows) -> Path:
    plt = _pyplot()
    L = [r.L for r in rows]
    with plt.rc_context(PARAMS):
        fig, ax = plt.subplots()
        ax.plot(L, [r.symmetrized for r in rows], "o-", color=COLORS["balanced"], label="symmetrized")
        ax.plot(L, [r.unsymmetrized for r in rows], "s--", color=COLORS["unbalanced"], label="unsymmetrized")
        ax.set_xscale("log")
        ax.set_xlabel("cycles $L$")
        ax.set_ylabel("peak fidelity")
        ax.legend()
        return _save(fig, path)


def plot_ensemble(path, summaries) -> Path:
    plt = _pyplot()
    sep = np.array([s.separation for s in summaries])
    med = np.array([s.median_time for s in summaries])
    lo = med - np.array([s.q1_time for s in summaries])
    hi = np.array([s.q3_time for s in summaries]) - med
    with plt.rc_context(PARAMS):
        fig, ax = plt.subplots()
        ax.errorbar(sep, med, yerr=[lo, hi], fmt="o", capsize=3, color=COLORS["balanced"], label="median (quartiles)")
        ax.plot(sep, [s.mean_time for s in summaries], "s--", color=COLORS["unbalanced"], label="mean")
        ax.set_yscale("log")
        ax.set_xlabel("NV separation (nm)")
        ax.set_ylabel("time to threshold")
        ax.legend()
        return _save(fig, path)


def plot_norms(path, rows: Sequence[dict]) -> Path:
    """Measured (markers) against predicted (lines) norms, one colour per class."""
    plt = _pyplot()
    with plt.rc_context(PARAMS):
        fig, ax = plt.subplots()
        classes = sorted({r["class"] for r in rows})
        for k, cls in enumerate(classes):
            sub = sorted((r for r in rows if r["class"] == cls), key=lambda r: r["n"])
            n = [r["n"] for r in sub]
            color = f"C{k}"
            ax.plot(n, [r["predicted"] for r in sub], "-", color=color)
            ax.errorbar(n, [r["measuredMean"] for r in sub], yerr=[r["measuredStd"] for r in sub],
                        fmt="o", color=color, capsize=2, label=cls)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("$N$")
        ax.set_ylabel(r"$\|A\|_F$")
        ax.legend()
        return _save(fig, path)


def gnuplot_script(csv_path, png_path, xcol: int, ycols: Sequence[int], xlabel: str, ylabel: str,
                   logx: bool = False, logy: bool = False) -> str:
    """A self-contained gnuplot script for a comma-separated file with a header."""
    lines = [
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key autotitle columnhead",
        "set terminal pngcairo size 800,500",
        f"set output '{png_path}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
    ]
    if logx:
        lines.append("set logscale x")
    if logy:
        lines.append("set logscale y")
    plots = ", ".join(f"'{csv_path}' using {xcol}:{y} with linespoints" for y in ycols)
    lines.append(f"plot {plots}")
    return "\n".join(lines) + "\n"
