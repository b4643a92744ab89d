"""Figures for run directories: convergence curves, decay slopes, kernel profiles and DN heatmaps."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
FIG_WIDTH = 4.5

STYLE = {
    "font.family": "serif",
    "font.size": 8,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "mathtext.fontset": "stix",
    "lines.linewidth": 1.0,
    "lines.markersize": 3,
    "figure.figsize": (FIG_WIDTH, FIG_WIDTH * GOLDEN),
    "figure.dpi": 150,
    "savefig.bbox": "tight",
}


def _convergence(ax, spec):
    for label, errs in spec["series"].items():
        ax.loglog(spec["x"][: len(errs)], errs, "o-", label=label)
    ax.set_xlabel("spatial nodes per axis")
    ax.set_ylabel("relative error")
    ax.legend()


def _decay(ax, spec):
    for label, (y, norms, slope) in spec["series"].items():
        ax.loglog(y, norms, "o-", label=f"{label} (slope {slope:.3f})")
    ax.set_xlabel("$y$")
    ax.set_ylabel("norm")
    ax.legend()


def _kernel(ax, spec):
    x = np.asarray(spec["x"])
    for tau, prof in zip(spec["taus"], spec["profiles"]):
        prof = np.asarray(prof)
        if prof.ndim == 2:
            prof = prof[:, prof.shape[1] // 2]
        ax.plot(x, prof, label=rf"$\tau = {tau:g}$")
    ax.set_xlabel("$x$")
    ax.set_ylabel(r"$p(x, 0, \tau)$")
    ax.legend()


def _heatmap(ax, spec):
    m = np.asarray(spec["matrix"])
    lim = float(np.max(np.abs(m))) or 1.0
    im = ax.imshow(m, cmap="RdBu_r", vmin=-lim, vmax=lim, aspect="auto", interpolation="nearest")
    ax.set_xlabel(spec.get("xlabel", "data index"))
    ax.set_ylabel(spec.get("ylabel", "response index"))
    ax.figure.colorbar(im, ax=ax)


def _summary(ax, spec):
    names = spec["names"]
    ratios = np.asarray(spec["ratios"], float)
    colors = ["tab:green" if ok else "tab:red" for ok in spec["passed"]]
    ax.barh(np.arange(len(names)), np.clip(np.nan_to_num(ratios, posinf=1e6), 1e-16, 1e6), color=colors)
    ax.set_xscale("log")
    ax.axvline(1.0, color="k", lw=0.8)
    ax.set_yticks(np.arange(len(names)), names)
    ax.set_xlabel("value / tolerance (> 1 fails for upper bounds)")


DRAWERS = {"convergence": _convergence, "decay": _decay, "kernel": _kernel,
           "heatmap": _heatmap, "summary": _summary}


def render(spec: dict, out_dir, fmt: str = "png") -> Path:
    """Draw one plot description produced by a runner and save it under ``out_dir``."""
    kind = spec["kind"]
    if kind not in DRAWERS:
        raise ValueError(f"unknown plot kind '{kind}'")
    path = Path(out_dir) / f"{spec['name']}.{fmt}"
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if kind == "summary":
            fig.set_size_inches(FIG_WIDTH, max(2.0, 0.18 * len(spec["names"]) + 0.8))
        DRAWERS[kind](ax, spec)
        ax.set_title(spec["name"].replace("_", " "))
        fig.savefig(path)
        plt.close(fig)
    return path
