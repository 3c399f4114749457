"""Matplotlib rendering of fields and descent traces to image files.

Every report path of the CLI drops these figures next to the CSV/JSON output:
heatmaps of the data and coefficient fields, a surface view of the recovered
coefficient, and the convergence history.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .descent import DescentTrace
from .grid import Field2D

_CMAP = "viridis"


def _extent(field: Field2D):
    g = field.grid
    return (g.x0, g.x1, g.y0, g.y1)


def save_heatmap(field: Field2D, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    im = ax.imshow(field.values, origin="lower", extent=_extent(field),
                   cmap=_CMAP, interpolation="nearest")
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def save_surface(field: Field2D, path, title: str = "") -> None:
    X, Y = field.grid.meshgrid()
    fig = plt.figure(figsize=(4.8, 3.8))
    ax = fig.add_subplot(projection="3d")
    ax.plot_surface(X, Y, field.values, cmap=_CMAP, linewidth=0, antialiased=True)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def save_comparison(fields: list[tuple[Field2D, str]], path, suptitle: str = "") -> None:
    """Row of heatmaps on a shared color scale."""
    n = len(fields)
    vmin = min(f.values.min() for f, _ in fields)
    vmax = max(f.values.max() for f, _ in fields)
    fig, axes = plt.subplots(1, n, figsize=(3.6 * n, 3.4), squeeze=False)
    for ax, (f, title) in zip(axes[0], fields):
        im = ax.imshow(f.values, origin="lower", extent=_extent(f),
                       cmap=_CMAP, vmin=vmin, vmax=vmax, interpolation="nearest")
        ax.set_title(title)
        ax.set_xlabel("x")
    fig.colorbar(im, ax=list(axes[0]), shrink=0.85)
    if suptitle:
        fig.suptitle(suptitle)
    fig.savefig(path, dpi=140)
    plt.close(fig)


def save_trace_plot(trace: DescentTrace, path, title: str = "") -> None:
    iters = [r.iteration for r in trace.rows]
    values = np.array([r.value for r in trace.rows])
    relerr = np.array([r.relerr_p for r in trace.rows])
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    positive = values > 0
    if positive.any():
        ax.semilogy(np.asarray(iters)[positive], values[positive],
                    color="tab:blue", label="objective")
    else:
        ax.plot(iters, values, color="tab:blue", label="objective")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective", color="tab:blue")
    if np.isfinite(relerr).any():
        ax2 = ax.twinx()
        ax2.plot(iters, relerr, color="tab:red", label="rel. L1 error of p")
        ax2.set_ylabel("relative L1 error of p", color="tab:red")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
