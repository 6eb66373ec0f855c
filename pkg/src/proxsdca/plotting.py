"""Convergence figures rendered next to the delimited trace output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .problem import RunTrace


def plot_trace(trace: RunTrace, path, title: str | None = None) -> None:
    """Two panels: primal/dual values and the duality gap on a log scale."""
    t = np.array([cp.t for cp in trace])
    primal = np.array([cp.primal for cp in trace])
    dual = np.array([cp.dual for cp in trace])
    gap = np.array([cp.gap for cp in trace])

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.plot(t, primal, label="primal", color="tab:blue")
    ax1.plot(t, dual, label="dual", color="tab:orange")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("objective")
    ax1.legend(frameon=False)

    positive = gap > 0
    if np.any(positive):
        ax2.semilogy(t[positive], gap[positive], color="tab:green")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("duality gap")

    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
