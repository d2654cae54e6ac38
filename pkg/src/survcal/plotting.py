"""Figure rendering for report and training artifacts (file output only)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .estimators import KMCurve
from .trainer import TrainResult

_DPI = 120


def km_overlay_figure(
    path: str | Path, km: KMCurve, marginal: np.ndarray, title: str
) -> None:
    """Product-limit curve with its variance band against the model marginal."""
    tau = km.tau
    grid = np.arange(tau + 1)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.step(grid, km.values, where="post", color="C0", label="product-limit")
    sd = np.sqrt(km.variance)
    band = np.where(km.variance_valid, 1.96 * sd, 0.0)
    ax.fill_between(
        grid, km.values - band, km.values + band,
        step="post", alpha=0.25, color="C0", linewidth=0,
    )
    ax.plot(grid, marginal, color="C1", marker="o", markersize=3,
            label="model marginal")
    ax.set_xlabel("t")
    ax.set_ylabel("S(t)")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(title)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def training_figure(path: str | Path, result: TrainResult) -> None:
    iters = [r.iteration for r in result.history]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 6.0), sharex=True)
    ax1.plot(iters, [r.train_loss for r in result.history], color="C0",
             label="train loss")
    if any(r.penalty != 0.0 for r in result.history):
        ax1.plot(iters, [r.penalty for r in result.history], color="C3",
                 label="constraint penalty")
    ax1.axvline(result.selected_iteration, color="gray", linestyle=":",
                label="selected")
    ax1.set_ylabel("loss")
    ax1.legend(loc="best")

    ax2.plot(iters, [r.val_c_index for r in result.history], color="C2",
             label="validation c-index")
    if result.constraints:
        ax2.step(iters, [r.satisfied for r in result.history], where="post",
                 color="C4", label="constraints satisfied")
    ax2.axvline(result.selected_iteration, color="gray", linestyle=":")
    ax2.set_xlabel("iteration")
    ax2.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def mu_trajectory_figure(path: str | Path, result: TrainResult) -> bool:
    """Multiplier and training-distance trajectories; False when not a dual run."""
    if not result.constraints or result.history[0].train_dists is None:
        return False
    iters = [r.iteration for r in result.history]
    names = [c.subgroup.name for c in result.constraints]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 6.0), sharex=True)
    for i, name in enumerate(names):
        ax1.plot(iters, [r.mu[i] for r in result.history], label=name)
        ax2.plot(iters, [r.train_dists[i] for r in result.history], label=name)
        ax2.axhline(result.constraints[i].c, linestyle="--", linewidth=0.8,
                    color="gray")
    ax1.set_ylabel("multiplier")
    ax1.legend(loc="best", fontsize=8)
    ax2.set_ylabel("train distance")
    ax2.set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return True
