"""Matplotlib figures rendered alongside delimited outputs on report paths."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def loss_curve_figure(metrics: list[dict], path: str | Path, title: str = "training") -> Path:
    """Per-epoch loss curves from a metrics log; one subplot per loss term."""
    path = Path(path)
    if not metrics:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.set_title(f"{title} (no epochs)")
        fig.savefig(path, dpi=110)
        plt.close(fig)
        return path
    skip = {"epoch", "lr"}
    keys = [k for k, v in metrics[0].items() if k not in skip and isinstance(v, (int, float))]
    epochs = [m["epoch"] for m in metrics]
    fig, axes = plt.subplots(1, len(keys), figsize=(3.2 * len(keys), 3.2), squeeze=False)
    for ax, key in zip(axes[0], keys):
        values = [m.get(key) for m in metrics]
        if any(v is None for v in values):
            ax.set_visible(False)
            continue
        ax.plot(epochs, values, lw=1.2)
        ax.set_title(key)
        ax.set_xlabel("epoch")
        if all(v > 0 for v in values):
            ax.set_yscale("log")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def ablation_figure(results: dict[str, list[float]], path: str | Path) -> Path:
    """Bar chart of held-out ACE per loss configuration with seed spread."""
    path = Path(path)
    labels = list(results)
    means = [sum(v) / len(v) for v in results.values()]
    spreads = [(max(v) - min(v)) / 2.0 for v in results.values()]
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.bar(labels, means, yerr=spreads, capsize=4, color=["#b24a4a", "#b2894a", "#4a7ab2"])
    ax.set_ylabel("held-out ACE")
    ax.set_title("converter loss ablation")
    for i, (m, v) in enumerate(zip(means, results.values())):
        ax.text(i, m, f"{m:.4g}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def metric_bars_figure(values: dict[str, float], path: str | Path, title: str = "evaluation") -> Path:
    """One bar per scalar metric in an evaluation report."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(1.4 + 1.1 * len(values), 3.4))
    ax.bar(list(values), list(values.values()), color="#4a7ab2")
    ax.set_title(title)
    for i, (k, v) in enumerate(values.items()):
        ax.text(i, v, f"{v:.4g}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
