"""Matplotlib figures written next to the CSV reports."""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

TYPE_COLORS = {"R": "tab:green", "S": "tab:blue", "C": "tab:red", "": "tab:gray"}
CLASS_COLORS = {"train": "tab:blue", "test": "tab:orange", "other": "tab:gray"}

plt.rcParams.update({
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
})


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)


def plot_eigen_profiles(rows, path: str | os.PathLike, title: str = "") -> None:
    """Scaled eigenvalue magnitudes per relation, one line each, coloured by type."""
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    seen = set()
    for row in rows:
        if row.eigen_profile is None:
            continue
        x = np.arange(1, len(row.eigen_profile) + 1)
        label = row.rtype if row.rtype and row.rtype not in seen else None
        seen.add(row.rtype)
        ax.plot(x, row.eigen_profile, color=TYPE_COLORS.get(row.rtype, "tab:gray"), lw=1.0, label=label)
    ax.set_xlabel("eigenvalue rank")
    ax.set_ylabel("scaled magnitude")
    ax.set_ylim(0, 1.02)
    if seen - {""}:
        handles, labels = ax.get_legend_handles_labels()
        order = sorted(range(len(labels)), key=lambda i: "RSC".find(labels[i]))
        ax.legend([handles[i] for i in order], [labels[i] for i in order], frameon=False)
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_prediction_histograms(
    stats, path: str | os.PathLike, bins: int = 50, relations: Sequence[str] | None = None
) -> None:
    """Per-relation histograms of predicted probabilities split by truth class."""
    rows = [r for r in stats.rows if relations is None or r.name in relations] or [stats.overall]
    ncols = min(3, len(rows))
    nrows = int(np.ceil(len(rows) / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.2 * ncols, 2.4 * nrows), squeeze=False)
    factor = stats.resolution // bins
    edges = np.linspace(0.0, 1.0, bins + 1)
    for ax, row in zip(axes.flat, rows):
        coarse = row.histogram.reshape(3, bins, factor).sum(axis=2)
        for ci, cname in enumerate(CLASS_COLORS):
            ax.stairs(coarse[ci], edges, color=CLASS_COLORS[cname], label=cname, fill=cname != "other", alpha=0.6)
        ax.set_yscale("log")
        ax.axvline(stats.threshold, color="k", lw=0.6, ls=":")
        label = f"{row.name} ({row.rtype})" if row.rtype else row.name
        ax.set_title(label, fontsize=8)
        ax.set_xlabel("probability")
    for ax in list(axes.flat)[len(rows):]:
        ax.set_visible(False)
    axes.flat[0].legend(frameon=False)
    _save(fig, path)


def plot_hits(report, path: str | os.PathLike, k: int = 10) -> None:
    """Bar chart of per-relation hits@k coloured by relation type."""
    rows = report.rows
    fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * len(rows) + 1.5), 3.2))
    x = np.arange(len(rows))
    vals = [row.hits.get(k, np.nan) for row in rows]
    ax.bar(x, vals, color=[TYPE_COLORS.get(row.rtype, "tab:gray") for row in rows])
    ax.axhline(report.overall.hits.get(k, np.nan), color="k", lw=0.8, ls="--", label="all")
    ax.set_xticks(x)
    ax.set_xticklabels([row.name for row in rows], rotation=60, ha="right")
    ax.set_ylabel(f"hits@{k}")
    ax.set_ylim(0, 1)
    ax.legend(frameon=False)
    _save(fig, path)
