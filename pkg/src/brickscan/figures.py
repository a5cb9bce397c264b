"""Report figures.

Renders are pinned to a fixed backend, size, dpi and PNG metadata so the
same inputs always produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be set first

import numpy as np  # noqa: E402

from .errors import BrickscanError  # noqa: E402

FIG_DPI = 110
SWEEP_FIGSIZE = (8.0, 4.5)
HIST_FIGSIZE = (6.0, 4.0)
PNG_METADATA = {"Software": None}


def _save(fig, path) -> None:
    fig.savefig(Path(path), dpi=FIG_DPI, metadata=PNG_METADATA)
    plt.close(fig)


def save_sweep_figure(path, rows: Sequence[dict]) -> None:
    """Plot grouping-threshold sweep results next to their table.

    Each row needs the sweep table's columns: min_neighbors, detections,
    precision, recall, recall_H, recall_V, mean_labels_per_brick.
    """
    if not rows:
        raise BrickscanError("sweep figure needs at least one row")
    ks = [int(r["min_neighbors"]) for r in rows]
    fig, (ax_rates, ax_counts) = plt.subplots(
        1, 2, figsize=SWEEP_FIGSIZE, constrained_layout=True)

    for key, style in (("precision", "o-"), ("recall", "s-"),
                       ("recall_H", "^--"), ("recall_V", "v--")):
        ax_rates.plot(ks, [float(r[key]) for r in rows], style,
                      label=key, linewidth=1.5, markersize=4)
    ax_rates.set_xlabel("min neighbors")
    ax_rates.set_ylabel("rate")
    ax_rates.set_ylim(-0.05, 1.05)
    ax_rates.grid(True, alpha=0.3)
    ax_rates.legend(fontsize=8)

    ax_counts.plot(ks, [int(r["detections"]) for r in rows], "o-",
                   color="tab:blue", linewidth=1.5, markersize=4,
                   label="detections")
    ax_counts.set_xlabel("min neighbors")
    ax_counts.set_ylabel("detections", color="tab:blue")
    ax_labels = ax_counts.twinx()
    ax_labels.plot(ks, [float(r["mean_labels_per_brick"]) for r in rows],
                   "s--", color="tab:orange", linewidth=1.5, markersize=4,
                   label="mean labels per brick")
    ax_labels.set_ylabel("mean labels per brick", color="tab:orange")
    ax_counts.grid(True, alpha=0.3)

    _save(fig, path)


def save_labels_histogram(path, labels_per_brick: Sequence[int]) -> None:
    """Bar chart of how many labels each annotated brick received."""
    counts = [int(v) for v in labels_per_brick]
    top = max(counts) if counts else 0
    bins = np.arange(top + 2)
    hist = np.bincount(counts, minlength=top + 1) if counts else np.zeros(1)
    fig, ax = plt.subplots(figsize=HIST_FIGSIZE, constrained_layout=True)
    ax.bar(bins[:-1], hist[:len(bins) - 1], width=0.8, color="tab:blue")
    ax.set_xlabel("labels on brick")
    ax.set_ylabel("bricks")
    ax.set_xticks(bins[:-1])
    ax.grid(True, axis="y", alpha=0.3)
    _save(fig, path)
