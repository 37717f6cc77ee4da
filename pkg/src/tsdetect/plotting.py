"""Figure rendering for the CLI report paths.

Everything draws to files through the Agg backend; there is no interactive
display. PNG metadata is pinned so repeated runs produce byte-identical
images.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import TraceRow

_SAVE_KWARGS = {"dpi": 120, "metadata": {"Software": "tsdetect"}}


def save_recall_trace_figure(rows: list[TraceRow], path: str) -> None:
    """Hit/miss scatter per frame, one horizontal band per sequence."""
    fig, ax = plt.subplots(figsize=(8, 2.5))
    sequence_ids = sorted({r.sequence_id for r in rows})
    offsets = {sid: i for i, sid in enumerate(sequence_ids)}
    for r in rows:
        if r.n_gt == 0:
            continue
        hit = r.n_hit == r.n_gt
        ax.scatter(
            r.frame_index,
            offsets[r.sequence_id],
            s=12,
            marker="o" if hit else "x",
            color="tab:green" if hit else "tab:red",
        )
    ax.set_yticks(list(offsets.values()))
    ax.set_yticklabels(sequence_ids)
    ax.set_xlabel("frame")
    ax.set_title("per-frame ground-truth coverage (o = hit, x = miss)")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_pr_curve_figure(recall: np.ndarray, precision: np.ndarray, path: str, label: str) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.plot(recall, precision, drawstyle="steps-post")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.set_title(label)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_delta_sweep_figure(
    deltas: list[float], metrics: dict[str, list[float]], path: str
) -> None:
    """One panel per metric over the swept neighbor threshold."""
    names = list(metrics)
    fig, axes = plt.subplots(1, len(names), figsize=(2.6 * len(names), 2.8), squeeze=False)
    for ax, name in zip(axes[0], names):
        ax.plot(deltas, metrics[name], marker="o")
        ax.set_xlabel("delta")
        ax.set_title(name)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
