"""Figure rendering for reports.

Figures are written straight to files with the Agg backend and fixed
metadata, so repeated runs produce identical bytes. The data view mirrors
how recency assays are usually shown: viral load against normalized
optical density, with the binary rule's thresholds drawn as quadrant
lines and points colored by predicted probability band.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import IndividualDataset
from .inference import RecencyRule

PNG_METADATA = {"Software": "ctlogit"}
BAND_EDGES = (1.0 / 3.0, 2.0 / 3.0)
BAND_COLORS = ("tab:blue", "tab:purple", "tab:red")
BAND_LABELS = ("p < 1/3", "1/3 <= p < 2/3", "p >= 2/3")
FIGSIZE = (7.0, 5.0)


def _save(fig, path) -> None:
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)


def plot_data(
    dataset: IndividualDataset,
    rule: RecencyRule,
    probabilities: np.ndarray | None,
    path,
) -> None:
    """Scatter of viral load vs. optical density on the rule's columns.

    With probabilities, points are colored by probability band; without,
    all points share one color. Viral load is drawn on a log axis in
    copies/mL regardless of how the column is stored.
    """
    odn = dataset.column(rule.odn)
    vl = dataset.column(rule.vl)
    if rule.vl_scale == "log":
        vl = np.exp(vl)
    vl = np.maximum(vl, 1.0)

    fig, ax = plt.subplots(figsize=FIGSIZE)
    if probabilities is None:
        ax.scatter(vl, odn, s=12, color="tab:gray", alpha=0.7, linewidths=0)
    else:
        band = np.digitize(probabilities, BAND_EDGES)
        for b, (color, label) in enumerate(zip(BAND_COLORS, BAND_LABELS)):
            mask = band == b
            if np.any(mask):
                ax.scatter(
                    vl[mask], odn[mask], s=12, color=color, alpha=0.7,
                    linewidths=0, label=label,
                )
        ax.legend(loc="upper right", frameon=False, fontsize=8)
    ax.axhline(rule.odn_threshold, color="black", linewidth=0.8, linestyle="--")
    ax.axvline(rule.vl_threshold, color="black", linewidth=0.8, linestyle="--")
    ax.set_xscale("log")
    ax.set_xlabel("viral load (copies/mL)")
    ax.set_ylabel("normalized optical density")
    _save(fig, path)


def plot_group_estimates(estimates, intervals, path) -> None:
    """Horizontal point-and-interval chart of group-level probabilities."""
    labels = [e.label for e in estimates]
    points = np.array([e.probability for e in estimates])
    y = np.arange(len(labels))[::-1]

    fig, ax = plt.subplots(figsize=FIGSIZE)
    if intervals is not None:
        by_label = {g.label: g for g in intervals}
        lo = np.array([by_label[lab].lower for lab in labels])
        hi = np.array([by_label[lab].upper for lab in labels])
        ax.errorbar(
            points, y, xerr=np.vstack([points - lo, hi - points]),
            fmt="o", color="tab:blue", ecolor="tab:blue", capsize=3,
        )
    else:
        ax.plot(points, y, "o", color="tab:blue")
    ax.set_yticks(y)
    ax.set_yticklabels(labels)
    ax.set_xlabel("estimated probability")
    ax.set_xlim(left=0)
    fig.tight_layout()
    _save(fig, path)
