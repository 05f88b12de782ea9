"""Bar charts of subset values and per-feature contributions (PNG, Agg)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .attribution import AttributionReport, subset_order  # noqa: E402


def _label(names) -> str:
    return "{" + ",".join(names) + "}" if names else "{}"


def plot_subsets(r: AttributionReport, path) -> Path:
    """One bar per feature subset; truncated entries hatched."""
    t = r.subset_table
    masks = [m for m in subset_order(t.n) if m in t.entries and m]
    labels = [_label(t.names(m)) for m in masks]
    values = [t.entries[m] for m in masks]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.7 * len(masks) + 1.5), 3.2))
    bars = ax.bar(range(len(masks)), values, color="#4c72b0")
    for bar, m in zip(bars, masks):
        if m in t.truncated:
            bar.set_hatch("//")
            bar.set_alpha(0.6)
    ax.axhline(r.total_disparity, color="0.3", lw=0.8, ls="--", label="I(Z;Y)")
    ax.set_xticks(range(len(masks)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ylabel = "Red(Z:(Y,X_S)) [bits]" if t.kind == "redundant" else "I(Z;Y(X_S)) [bits]"
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_features(r: AttributionReport, path) -> Path:
    """One bar per feature, in schema order."""
    feats = list(r.subset_table.features)
    values = [r.per_feature[f] for f in feats]
    fig, ax = plt.subplots(figsize=(max(3.5, 0.8 * len(feats) + 1.5), 3.2))
    colors = ["#c44e52" if v < 0 else "#55a868" for v in values]
    ax.bar(range(len(feats)), values, color=colors)
    ax.axhline(0, color="0.2", lw=0.6)
    ax.set_xticks(range(len(feats)))
    ax.set_xticklabels(feats)
    label = "PotentContri" if r.mode == "distributional" else "Contri"
    ax.set_ylabel(f"{label} [bits]")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
