"""Rendered figures and plain-text reports for the CLI output paths.

Figures are written next to the delimited files they visualize; every
number in a figure is also available in the CSVs, so any other plotter
can reproduce them.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def save_pr_figure(curve, path, title="Held-out precision/recall") -> None:
    recalls = [r for _, r in curve.points]
    precisions = [p for p, _ in curve.points]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(recalls, precisions, lw=1.5)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0.0, max(0.05, max(recalls, default=0.0)) * 1.05)
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    ax.set_title(f"{title} (AUC {curve.auc:.3f})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_loss_figure(metrics, path, title="Training loss") -> None:
    epochs = [m.epoch for m in metrics]
    losses = [m.mean_loss for m in metrics]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, losses, marker="o", lw=1.5)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean superbag loss")
    ax.grid(alpha=0.3)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def ingest_report(stats, bags, superbags) -> str:
    """Plain-text ingestion summary: drop statistics plus bag/superbag shape."""
    sizes = sorted(len(b) for b in bags)
    lines = [stats.report(), ""]
    lines.append(f"sentence bags          {len(bags)}")
    if bags:
        lines.append(f"bag size min/median/max {sizes[0]}/{sizes[len(sizes) // 2]}/{sizes[-1]}")
    lines.append(f"superbags (one epoch)  {len(superbags)}")
    if superbags:
        by_size = {}
        for sb in superbags:
            by_size[len(sb)] = by_size.get(len(sb), 0) + 1
        dist = ", ".join(f"{n} bags x{c}" for n, c in sorted(by_size.items()))
        lines.append(f"superbag sizes         {dist}")
    return "\n".join(lines)
