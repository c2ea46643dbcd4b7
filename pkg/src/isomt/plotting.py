"""LC-versus-BLEU scatter plot for system comparisons."""
from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_tradeoff(rows: Sequence[tuple[str, float, float]], path, title: str = "") -> None:
    """Write a scatter of ``(label, bleu, lc)`` rows to ``path`` (format from the suffix)."""
    fig, ax = plt.subplots(figsize=(5.0, 4.0), dpi=100)
    for label, bleu, lc in rows:
        ax.scatter(lc, bleu, s=30)
        ax.annotate(label, (lc, bleu), textcoords="offset points", xytext=(4, 4), fontsize=8)
    ax.set_xlabel("length compliance (%)")
    ax.set_ylabel("BLEU")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    # fixed metadata keeps PNG output byte-identical across runs
    fig.savefig(path, metadata={"Software": None} if str(path).endswith(".png") else None)
    plt.close(fig)
