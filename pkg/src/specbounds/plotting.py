"""Figure output (SVG, reproducible bytes)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bounds import WeylTable  # noqa: E402

_SVG_RC = {"svg.hashsalt": "specbounds", "svg.fonttype": "none"}


def weyl_plot(table: WeylTable, path, title: str | None = None) -> Path:
    """Line plot of ``lam_k * Vol / k`` against k, with the bound as text
    (it is far above any sensible axis range)."""
    path = Path(path)
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.plot(table.k, table.ratio, marker="o", ms=3, lw=1.2, color="C0")
        ax.set_xlabel("k")
        ax.set_ylabel(r"$\lambda_k\,\mathrm{Vol}/k$")
        ax.grid(alpha=0.3)
        ax.text(0.98, 0.04, f"bound: 2^{table.log2_bound:.2f}", transform=ax.transAxes,
                ha="right", va="bottom", fontsize=8)
        if title:
            ax.set_title(title, fontsize=10)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return path
