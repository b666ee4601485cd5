"""Figure rendering for ROC and FROC reports.

Figures are written as SVG with a fixed hash salt and no timestamp, so equal
inputs give byte-identical files for a given matplotlib version.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "svg.hashsalt": "cadeval",
    "svg.fonttype": "path",
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (4.5, 4.0),
}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_roc(curve, path, band=None, title=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(curve.fpr, curve.tpr, color="tab:blue", lw=1.5, label=f"AUC = {curve.auc:.3f}")
        if band is not None:
            ax.plot(band.fpr, band.lo, color="tab:blue", lw=1, ls="--")
            ax.plot(band.fpr, band.hi, color="tab:blue", lw=1, ls="--", label="percentile interval")
        ax.plot([0, 1], [0, 1], color="0.7", lw=0.8, ls=":")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        if title:
            ax.set_title(title)
        ax.legend(loc="lower right", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_froc(curve, path, title=None):
    fp = [0.0, *curve.fp_per_image]
    sens = [0.0, *curve.sensitivity]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.step(fp, sens, where="post", color="tab:blue", lw=1.5, marker="s", ms=3)
        if curve.band is not None:
            ax.step(curve.band.grid, curve.band.lo, where="post", color="tab:blue", lw=1, ls="--")
            ax.step(curve.band.grid, curve.band.hi, where="post", color="tab:blue", lw=1, ls="--")
        ax.set_ylim(0, 1.01)
        ax.set_xlim(left=0)
        ax.set_xlabel("False positive marks per image")
        ax.set_ylabel("Sensitivity (per lesion)")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
