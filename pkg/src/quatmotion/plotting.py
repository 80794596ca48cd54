"""Figures written next to the CSV/JSON reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DPI = 120


def savefig(fig, path):
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, dpi=DPI, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)


def plot_tracking(curves: dict, dt, path, wrap_frame=None):
    """Per-frame tracking error (deg) for one or more runs."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for label, err in curves.items():
        t = np.arange(len(err)) * dt
        ax.plot(t, np.degrees(err), lw=1.2, label=label)
    if wrap_frame is not None:
        ax.axvline(wrap_frame * dt, color="0.5", ls="--", lw=0.8, label="wrap frame")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("tracking error (deg)")
    ax.set_yscale("symlog", linthresh=1.0)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7, loc="upper left", frameon=False)
    savefig(fig, path)


def plot_root(pred, truth, refs, path):
    """Root translation per axis: prediction, noisy reference and ground truth."""
    fig, axes = plt.subplots(3, 1, figsize=(7, 5), sharex=True)
    t = pred.times
    for k, ax in enumerate(axes):
        ax.plot(t, refs.root[:, k], color="tab:green", lw=0.8, alpha=0.7, label="reference")
        ax.plot(t, truth.root[:, k], color="tab:red", lw=1.0, label="ground truth")
        ax.plot(t, pred.root[:, k], color="tab:blue", lw=1.2, label="prediction")
        ax.set_ylabel("xyz"[k] + " (m)")
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=7, loc="upper right", frameon=False)
    axes[-1].set_xlabel("time (s)")
    savefig(fig, path)
