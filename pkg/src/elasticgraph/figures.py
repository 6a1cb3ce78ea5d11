"""Figure rendering for CLI reports.

Headless (Agg backend).  Each function writes one PNG next to the delimited
output it illustrates and returns the path.  Files are written atomically
(temp file + rename) like every other CLI output.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

__all__ = [
    "save_trace_figure",
    "save_training_figure",
    "save_sweep_figure",
    "save_variants_figure",
    "save_edge_norm_figure",
]

DPI = 150


def _atomic_savefig(fig, path):
    path = os.fspath(path)
    tmp = path + ".tmp"
    fmt = os.path.splitext(path)[1].lstrip(".") or "png"
    fig.savefig(tmp, dpi=DPI, bbox_inches="tight", format=fmt)
    plt.close(fig)
    os.replace(tmp, path)
    return path


def save_trace_figure(breakdowns, path, title="Objective during message passing"):
    """Objective components versus iteration, from a solver trace."""
    ks = np.arange(len(breakdowns))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, [b.total for b in breakdowns], label="total", lw=2)
    ax.plot(ks, [b.fidelity for b in breakdowns], label="fidelity", ls="--")
    ax.plot(ks, [b.quadratic for b in breakdowns], label="quadratic", ls="--")
    ax.plot(ks, [b.tv for b in breakdowns], label="tv", ls="--")
    ax.set_xlabel("iteration k")
    ax.set_ylabel("objective value")
    ax.set_title(title)
    ax.legend()
    ax.grid(alpha=0.3)
    return _atomic_savefig(fig, path)


def save_training_figure(reports, path, title="Training curves"):
    """Loss and validation-accuracy curves, one line per seed."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for rep in reports:
        epochs = np.arange(1, len(rep.train_losses) + 1)
        ax1.plot(epochs, rep.train_losses, alpha=0.7,
                 label=f"seed {rep.seed} train")
        ax1.plot(epochs, rep.val_losses, alpha=0.7, ls="--",
                 label=f"seed {rep.seed} val")
        ax2.plot(epochs, rep.val_accuracies, alpha=0.8,
                 label=f"seed {rep.seed}")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.grid(alpha=0.3)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("validation accuracy")
    ax2.grid(alpha=0.3)
    if len(reports) <= 4:
        ax1.legend(fontsize=8)
        ax2.legend(fontsize=8)
    fig.suptitle(title)
    return _atomic_savefig(fig, path)


def save_sweep_figure(ks, means, sds, path, title="Accuracy vs propagation steps"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(ks, means, yerr=sds, marker="o", capsize=3)
    ax.set_xlabel("propagation steps K")
    ax.set_ylabel("test accuracy")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    return _atomic_savefig(fig, path)


def save_variants_figure(rates, table, path, title="Variant accuracy"):
    """One line per variant over the perturbation rates.

    ``table`` maps variant name -> (means, sds) aligned with ``rates``.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    for variant, (means, sds) in table.items():
        ax.errorbar(rates, means, yerr=sds, marker="o", capsize=3, label=variant)
    ax.set_xlabel("perturbation rate")
    ax.set_ylabel("test accuracy")
    ax.set_title(title)
    ax.legend()
    ax.grid(alpha=0.3)
    return _atomic_savefig(fig, path)


def save_edge_norm_figure(norms, threshold, path,
                          title="Edge-difference norms"):
    """Histogram of ``||(Delta_tilde F)_i||_2`` with the sparsity threshold."""
    fig, ax = plt.subplots(figsize=(6, 4))
    if len(norms):
        ax.hist(norms, bins=60)
    ax.axvline(threshold, color="red", ls="--",
               label=f"threshold {threshold:g}")
    ax.set_xlabel("row norm of normalized node differences")
    ax.set_ylabel("edges")
    ax.set_title(title)
    ax.legend()
    return _atomic_savefig(fig, path)
