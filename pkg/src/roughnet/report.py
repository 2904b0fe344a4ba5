"""Matplotlib figures for the ``report`` command, written as PNG files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from roughnet.pricer.params import PARAM_NAMES  # noqa: E402

DPI = 120
LABELS = {"rho": r"$\rho$", "v0": r"$V_0$", "kappa": r"$\kappa$", "theta": r"$\theta$", "nu": r"$\nu$",
          "H": r"$H$"}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=DPI, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def correlation_figure(before, after, path):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.4))
    for ax, mat, title in zip(axes, (before, after), ("scaled features", "after ZCA whitening")):
        im = ax.imshow(mat, vmin=-1, vmax=1, cmap="coolwarm")
        ax.set_title(title)
        ax.set_xlabel("feature")
        ax.set_ylabel("feature")
    fig.colorbar(im, ax=axes, shrink=0.8, label="correlation")
    return _save(fig, path)


def history_figure(history, path):
    epochs = np.arange(1, len(history) + 1)
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(10, 3.8))
    a1.plot(epochs, history.train_acc, label="train")
    a1.plot(epochs, history.val_acc, label="validation")
    a1.set_xlabel("epoch")
    a1.set_ylabel("box-width accuracy")
    a1.legend(frameon=False)
    a2.semilogy(epochs, history.train_loss, label="train")
    a2.semilogy(epochs, history.val_loss, label="validation")
    a2.set_xlabel("epoch")
    a2.set_ylabel("MSLE loss")
    a2.legend(frameon=False)
    return _save(fig, path)


def error_scatter_figure(labels, row_errors, path, title=None):
    """Per-row squared log error of each parameter against its true value."""
    fig, axes = plt.subplots(2, 3, figsize=(11, 6.2))
    for j, ax in enumerate(axes.ravel()):
        err = np.maximum(row_errors[:, j], 1e-16)
        ax.scatter(labels[:, j], err, s=4, alpha=0.5, lw=0)
        ax.set_yscale("log")
        ax.set_xlabel(LABELS[PARAM_NAMES[j]])
        ax.set_title(f"mean {row_errors[:, j].mean():.2e}", fontsize=9)
    axes[0, 0].set_ylabel("squared log error")
    axes[1, 0].set_ylabel("squared log error")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def heatmap_figure(hm, path):
    fig, ax = plt.subplots(figsize=(4.6, 5.2))
    im = ax.imshow(hm.values, cmap="Reds", vmin=0, aspect="auto")
    ax.set_xticks(range(len(hm.grid.maturities)), [f"{t:g}" for t in hm.grid.maturities])
    ax.set_yticks(range(len(hm.grid.strikes)), [f"{k:g}" for k in hm.grid.strikes])
    ax.set_xlabel("maturity T")
    ax.set_ylabel("moneyness K")
    ax.set_title(f"{hm.method}: {hm.output}")
    fig.colorbar(im, ax=ax, label="mean |attribution|")
    return _save(fig, path)
