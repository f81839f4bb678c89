"""Figures written next to the CSV reports.

All figures use the non-interactive Agg backend and are saved without the
software/date metadata so reruns produce identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

mm = 0.0393701
FULL_WIDTH = 180 * mm

style = {
    "font.size": 8,
    "axes.labelsize": 8,
    "axes.titlesize": 8,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def save_fig(fig, path, dpi=120):
    fig.savefig(path, dpi=dpi, metadata={"Software": None})
    plt.close(fig)


def _show(ax, img, title=None):
    img = np.clip(np.asarray(img), 0.0, 1.0)
    if img.shape[-1] == 1:
        ax.imshow(img[..., 0], cmap="gray", vmin=0, vmax=1, interpolation="nearest")
    else:
        ax.imshow(img, interpolation="nearest")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title)


def plot_loss(losses, path, baseline=None):
    with plt.rc_context(style):
        fig, ax = plt.subplots(figsize=(FULL_WIDTH / 2, FULL_WIDTH / 3))
        it = np.arange(1, len(losses) + 1)
        ax.plot(it, losses, lw=0.6, color="0.6", label="DSM loss")
        if len(losses) >= 20:
            w = max(len(losses) // 50, 1)
            smooth = np.convolve(losses, np.ones(w) / w, mode="valid")
            ax.plot(it[w - 1:], smooth, lw=1.2, color="C0", label=f"moving mean ({w})")
        if baseline is not None:
            ax.axhline(baseline, color="C3", ls="--", lw=0.8, label="zero-score baseline")
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        ax.legend(frameon=False)
        fig.tight_layout()
        save_fig(fig, path)


def plot_restorations(rows, path, max_rows=6):
    """Grid of (truth, observation, restored, difference) per image.

    `rows` is a list of dicts with keys ``id``, ``truth``, ``observation``,
    ``restored`` and ``psnr``.
    """
    rows = rows[:max_rows]
    if not rows:
        return
    with plt.rc_context(style):
        fig, axes = plt.subplots(len(rows), 4, figsize=(FULL_WIDTH / 1.6, 1.1 * len(rows) + 0.3), squeeze=False)
        for r, row in enumerate(rows):
            diff = 0.5 + (row["restored"] - row["truth"])
            _show(axes[r, 0], row["truth"], "ground truth" if r == 0 else None)
            _show(axes[r, 1], row["observation"], "observation" if r == 0 else None)
            _show(axes[r, 2], row["restored"], "restored" if r == 0 else None)
            _show(axes[r, 3], diff, "difference + 0.5" if r == 0 else None)
            axes[r, 0].set_ylabel(str(row["id"]))
            axes[r, 2].set_xlabel(f"{row['psnr']:.2f} dB")
        fig.tight_layout()
        save_fig(fig, path)


def plot_samples(samples, path, cols=8):
    n = len(samples)
    if n == 0:
        return
    rows = int(np.ceil(n / cols))
    cols = min(cols, n)
    with plt.rc_context(style):
        fig, axes = plt.subplots(rows, cols, figsize=(0.9 * cols, 0.9 * rows), squeeze=False)
        for k, ax in enumerate(axes.ravel()):
            if k < n:
                _show(ax, samples[k])
            else:
                ax.axis("off")
        fig.tight_layout()
        save_fig(fig, path)


def plot_sweep(sample_rows, transform_rows, path):
    """Score error against training-set size, and restoration error per transform."""
    with plt.rc_context(style):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(FULL_WIDTH, FULL_WIDTH / 3))
        if sample_rows:
            n = np.array([r["n"] for r in sample_rows], dtype=float)
            mean = np.array([r["score_error_mean"] for r in sample_rows])
            std = np.array([r["score_error_std"] for r in sample_rows])
            ax1.errorbar(n, mean, yerr=std, marker="o", ms=3, capsize=2, lw=1)
            ax1.set_xscale("log")
            ax1.set_yscale("log")
        ax1.set_xlabel("training samples n")
        ax1.set_ylabel("held-out score error")
        if transform_rows:
            labels = [f"{r['transform']}\n{r['mode']}" for r in transform_rows]
            err = [r["oracle_mae"] for r in transform_rows]
            ax2.bar(np.arange(len(err)), err, color="C0")
            ax2.set_xticks(np.arange(len(err)))
            ax2.set_xticklabels(labels)
        ax2.set_ylabel("mean |restored - posterior mean|")
        fig.tight_layout()
        save_fig(fig, path)
