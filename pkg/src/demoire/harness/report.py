"""CSV tables and matplotlib figures for command outputs."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..errors import UnwritableOutput  # noqa: E402
from ..metrics import MetricReport  # noqa: E402

plt.rcParams.update({"font.size": 9, "axes.spines.top": False, "axes.spines.right": False, "savefig.dpi": 120})


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def write_csv(path, header: list[str], rows: list[list]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
    except OSError as exc:
        raise UnwritableOutput(f"cannot write {path}: {exc}") from exc


def metric_rows(rep: MetricReport) -> list[list]:
    rows = [[i, p, s] for i, p, s in zip(rep.ids, rep.psnr_db, rep.ssim)]
    rows.append(["mean", rep.mean_psnr, rep.mean_ssim])
    return rows


def save(fig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps the files reproducible
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_metrics(rep: MetricReport, path, title: str = "") -> None:
    """Per-image PSNR and SSIM bars."""
    fig, axes = plt.subplots(1, 2, figsize=(8, 3))
    x = np.arange(len(rep.ids))
    finite = [p if math.isfinite(p) else np.nan for p in rep.psnr_db]
    axes[0].bar(x, finite, color="0.4")
    axes[0].set_ylabel("PSNR (dB)")
    axes[1].bar(x, rep.ssim, color="0.4")
    axes[1].set_ylabel("SSIM")
    axes[1].set_ylim(min(0.0, min(rep.ssim, default=0.0)), 1.0)
    for ax in axes:
        ax.set_xlabel("image")
    if not all(math.isfinite(p) for p in rep.psnr_db):
        axes[0].text(0.5, 0.5, "identical images (PSNR = inf)", ha="center", transform=axes[0].transAxes)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    save(fig, path)


def plot_examples(rows: list[tuple[str, np.ndarray, np.ndarray, np.ndarray]], path) -> None:
    """Grid of (moire, restored, clean) triplets."""
    fig, axes = plt.subplots(len(rows), 3, figsize=(6, 2 * len(rows)), squeeze=False)
    for r, (name, moire, restored, clean) in enumerate(rows):
        for c, (img, label) in enumerate(((moire, "moire"), (restored, "restored"), (clean, "clean"))):
            ax = axes[r, c]
            ax.imshow(np.clip(img, 0, 1), interpolation="nearest")
            ax.set_xticks([])
            ax.set_yticks([])
            if r == 0:
                ax.set_title(label)
        axes[r, 0].set_ylabel(name)
    fig.tight_layout()
    save(fig, path)


def plot_loss_curve(totals: list[float], path, title: str = "training loss") -> None:
    fig, ax = plt.subplots(figsize=(5, 3))
    steps = np.arange(1, len(totals) + 1)
    ax.plot(steps, totals, lw=0.6, color="0.6", label="per step")
    if len(totals) >= 10:
        k = 10
        smooth = np.convolve(totals, np.ones(k) / k, mode="valid")
        ax.plot(steps[k - 1 :], smooth, color="k", label=f"mean of {k}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("total loss")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    save(fig, path)


def plot_ablation(settings: list[str], psnr: list[float], ssim: list[float], path, title: str) -> None:
    fig, ax1 = plt.subplots(figsize=(max(4, 0.8 * len(settings) + 2), 3))
    x = np.arange(len(settings))
    ax1.plot(x, psnr, "o-", color="k", label="PSNR")
    ax1.set_ylabel("PSNR (dB)")
    ax1.set_xticks(x)
    ax1.set_xticklabels(settings, rotation=30, ha="right")
    ax2 = ax1.twinx()
    ax2.plot(x, ssim, "s--", color="0.5", label="SSIM")
    ax2.set_ylabel("SSIM")
    ax2.spines["right"].set_visible(True)
    ax1.set_title(title)
    fig.tight_layout()
    save(fig, path)
