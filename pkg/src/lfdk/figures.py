"""Figure rendering for the report paths.

Every CLI command that emits delimited output can render a matplotlib
figure next to it: evaluation reports get a per-sample score chart, training
logs get a loss curve, and EPI extraction renders the slice itself.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_eval_figure(report, path) -> None:
    """Per-sample PSNR and SSIM bars with the dataset mean inlined."""
    names = [s.name for s in report.samples]
    psnrs = [s.psnr_db for s in report.samples]
    ssims = [s.ssim for s in report.samples]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(max(6, 0.5 * len(names) + 2), 6),
                                   sharex=True)
    xs = range(len(names))
    finite = [p for p in psnrs if math.isfinite(p)]
    ax1.bar(xs, [p if math.isfinite(p) else 0.0 for p in psnrs], color="#336699")
    ax1.set_ylabel("PSNR (dB)")
    if finite:
        ax1.axhline(sum(finite) / len(finite), color="k", lw=0.8, ls="--")
    ax2.bar(xs, ssims, color="#996633")
    ax2.set_ylabel("SSIM")
    ax2.set_ylim(0, 1.02)
    ax2.set_xticks(list(xs))
    ax2.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
    title = "no samples" if report.empty else (
        f"{report.count} samples, mean ssim {report.mean_ssim:.4f}")
    ax1.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_loss_curve(steps, losses, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, losses, lw=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.set_title("training loss")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_epi_figure(slice2d, pair_name: str, fixed, channel: int, path) -> None:
    """Render one epipolar slice with its axis names."""
    d1, d2 = pair_name[0], pair_name[1]
    fig, ax = plt.subplots(figsize=(6, 3))
    im = ax.imshow(slice2d, cmap="gray", vmin=0.0, vmax=1.0,
                   aspect="auto", interpolation="nearest")
    ax.set_xlabel(d2)
    ax.set_ylabel(d1)
    ax.set_title(f"EPI ({d1}, {d2}) at fixed {fixed}, channel {channel}")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
