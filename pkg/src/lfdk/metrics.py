"""PSNR and SSIM, per sub-aperture image and averaged, plus dataset evaluation.

Light-field scores are the arithmetic mean of per-SAI scores (dB values are
averaged, not MSEs).  Identical inputs give infinite PSNR; reports render it
as the sentinel string "identical".  Metrics run on all color channels
jointly by default; an optional luma mode converts with ITU-R BT.601 weights
first.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .lightfield import LightField, crop_border, downsample_bilinear

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

IDENTICAL = "identical"

_BT601 = np.array([0.299, 0.587, 0.114])


def to_luma(img: np.ndarray) -> np.ndarray:
    """(3, H, W) RGB to (1, H, W) BT.601 luma; single-channel passes through."""
    if img.shape[0] == 1:
        return img
    if img.shape[0] != 3:
        raise ValueError(f"expected 1 or 3 channels, got {img.shape[0]}")
    w = _BT601.astype(img.dtype)
    return np.tensordot(w, img, axes=([0], [0]))[None]


def _unwrap(a) -> np.ndarray:
    return a.data if isinstance(a, LightField) else np.asarray(a)


def psnr(a, b, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) per image; mean over SAIs for 5D inputs.

    Identical inputs give math.inf (the "identical" sentinel in reports).
    """
    a, b = _unwrap(a), _unwrap(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 5:
        values = [psnr(a[u, v], b[u, v], peak) for u in range(a.shape[0])
                  for v in range(a.shape[1])]
        return float(np.mean(values))
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2
    g = np.exp(-((np.arange(size) - half) ** 2) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # separable window, then crop to the fully-covered interior
    m = len(kernel) // 2
    out = correlate1d(plane, kernel, axis=0, mode="constant")
    out = correlate1d(out, kernel, axis=1, mode="constant")
    return out[m:plane.shape[0] - m, m:plane.shape[1] - m]


def ssim(a, b, peak: float = 1.0) -> float:
    """Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), computed
    per channel over the valid interior and averaged; mean over SAIs for 5D
    inputs."""
    a, b = _unwrap(a), _unwrap(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 5:
        values = [ssim(a[u, v], b[u, v], peak) for u in range(a.shape[0])
                  for v in range(a.shape[1])]
        return float(np.mean(values))
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.shape[-2] < SSIM_WINDOW or a.shape[-1] < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    scores = []
    for ch in range(a.shape[0]):
        x = a[ch].astype(np.float64)
        y = b[ch].astype(np.float64)
        mx = _filter_valid(x, win)
        my = _filter_valid(y, win)
        mxx = _filter_valid(x * x, win)
        myy = _filter_valid(y * y, win)
        mxy = _filter_valid(x * y, win)
        vx = mxx - mx * mx
        vy = myy - my * my
        cov = mxy - mx * my
        num = (2 * mx * my + c1) * (2 * cov + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


@dataclass(frozen=True)
class SampleScore:
    name: str
    psnr_db: float
    ssim: float


@dataclass
class EvalReport:
    """Per-sample scores plus dataset aggregates; empty manifests are flagged."""

    samples: list[SampleScore] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def empty(self) -> bool:
        return self.count == 0

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([s.psnr_db for s in self.samples])) if self.samples else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([s.ssim for s in self.samples])) if self.samples else math.nan

    @staticmethod
    def _fmt_psnr(value: float) -> str:
        return IDENTICAL if math.isinf(value) else f"{value:.4f}"

    def to_csv(self) -> str:
        lines = ["sample,psnr_db,ssim"]
        for s in self.samples:
            lines.append(f"{s.name},{self._fmt_psnr(s.psnr_db)},{s.ssim:.6f}")
        if self.empty:
            lines.append("# empty: 0 samples scored")
        else:
            lines.append(f"mean,{self._fmt_psnr(self.mean_psnr)},{self.mean_ssim:.6f}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        lines = []
        for s in self.samples:
            lines.append(f"{s.name}: psnr={self._fmt_psnr(s.psnr_db)} dB ssim={s.ssim:.6f}")
        for name, msg in self.errors:
            lines.append(f"{name}: error: {msg}")
        if self.empty:
            lines.append("no samples scored (empty manifest)")
        else:
            lines.append(
                f"mean over {self.count} samples: psnr={self._fmt_psnr(self.mean_psnr)} dB "
                f"ssim={self.mean_ssim:.6f}"
            )
        return "\n".join(lines) + "\n"


def score_pair(truth: LightField, recon: LightField, luma: bool = False):
    """(psnr, ssim) of a reconstruction against ground truth."""
    a, b = truth.data, recon.data
    if luma:
        u, v = a.shape[:2]
        a = np.stack([[to_luma(a[i, j]) for j in range(v)] for i in range(u)])
        b = np.stack([[to_luma(b[i, j]) for j in range(v)] for i in range(u)])
    return psnr(a, b), ssim(a, b)


def evaluate(sr_fn, loader, names, scale: int, luma: bool = False,
             spatial_margin: int = 0, threads: int = 1) -> EvalReport:
    """Score a super-resolver over a dataset.

    For each name, ``loader`` returns the ground-truth LightField; the frame
    is center-cropped so its spatial dims divide the scale, downsampled, run
    through ``sr_fn`` and scored against the cropped truth.  Failures are
    recorded per sample and evaluation continues.
    """
    def run(name):
        lf = loader(name)
        if spatial_margin:
            lf = crop_border(lf, 0, spatial_margin)
        trim_h = lf.height % scale
        trim_w = lf.width % scale
        if trim_h or trim_w:
            data = lf.data[:, :, :,
                           trim_h // 2:lf.height - (trim_h - trim_h // 2),
                           trim_w // 2:lf.width - (trim_w - trim_w // 2)]
            lf = LightField(np.ascontiguousarray(data))
        lr = downsample_bilinear(lf, scale)
        recon = sr_fn(lr)
        if recon.shape != lf.shape:
            raise ValueError(f"reconstruction shape {recon.shape} != truth {lf.shape}")
        p, s = score_pair(lf, recon, luma=luma)
        return SampleScore(name=name, psnr_db=p, ssim=s)

    report = EvalReport()
    names = list(names)
    results: list = [None] * len(names)
    if threads > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(run, n): i for i, n in enumerate(names)}
            for fut, i in futures.items():
                try:
                    results[i] = fut.result()
                except Exception as exc:
                    results[i] = (names[i], str(exc))
    else:
        for i, n in enumerate(names):
            try:
                results[i] = run(n)
            except Exception as exc:
                results[i] = (n, str(exc))
    for res in results:
        if isinstance(res, SampleScore):
            report.samples.append(res)
        else:
            report.errors.append(res)
    return report
