"""Training losses and the PSNR-based anomaly scoring pipeline.

Losses are means over elements (not sums) so the configured weights keep
their meaning across resolutions.  Scoring converts per-frame reconstruction
errors to PSNR, blends frame and motion PSNR with a mixing coefficient, and
min-max normalizes over a score sequence; the anomaly score is the
complement of the normalized quality.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .autodiff import Tensor, as_tensor
from .ops import dwconv2d

__all__ = [
    "LossWeights",
    "ScoreRecord",
    "ssim",
    "loss_frame",
    "loss_motion",
    "loss_separate",
    "loss_total",
    "psnr",
    "combine_and_normalize",
    "write_scores_csv",
    "read_scores_csv",
]


@dataclass
class LossWeights:
    """Weights of the three-term objective and its inner terms."""

    lambda_m: float = 0.5
    lambda_s: float = 0.1
    lambda_g: float = 0.2
    lambda_ssim: float = 0.5

    def __post_init__(self):
        for name in ("lambda_m", "lambda_s", "lambda_g", "lambda_ssim"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class ScoreRecord:
    """Per-frame scoring row; combined/anomaly fields are filled later."""

    frame_index: int
    psnr_frame: float
    psnr_motion: float
    psnr_combined: float | None = None
    anomaly_score: float | None = None
    label: int | None = None


def _gaussian_window(size: int, sigma: float, channels: int, dtype) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    k2 = np.outer(g, g)
    k2 /= k2.sum()
    return np.repeat(k2[:, :, None], channels, axis=2).astype(dtype)


def ssim(x: Tensor, y: Tensor, data_range: float = 1.0, window: int = 11,
         sigma: float = 1.5) -> Tensor:
    """Mean structural similarity over valid Gaussian windows.

    x, y: (H,W,C) or (B,H,W,C).  Differentiable; returns a scalar Tensor.
    Raises if the image is smaller than the window.
    """
    x = as_tensor(x)
    y = as_tensor(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim == 3:
        x = x.reshape(1, *x.shape)
        y = y.reshape(1, *y.shape)
    _, h, w, c = x.shape
    if h < window or w < window:
        raise ValueError(f"image {h}x{w} smaller than SSIM window {window}")
    kern = Tensor(_gaussian_window(window, sigma, c, x.dtype))

    def smooth(t):
        return dwconv2d(t, kern, padding="valid")

    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_x = smooth(x)
    mu_y = smooth(y)
    var_x = smooth(x * x) - mu_x * mu_x
    var_y = smooth(y * y) - mu_y * mu_y
    cov = smooth(x * y) - mu_x * mu_y
    num = (mu_x * mu_y * 2.0 + c1) * (cov * 2.0 + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return (num / den).mean()


def loss_frame(v_hat, v, lambda_g: float = 0.2) -> Tensor:
    """Mean squared pixel error + weighted L1 of spatial-gradient error.

    Gradients are forward differences along both image axes; their absolute
    differences are pooled into one mean so the term is resolution-free.
    """
    v_hat = as_tensor(v_hat)
    v = as_tensor(v)
    if v_hat.shape != v.shape:
        raise ValueError(f"shape mismatch: {v_hat.shape} vs {v.shape}")
    mse = ((v_hat - v) ** 2).mean()
    if lambda_g == 0.0:
        return mse
    nd = v.ndim
    ax_h, ax_w = nd - 3, nd - 2

    def fdiff(t, axis):
        n = t.shape[axis]
        head = [slice(None)] * axis
        return t[tuple(head + [slice(1, n)])] - t[tuple(head + [slice(0, n - 1)])]

    gh = (fdiff(v_hat, ax_h) - fdiff(v, ax_h)).abs()
    gw = (fdiff(v_hat, ax_w) - fdiff(v, ax_w)).abs()
    grad_l1 = (gh.sum() + gw.sum()) * (1.0 / (gh.size + gw.size))
    return mse + grad_l1 * lambda_g


def loss_motion(m_hat, m, lambda_ssim: float = 0.5, data_range: float = 2.0) -> Tensor:
    """Mean squared error + weighted structural dissimilarity (1 - SSIM)."""
    m_hat = as_tensor(m_hat)
    m = as_tensor(m)
    if m_hat.shape != m.shape:
        raise ValueError(f"shape mismatch: {m_hat.shape} vs {m.shape}")
    mse = ((m_hat - m) ** 2).mean()
    if lambda_ssim == 0.0:
        return mse
    return mse + (1.0 - ssim(m_hat, m, data_range=data_range)) * lambda_ssim


def loss_separate(f_app, f_motion, eps: float = 1e-8) -> Tensor:
    """Pushes appearance and motion features apart.

    Treating the inputs as rows of D-vectors: negative mean row-wise cosine
    similarity plus the mean squared pairwise cosine (the normalized
    Frobenius cross term).  Bounded below by -1.
    """
    a = as_tensor(f_app)
    b = as_tensor(f_motion)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a.shape[-1]
    a = a.reshape(-1, d)
    b = b.reshape(-1, d)
    an = a / ((a * a).sum(axis=-1, keepdims=True) + eps).sqrt()
    bn = b / ((b * b).sum(axis=-1, keepdims=True) + eps).sqrt()
    cos_rows = (an * bn).sum(axis=-1)
    cross = an @ bn.transpose((1, 0))
    return -cos_rows.mean() + (cross * cross).mean()


def loss_total(l_frame, l_motion, l_separate, weights: LossWeights,
               use_motion: bool = True, use_separate: bool = True) -> Tensor:
    """Weighted sum of the three terms; flags drop terms for ablations."""
    total = as_tensor(l_frame)
    if use_motion:
        total = total + as_tensor(l_motion) * weights.lambda_m
    if use_separate:
        total = total + as_tensor(l_separate) * weights.lambda_s
    return total


def psnr(x_hat, x, max_val: float = 1.0, ceiling: float = 60.0,
         mse_floor: float = 1e-10) -> float:
    """Peak signal-to-noise ratio in dB; near-zero error returns the ceiling."""
    xh = np.asarray(x_hat.data if isinstance(x_hat, Tensor) else x_hat, dtype=np.float64)
    xr = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    if xh.shape != xr.shape:
        raise ValueError(f"shape mismatch: {xh.shape} vs {xr.shape}")
    mse = float(np.mean((xh - xr) ** 2))
    if mse < mse_floor:
        return float(ceiling)
    return float(10.0 * np.log10(max_val * max_val / mse))


def combine_and_normalize(records: list[ScoreRecord], alpha: float) -> list[ScoreRecord]:
    """Blend frame/motion PSNR and min-max normalize over the sequence.

    combined = alpha * frame + (1 - alpha) * motion; the normalized quality
    s in [0,1] maps to anomaly 1 - s.  A constant combined sequence yields
    anomaly 0.5 everywhere.  Returns new records; the input is untouched.
    """
    if not records:
        raise ValueError("no records to score")
    combined = np.array([alpha * r.psnr_frame + (1.0 - alpha) * r.psnr_motion
                         for r in records], dtype=np.float64)
    lo, hi = combined.min(), combined.max()
    if hi - lo < 1e-12:
        anomaly = np.full_like(combined, 0.5)
    else:
        anomaly = 1.0 - (combined - lo) / (hi - lo)
    return [replace(r, psnr_combined=float(cb), anomaly_score=float(an))
            for r, cb, an in zip(records, combined, anomaly)]


_CSV_HEADER = ["frame_index", "psnr_frame", "psnr_motion", "psnr_combined",
               "anomaly_score"]


def write_scores_csv(records: list[ScoreRecord], path):
    """Emit scored records in the canonical CSV layout (6 decimals)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(_CSV_HEADER)
        for r in records:
            if r.psnr_combined is None or r.anomaly_score is None:
                raise ValueError(f"frame {r.frame_index}: record not normalized")
            wr.writerow([
                r.frame_index,
                f"{r.psnr_frame:.6f}",
                f"{r.psnr_motion:.6f}",
                f"{r.psnr_combined:.6f}",
                f"{r.anomaly_score:.6f}",
            ])


def read_scores_csv(path) -> list[ScoreRecord]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != _CSV_HEADER:
            raise ValueError(f"unexpected scores header: {header}")
        out = []
        for row in rd:
            out.append(ScoreRecord(
                frame_index=int(row[0]),
                psnr_frame=float(row[1]),
                psnr_motion=float(row[2]),
                psnr_combined=float(row[3]),
                anomaly_score=float(row[4]),
            ))
    return out
