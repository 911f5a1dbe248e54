"""Frame-level AUC and efficiency profiling (params, FLOPs, throughput).

The AUC is the tie-aware Mann-Whitney statistic (equal to trapezoidal ROC
integration over all thresholds).  FLOPs are analytic multiply-add counts:
every multiply-accumulate is 2 FLOPs; matmuls, convolutions, the scan, and
memory addressing are counted; elementwise activations and normalizations
are excluded.  The scan costs 2*L*D*S*c_scan with c_scan = 5 per-cell
multiply-accumulate equivalents (decay, two gate products, state update,
readout).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import no_grad
from .model import AnomalyPredictor, ModelConfig

__all__ = [
    "EvalReport",
    "ProfileReport",
    "roc_auc",
    "count_params",
    "scan_flops",
    "estimate_flops",
    "measure_fps",
    "write_report",
]

C_SCAN = 5  # MAC-equivalents per scan cell (t, d, s)


@dataclass
class EvalReport:
    auc: float
    n_frames: int
    n_anomalous: int

    def as_kv(self) -> dict[str, float]:
        return {"auc": self.auc, "n_frames": self.n_frames,
                "n_anomalous": self.n_anomalous}


@dataclass
class ProfileReport:
    params_m: float
    flops_g: float
    fps_mean: float
    fps_std: float

    def as_kv(self) -> dict[str, float]:
        return {"params_m": self.params_m, "flops_g": self.flops_g,
                "fps_mean": self.fps_mean, "fps_std": self.fps_std}


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve; ties contribute one half.

    Requires both classes present.  Equals the probability that a random
    positive outscores a random negative, with ties counted 0.5.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos + n_neg != len(y):
        raise ValueError("labels must be 0/1")
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: labels contain a single class")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    i = 0
    while i < len(s):
        j = i
        while j < len(s) and s[order[j]] == s[order[i]]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j + 1)  # average 1-based rank
        i = j
    rank_sum_pos = ranks[y == 1].sum()
    return float((rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def count_params(model) -> int:
    """Total trainable elements (memory banks are state, not parameters)."""
    return model.n_params()


# ---- analytic FLOP counting --------------------------------------------------


def _linear(d_in: int, d_out: int, tokens: int) -> float:
    return 2.0 * d_in * d_out * tokens


def _conv2d(k: int, c_in: int, c_out: int, h: int, w: int) -> float:
    return 2.0 * k * k * c_in * c_out * h * w


def _dwconv2d(k: int, c: int, h: int, w: int) -> float:
    return 2.0 * k * k * c * h * w


def scan_flops(length: int, d: int, s: int) -> float:
    """Cost of one selective scan over a length-`length` sequence."""
    return 2.0 * length * d * s * C_SCAN


def _vssb_flops(n_tokens: int, grid, cfg_d: int, cfg_s: int, expand: int) -> float:
    gh, gw = grid
    inner = expand * cfg_d
    total = _linear(cfg_d, inner, n_tokens)          # expand
    total += _linear(cfg_d, inner, n_tokens)         # gate
    total += _dwconv2d(3, inner, gh, gw)             # grid conv
    total += scan_flops(n_tokens, inner, cfg_s)      # raster scan
    total += n_tokens * inner * 2.0                  # multiplicative gate
    total += _linear(inner, cfg_d, n_tokens)         # project
    return total


def estimate_flops(model: AnomalyPredictor, input_shape=None) -> dict[str, float]:
    """Per-component FLOPs of one clip forward (batch 1).

    input_shape, when given, must equal (k, H, W, 3) from the model config;
    anything else is a static-shape error.  Returns a dict of component
    totals plus the grand total under "total"; values are raw FLOPs.
    """
    cfg: ModelConfig = model.cfg
    h, w = cfg.frame_hw
    k = cfg.k
    if input_shape is not None and tuple(input_shape) != (k, h, w, 3):
        raise ValueError(
            f"input shape {tuple(input_shape)} does not match config {(k, h, w, 3)}")
    d = cfg.d_model
    s = cfg.state_size
    expand = cfg.block_config().expand
    r1 = cfg.patch_resolutions[0]
    n1 = (h // r1) * (w // r1)
    grid1 = (h // r1, w // r1)
    out: dict[str, float] = {}

    spatial = 0.0
    scales = cfg.patch_resolutions if cfg.multi_scale_spatial else cfg.patch_resolutions[:1]
    for r in scales:
        gh, gw = h // r, w // r
        n = gh * gw
        mixer = sum(_dwconv2d(kk, d, gh, gw) for kk in cfg.dw_kernels)
        per_frame = _linear(r * r * 3, d, n) + cfg.n_blocks * (
            mixer + _vssb_flops(n, (gh, gw), d, s, expand))
        spatial += k * per_frame
    if cfg.multi_scale_spatial:
        spatial += 3 * (_linear(d, max(d // 4, 1), 1) + _linear(max(d // 4, 1), 1, 1))
    out["spatial"] = spatial

    temporal = 0.0
    windows = cfg.temporal_windows if cfg.multi_temporal else cfg.temporal_windows[-1:]
    for win in windows:
        steps = win - 1
        per = _linear(r1 * r1 * 3, d, n1) * steps  # embed each diff frame
        per_block = 2 * _linear(d, d, steps * n1)  # in/out channel mixing
        per_block += n1 * scan_flops(steps, d, s)  # per-token time scan
        per += cfg.n_blocks * per_block
        temporal += per
    if cfg.multi_temporal:
        temporal += 3 * (_linear(d, max(d // 4, 1), 1) + _linear(max(d // 4, 1), 1, 1))
    out["temporal"] = temporal

    if cfg.decompose:
        hidden = max(d // 2, 1)
        mlp = _linear(d, hidden, k * n1) + _linear(hidden, d, k * n1)
        out["decompose"] = 3 * mlp
    else:
        out["decompose"] = 0.0

    m = cfg.memory_slots
    out["memory"] = 3 * 2 * _linear(d, m, n1)  # similarity + retrieval per bank

    def decoder_flops(c_in: int) -> float:
        stages = [(c_in, d), (d, max(d // 2, 4)),
                  (max(d // 2, 4), max(d // 4, 4)),
                  (max(d // 4, 4), max(d // 4, 4))]
        n_up = int(round(np.log2(r1)))
        gh, gw = grid1
        total = 0.0
        for i, (ci, co) in enumerate(stages):
            total += _conv2d(3, ci, co, gh, gw)
            if i < n_up:
                gh, gw = gh * 2, gw * 2
        total += _conv2d(3, stages[-1][1], 3, gh, gw)
        return total

    out["decoders"] = 2 * decoder_flops(4 * d)
    out["total"] = sum(out.values())
    return out


def measure_fps(model: AnomalyPredictor, windows: list[np.ndarray],
                n_warmup: int = 2, n_timed: int = 8, repeats: int = 3,
                ) -> tuple[float, float]:
    """Frames scored per second on the inference path; (mean, std) over repeats.

    ``windows`` are (k, H, W, 3) observed-frame arrays; each forward scores
    one frame.
    """
    if n_timed < 1:
        raise ValueError("n_timed must be >= 1")
    if not windows:
        raise ValueError("no windows supplied")
    batch = [windows[i % len(windows)] for i in range(max(n_warmup, n_timed))]
    with no_grad():
        for i in range(n_warmup):
            model(batch[i][None])
        rates = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            for i in range(n_timed):
                model(batch[i][None])
            dt = time.perf_counter() - t0
            rates.append(n_timed / dt)
    rates = np.asarray(rates)
    return float(rates.mean()), float(rates.std())


def write_report(kv: dict[str, float], out_dir, stem: str):
    """Emit <stem>.txt (human) and <stem>.kv (machine key=value lines)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for key, val in kv.items():
        if isinstance(val, float):
            lines.append(f"{key}={val:.6f}")
        else:
            lines.append(f"{key}={val}")
    (out_dir / f"{stem}.kv").write_text("\n".join(lines) + "\n")
    human = [f"{stem} report", "-" * 24]
    human += [ln.replace("=", ": ", 1) for ln in lines]
    human.append("")
    human.append("conventions: FLOPs = 2 x multiply-accumulate; scan cost "
                 f"2*L*D*S*{C_SCAN}; activations/normalizations excluded.")
    (out_dir / f"{stem}.txt").write_text("\n".join(human) + "\n")
    return out_dir / f"{stem}.kv"
