"""Temporal stream: multi-window frame differencing with scan encoders.

Motion is represented by successive frame differences over several trailing
windows.  Each window's difference stack is patch-embedded on the finest
spatial grid, encoded by time-axis scan blocks, linearly resampled to the
clip's k steps, and the windows are combined with softmax attention weights
computed from pooled window summaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, stack
from .nn import Linear, Module
from .ops import resize_linear
from .spatial import PatchEmbed
from .ssm import BlockConfig, TMBlock

__all__ = [
    "MotionDifference",
    "TemporalFeatures",
    "frame_difference",
    "TemporalScaleEncoder",
    "AttentionAggregation",
    "TemporalStream",
]


@dataclass
class MotionDifference:
    """w successive frame differences: d[i] = V_{i+1} - V_i over the window."""

    d: np.ndarray
    window: int

    def __post_init__(self):
        if self.d.shape[0] != self.window:
            raise ValueError(f"difference rows {self.d.shape[0]} != window {self.window}")


@dataclass
class TemporalFeatures:
    """Aggregated temporal tokens plus the per-window encodings."""

    h: Tensor
    per_scale: list[Tensor]


def frame_difference(clip, w: int) -> MotionDifference:
    """Differences of the trailing w+1 frames: w rows of V_{t+1} - V_t.

    clip: (T, H, W, C) with T >= w+1; rows cover the last w steps.
    """
    clip = np.asarray(clip.data if isinstance(clip, Tensor) else clip)
    t = clip.shape[0]
    if w < 1:
        raise ValueError("window must be >= 1")
    if t < w + 1:
        raise ValueError(f"clip has {t} frames, need {w + 1} for window {w}")
    tail = clip[t - w - 1 :]
    return MotionDifference(d=np.diff(tail, axis=0), window=w)


class TemporalScaleEncoder(Module):
    """One window's encoder: patch embed, position table, scan stack."""

    def __init__(self, r: int, c_img: int, cfg: BlockConfig,
                 rng: np.random.Generator, max_steps: int = 64, dtype=np.float64):
        self.embed = PatchEmbed(r, c_img, cfg.d_model, rng, dtype=dtype)
        self.blocks = [TMBlock(cfg, rng, max_steps=max_steps, dtype=dtype)
                       for _ in range(cfg.n_blocks)]

    def __call__(self, diffs: Tensor) -> Tensor:
        """diffs: (B, w, H, W, C) -> (B, w, N, D)."""
        diffs = as_tensor(diffs)
        b, w, h, wd, c = diffs.shape
        tokens = self.embed(diffs.reshape(b * w, h, wd, c))
        n, d = tokens.shape[-2], tokens.shape[-1]
        tokens = tokens.reshape(b, w, n, d)
        for blk in self.blocks:
            tokens = blk(tokens)
        return tokens


class AttentionAggregation(Module):
    """Softmax-weighted combination of per-window features over k steps."""

    def __init__(self, d_model: int, rng: np.random.Generator, dtype=np.float64):
        hidden = max(d_model // 4, 1)
        self.fc1 = Linear(d_model, hidden, rng, dtype=dtype)
        self.fc2 = Linear(hidden, 1, rng, dtype=dtype)

    def weights(self, pooled: list[Tensor]) -> Tensor:
        logits = [self.fc2(self.fc1(p).silu()) for p in pooled]
        z = stack(logits, axis=1).reshape(pooled[0].shape[0], len(pooled))
        shift = Tensor(z.data.max(axis=1, keepdims=True))
        ez = (z - shift).exp()
        return ez / ez.sum(axis=1, keepdims=True)

    def __call__(self, per_scale: list[Tensor], k: int) -> Tensor:
        """per_scale[j]: (B, w_j, N, D) -> (B, k, N, D)."""
        if not per_scale:
            raise ValueError("no scales to aggregate")
        resized = [resize_linear(f, k, axis=1) for f in per_scale]
        pooled = [f.mean(axis=(1, 2)) for f in resized]
        w = self.weights(pooled)  # (B, n_scales)
        b = per_scale[0].shape[0]
        out = None
        for j, f in enumerate(resized):
            term = f * w[:, j].reshape(b, 1, 1, 1)
            out = term if out is None else out + term
        return out


class TemporalStream(Module):
    """Full temporal branch over configured frame windows.

    ``windows`` counts frames per scale; a window of w frames contributes
    w - 1 difference steps, so every window must satisfy w <= k.  With
    ``multi_window=False`` only the largest window runs and aggregation is
    bypassed (ablation baseline).
    """

    def __init__(self, windows: tuple[int, ...], r_finest: int, k: int,
                 block_cfg: BlockConfig, rng: np.random.Generator,
                 c_img: int = 3, multi_window: bool = True, dtype=np.float64):
        if len(windows) != 3:
            raise ValueError("temporal stream requires exactly three windows")
        if list(windows) != sorted(set(windows)):
            raise ValueError("windows must be strictly increasing")
        if windows[-1] > k:
            raise ValueError(f"largest window {windows[-1]} exceeds clip length {k}")
        if windows[0] < 2:
            raise ValueError("smallest window must span at least 2 frames")
        self.windows = tuple(windows)
        self.k = k
        self.multi_window = multi_window
        active = self.windows if multi_window else self.windows[-1:]
        self.encoders = [
            TemporalScaleEncoder(r_finest, c_img, block_cfg, rng,
                                 max_steps=max(k, 2), dtype=dtype)
            for _ in active
        ]
        self.aggregation = (AttentionAggregation(block_cfg.d_model, rng, dtype=dtype)
                            if multi_window else None)

    def __call__(self, clip: Tensor) -> Tensor:
        """clip: (B, k, H, W, C) observed frames -> (B, k, N_1, D)."""
        clip = as_tensor(clip)
        b, k, h, w, c = clip.shape
        active = self.windows if self.multi_window else self.windows[-1:]
        per_scale = []
        for win, enc in zip(active, self.encoders):
            # trailing `win` frames -> win-1 successive differences
            tail = clip[:, k - win :]
            d = tail[:, 1:] - tail[:, :-1]
            per_scale.append(enc(d))
        if not self.multi_window:
            return resize_linear(per_scale[0], k, axis=1)
        return self.aggregation(per_scale, k)
