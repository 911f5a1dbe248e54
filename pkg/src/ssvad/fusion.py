"""Feature fusion, gated decomposition, memory banks, and decoders.

The two stream outputs are summed and layer-normalized, split by a learned
sigmoid gate into a common component and a residual, and the residual is
projected into appearance and motion features.  Each component queries its
own memory bank of prototype rows; the retrieved prototype is concatenated
back onto the feature before decoding.  Two convolutional decoders map the
token grid to a predicted next frame and a reconstructed motion field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, no_grad
from .nn import Conv2d, LayerNorm, Mlp, Module
from .ops import upsample2_nearest

__all__ = [
    "FusedFeatures",
    "Reconstruction",
    "FeatureFuse",
    "Decomposer",
    "MemoryBank",
    "GridDecoder",
]


@dataclass
class FusedFeatures:
    """The four feature tensors of the decomposition stage (same shape)."""

    f_fused: Tensor
    f_common: Tensor
    f_app: Tensor
    f_motion: Tensor


@dataclass
class Reconstruction:
    """Decoder outputs: v_hat in [0,1], m_hat in [-1,1], both (..,H,W,3)."""

    v_hat: Tensor
    m_hat: Tensor


class FeatureFuse(Module):
    """Elementwise sum of the streams followed by channel layer norm."""

    def __init__(self, d_model: int, dtype=np.float64):
        self.norm = LayerNorm(d_model, dtype=dtype)

    def __call__(self, g_spatial: Tensor, h_temporal: Tensor) -> Tensor:
        g_spatial = as_tensor(g_spatial)
        h_temporal = as_tensor(h_temporal)
        if g_spatial.shape != h_temporal.shape:
            raise ValueError(
                f"stream shapes differ: {g_spatial.shape} vs {h_temporal.shape}")
        return self.norm(g_spatial + h_temporal)


class Decomposer(Module):
    """Sigmoid-gated split into common + task-specific components.

    gate = sigmoid(mlp_common(f)); f_common = gate * f; the residual
    f - f_common feeds two projections for appearance and motion.  The split
    is exact: f_common + residual == f.
    """

    def __init__(self, d_model: int, rng: np.random.Generator, dtype=np.float64):
        hidden = max(d_model // 2, 1)
        self.mlp_common = Mlp(d_model, hidden, d_model, rng, dtype=dtype)
        self.mlp_app = Mlp(d_model, hidden, d_model, rng, dtype=dtype)
        self.mlp_motion = Mlp(d_model, hidden, d_model, rng, dtype=dtype)

    def __call__(self, f_fused: Tensor) -> FusedFeatures:
        gate = self.mlp_common(f_fused).sigmoid()
        f_common = gate * f_fused
        residual = f_fused - f_common
        return FusedFeatures(
            f_fused=f_fused,
            f_common=f_common,
            f_app=self.mlp_app(residual),
            f_motion=self.mlp_motion(residual),
        )


class MemoryBank(Module):
    """Fixed-size bank of unit-norm prototype rows.

    Reads are pure and differentiable with respect to the query: softmax
    over cosine similarities at a fixed temperature gives convex weights
    over the rows.  Writes are explicit state updates (training only): each
    row absorbs a similarity-weighted sum of the written items and is
    re-normalized.  Rows are not gradient-trained.
    """

    def __init__(self, m: int, d: int, rng: np.random.Generator,
                 temperature: float = 0.1, dtype=np.float64):
        slots = rng.normal(size=(m, d)).astype(dtype)
        slots /= np.linalg.norm(slots, axis=1, keepdims=True)
        self.slots = Tensor(slots)  # state, not a trainable parameter
        self.temperature = float(temperature)
        self.eps = 1e-8

    @property
    def m(self) -> int:
        return self.slots.shape[0]

    def _similarity(self, q: Tensor) -> Tensor:
        qn = q / ((q * q).sum(axis=-1, keepdims=True) + self.eps).sqrt()
        s = self.slots.data
        sn = s / (np.linalg.norm(s, axis=1, keepdims=True) + self.eps)
        return (qn @ Tensor(sn.T)) * (1.0 / self.temperature)

    def read(self, query: Tensor) -> tuple[Tensor, Tensor]:
        """query (..., D) -> retrieved (..., D), weights (..., M)."""
        query = as_tensor(query)
        sim = self._similarity(query)
        shift = Tensor(sim.data.max(axis=-1, keepdims=True))
        e = (sim - shift).exp()
        w = e / e.sum(axis=-1, keepdims=True)
        retrieved = w @ self.slots
        return retrieved, w

    def write(self, items: np.ndarray):
        """Absorb a batch of D-vectors into the rows (state update)."""
        items = np.asarray(items.data if isinstance(items, Tensor) else items)
        items = items.reshape(-1, self.slots.shape[1])
        if items.shape[0] == 0:
            return
        with no_grad():
            inorm = items / (np.linalg.norm(items, axis=1, keepdims=True) + self.eps)
            s = self.slots.data
            sn = s / (np.linalg.norm(s, axis=1, keepdims=True) + self.eps)
            sim = (inorm @ sn.T) / self.temperature  # (n, M)
            # per-slot softmax over the batch axis
            sim = sim - sim.max(axis=0, keepdims=True)
            e = np.exp(sim)
            assign = e / e.sum(axis=0, keepdims=True)
            updated = s + assign.T @ items
            updated /= np.linalg.norm(updated, axis=1, keepdims=True) + self.eps
            self.slots = Tensor(updated)

    def state(self) -> np.ndarray:
        return self.slots.data.copy()

    def load_state(self, arr: np.ndarray):
        if arr.shape != self.slots.shape:
            raise ValueError(f"bank shape {arr.shape} != {self.slots.shape}")
        self.slots = Tensor(np.asarray(arr, dtype=self.slots.dtype).copy())


class GridDecoder(Module):
    """Token grid to full-resolution image through conv stages.

    Four conv stages; the first log2(up_factor) of them each upsample 2x,
    undoing the finest patch stride (default 4x), then a 3-channel head.
    ``squash`` picks the output range: "sigmoid" for [0,1] frames, "tanh"
    for [-1,1] motion fields.
    """

    def __init__(self, c_in: int, d_model: int, rng: np.random.Generator,
                 squash: str = "sigmoid", up_factor: int = 4, dtype=np.float64):
        n_up = int(round(np.log2(up_factor)))
        if 2**n_up != up_factor or not 1 <= n_up <= 4:
            raise ValueError(f"up_factor must be 2, 4, 8, or 16; got {up_factor}")
        self.n_up = n_up
        c1, c2, c3 = d_model, max(d_model // 2, 4), max(d_model // 4, 4)
        self.stages = [
            Conv2d(c_in, c1, 3, rng, dtype=dtype),
            Conv2d(c1, c2, 3, rng, dtype=dtype),
            Conv2d(c2, c3, 3, rng, dtype=dtype),
            Conv2d(c3, c3, 3, rng, dtype=dtype),
        ]
        self.head = Conv2d(c3, 3, 3, rng, dtype=dtype)
        if squash not in ("sigmoid", "tanh"):
            raise ValueError(f"unknown squash {squash!r}")
        self.squash = squash

    def __call__(self, tokens: Tensor, grid_hw: tuple[int, int]) -> Tensor:
        """tokens (B, N, C) on grid_hw -> (B, up*gh, up*gw, 3)."""
        tokens = as_tensor(tokens)
        b, n, c = tokens.shape
        gh, gw = grid_hw
        if gh * gw != n:
            raise ValueError(f"grid {gh}x{gw} does not cover {n} tokens")
        x = tokens.reshape(b, gh, gw, c)
        for i, conv in enumerate(self.stages):
            x = conv(x).silu()
            if i < self.n_up:
                x = upsample2_nearest(x)
        out = self.head(x)
        return out.sigmoid() if self.squash == "sigmoid" else out.tanh()
