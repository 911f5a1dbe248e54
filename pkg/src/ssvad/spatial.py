"""Spatial stream: multi-granularity patch encoders with importance fusion.

A clip's frames are partitioned into non-overlapping patches at several
pixel resolutions (finest first), each scale is encoded independently per
frame by a stack of multi-kernel scan blocks, and the per-scale feature maps
are fused: every scale is resized onto the finest token grid and combined
with softmax importance weights computed from pooled scale summaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, stack
from .nn import Linear, Module
from .ops import resize_bilinear
from .ssm import BlockConfig, MSVSSBlock

__all__ = [
    "PatchConfig",
    "ScaleFeatures",
    "PatchEmbed",
    "patch_partition",
    "SpatialScaleEncoder",
    "ImportanceFusion",
    "SpatialStream",
]


@dataclass
class PatchConfig:
    """Patch grid geometry for the spatial stream."""

    resolutions: tuple[int, ...] = (4, 8, 16)
    embed_dim: int = 256
    frame_hw: tuple[int, int] = (256, 256)

    def __post_init__(self):
        h, w = self.frame_hw
        if list(self.resolutions) != sorted(set(self.resolutions)):
            raise ValueError("resolutions must be strictly increasing")
        for r in self.resolutions:
            if h % r or w % r:
                raise ValueError(f"patch size {r} does not divide frame {h}x{w}")

    def grid_hw(self, r: int) -> tuple[int, int]:
        return self.frame_hw[0] // r, self.frame_hw[1] // r

    def n_tokens(self, r: int) -> int:
        gh, gw = self.grid_hw(r)
        return gh * gw


@dataclass
class ScaleFeatures:
    """Encoded tokens for one scale: g is (frames, n_tokens, D)."""

    g: Tensor
    scale_index: int
    n_tokens: int

    def __post_init__(self):
        if self.g.shape[-2] != self.n_tokens:
            raise ValueError(
                f"token count {self.g.shape[-2]} != declared {self.n_tokens}")


def patch_partition(clip, r: int, embed: Tensor) -> Tensor:
    """Split frames into r x r patches and embed them linearly.

    clip: (k, H, W, C_img); embed: (r*r*C_img, C_out).  Returns
    (k, N, C_out) with N = (H/r)(W/r), patches in raster order.
    """
    clip = as_tensor(clip)
    k, h, w, c = clip.shape
    if h % r or w % r:
        raise ValueError(f"patch size {r} does not divide frame {h}x{w}")
    gh, gw = h // r, w // r
    x = clip.reshape(k, gh, r, gw, r, c)
    x = x.transpose((0, 1, 3, 2, 4, 5)).reshape(k, gh * gw, r * r * c)
    return x @ embed


class PatchEmbed(Module):
    """Learned linear patch embedding for one resolution."""

    def __init__(self, r: int, c_img: int, d_model: int,
                 rng: np.random.Generator, dtype=np.float64):
        self.r = r
        bound = 1.0 / np.sqrt(r * r * c_img)
        self.weight = Tensor(
            rng.uniform(-bound, bound, (r * r * c_img, d_model)).astype(dtype),
            requires_grad=True)
        self.bias = Tensor(np.zeros(d_model, dtype=dtype), requires_grad=True)

    def __call__(self, clip) -> Tensor:
        return patch_partition(clip, self.r, self.weight) + self.bias


class SpatialScaleEncoder(Module):
    """Per-frame encoder for one patch scale: embed + block stack."""

    def __init__(self, r: int, c_img: int, cfg: BlockConfig,
                 rng: np.random.Generator, dtype=np.float64):
        self.embed = PatchEmbed(r, c_img, cfg.d_model, rng, dtype=dtype)
        self.blocks = [MSVSSBlock(cfg, rng, dtype=dtype) for _ in range(cfg.n_blocks)]

    def __call__(self, clip, grid_hw: tuple[int, int]) -> Tensor:
        tokens = self.embed(clip)
        for blk in self.blocks:
            tokens = blk(tokens, grid_hw)
        return tokens


class ImportanceFusion(Module):
    """Softmax-weighted combination of scales on the finest token grid.

    The importance head (shared across scales) maps the mean-pooled feature
    of each scale to a scalar logit; softmax over scales gives a probability
    vector; every scale is bilinearly resized to the finest grid and summed
    with those weights.
    """

    def __init__(self, d_model: int, rng: np.random.Generator, dtype=np.float64):
        hidden = max(d_model // 4, 1)
        self.fc1 = Linear(d_model, hidden, rng, dtype=dtype)
        self.fc2 = Linear(hidden, 1, rng, dtype=dtype)

    def weights(self, pooled: list[Tensor]) -> Tensor:
        """pooled: per-scale (B, D) summaries -> (B, n_scales) probabilities."""
        logits = [self.fc2(self.fc1(p).silu()) for p in pooled]  # (B,1) each
        z = stack(logits, axis=1).reshape(pooled[0].shape[0], len(pooled))
        shift = Tensor(z.data.max(axis=1, keepdims=True))
        ez = (z - shift).exp()
        return ez / ez.sum(axis=1, keepdims=True)

    def __call__(self, features: list[Tensor], grids: list[tuple[int, int]]) -> Tensor:
        """features[i]: (B, k, N_i, D) on grid grids[i]; finest first."""
        if len(features) != 3:
            raise ValueError(f"expected exactly 3 scales, got {len(features)}")
        b, k, n1, d = features[0].shape
        g1h, g1w = grids[0]
        pooled = [f.mean(axis=(1, 2)) for f in features]  # (B, D) each
        w = self.weights(pooled)  # (B, 3)
        out = None
        for i, (f, (gh, gw)) in enumerate(zip(features, grids)):
            if (gh, gw) != (g1h, g1w):
                f = f.reshape(b * k, gh, gw, d)
                f = resize_bilinear(f, g1h, g1w)
                f = f.reshape(b, k, n1, d)
            term = f * w[:, i].reshape(b, 1, 1, 1)
            out = term if out is None else out + term
        return out


class SpatialStream(Module):
    """Full spatial branch: per-scale encoders + fusion.

    With ``multi_scale=False`` only the finest scale runs and fusion is
    bypassed (ablation baseline).
    """

    def __init__(self, patch_cfg: PatchConfig, block_cfg: BlockConfig,
                 rng: np.random.Generator, c_img: int = 3,
                 multi_scale: bool = True, dtype=np.float64):
        if len(patch_cfg.resolutions) != 3:
            raise ValueError("spatial stream requires exactly three scales")
        self.patch_cfg = patch_cfg
        self.multi_scale = multi_scale
        scales = patch_cfg.resolutions if multi_scale else patch_cfg.resolutions[:1]
        self.encoders = [
            SpatialScaleEncoder(r, c_img, block_cfg, rng, dtype=dtype)
            for r in scales
        ]
        self.fusion = (ImportanceFusion(block_cfg.d_model, rng, dtype=dtype)
                       if multi_scale else None)

    def __call__(self, clip: Tensor) -> Tensor:
        """clip: (B, k, H, W, C) -> (B, k, N_1, D)."""
        clip = as_tensor(clip)
        b, k, h, w, c = clip.shape
        frames = clip.reshape(b * k, h, w, c)
        cfgp = self.patch_cfg
        feats = []
        grids = []
        scales = cfgp.resolutions if self.multi_scale else cfgp.resolutions[:1]
        for enc, r in zip(self.encoders, scales):
            grid = cfgp.grid_hw(r)
            g = enc(frames, grid)  # (B*k, N_i, D)
            feats.append(g.reshape(b, k, cfgp.n_tokens(r), g.shape[-1]))
            grids.append(grid)
        if not self.multi_scale:
            return feats[0]
        return self.fusion(feats, grids)
