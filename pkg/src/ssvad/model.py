"""The full dual-stream predictor with ablation switches.

Pipeline: spatial stream + temporal stream over the k observed frames,
sum-and-normalize fusion, gated decomposition, per-component memory reads,
and two decoders that turn the last time slice into the predicted next
frame and the reconstructed motion field (next frame minus last observed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, as_tensor, concat, no_grad
from .fusion import Decomposer, FeatureFuse, FusedFeatures, GridDecoder, MemoryBank
from .nn import Module
from .spatial import PatchConfig, SpatialStream
from .ssm import BlockConfig
from .temporal import TemporalStream

__all__ = ["ModelConfig", "ModelOutput", "AnomalyPredictor"]


@dataclass
class ModelConfig:
    """Architecture hyperparameters (see RunConfig for the full run schema)."""

    frame_hw: tuple[int, int] = (256, 256)
    k: int = 16
    d_model: int = 256
    state_size: int = 16
    n_blocks: int = 2
    patch_resolutions: tuple[int, ...] = (4, 8, 16)
    temporal_windows: tuple[int, ...] = (4, 8, 16)
    dw_kernels: tuple[int, ...] = (1, 3, 5)
    memory_slots: int = 10
    memory_temperature: float = 0.1
    multi_scale_spatial: bool = True
    multi_temporal: bool = True
    decompose: bool = True
    dtype: str = "float64"

    def np_dtype(self):
        return np.dtype(self.dtype)

    def block_config(self) -> BlockConfig:
        return BlockConfig(d_model=self.d_model, state_size=self.state_size,
                           dw_kernels=self.dw_kernels, n_blocks=self.n_blocks)

    def patch_config(self) -> PatchConfig:
        return PatchConfig(resolutions=self.patch_resolutions,
                           embed_dim=self.d_model, frame_hw=self.frame_hw)


@dataclass
class ModelOutput:
    """Decoder outputs plus the features the losses and memory writes need."""

    v_hat: Tensor
    m_hat: Tensor
    f_app: Tensor
    f_motion: Tensor
    read_weights: dict[str, Tensor] = field(default_factory=dict)
    write_items: dict[str, np.ndarray] = field(default_factory=dict)


class AnomalyPredictor(Module):
    """Dual-stream next-frame predictor."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        dt = cfg.np_dtype()
        self.cfg = cfg
        block_cfg = cfg.block_config()
        patch_cfg = cfg.patch_config()
        r1 = cfg.patch_resolutions[0]
        self.grid1 = patch_cfg.grid_hw(r1)

        self.spatial = SpatialStream(patch_cfg, block_cfg, rng,
                                     multi_scale=cfg.multi_scale_spatial, dtype=dt)
        self.temporal = TemporalStream(cfg.temporal_windows, r1, cfg.k,
                                       block_cfg, rng,
                                       multi_window=cfg.multi_temporal, dtype=dt)
        self.fuse = FeatureFuse(cfg.d_model, dtype=dt)
        self.decomposer = Decomposer(cfg.d_model, rng, dtype=dt) if cfg.decompose else None

        d = cfg.d_model
        self.bank_common = MemoryBank(cfg.memory_slots, d, rng,
                                      temperature=cfg.memory_temperature, dtype=dt)
        self.bank_app = MemoryBank(cfg.memory_slots, d, rng,
                                   temperature=cfg.memory_temperature, dtype=dt)
        self.bank_motion = MemoryBank(cfg.memory_slots, d, rng,
                                      temperature=cfg.memory_temperature, dtype=dt)
        # each decoder sees (feature ++ prototype) for common and one task: 4D
        self.decoder_app = GridDecoder(4 * d, d, rng, squash="sigmoid",
                                       up_factor=r1, dtype=dt)
        self.decoder_motion = GridDecoder(4 * d, d, rng, squash="tanh",
                                          up_factor=r1, dtype=dt)

    def __call__(self, clip) -> ModelOutput:
        """clip: (B, k, H, W, 3) observed frames in [0,1]."""
        clip = as_tensor(clip)
        if clip.ndim == 4:
            clip = clip.reshape(1, *clip.shape)
        b, k, h, w, c = clip.shape
        if k != self.cfg.k:
            raise ValueError(f"clip has {k} frames, model expects {self.cfg.k}")
        if (h, w) != tuple(self.cfg.frame_hw):
            raise ValueError(f"frame {h}x{w} != configured {self.cfg.frame_hw}")

        g = self.spatial(clip)
        ht = self.temporal(clip)
        fused = self.fuse(g, ht)

        if self.decomposer is not None:
            parts = self.decomposer(fused)
        else:
            parts = FusedFeatures(f_fused=fused, f_common=fused,
                                  f_app=fused, f_motion=fused)

        # only the last time step feeds the decoders (one predicted frame)
        fc = parts.f_common[:, k - 1]
        fa = parts.f_app[:, k - 1]
        fm = parts.f_motion[:, k - 1]

        rc, wc = self.bank_common.read(fc)
        ra, wa = self.bank_app.read(fa)
        rm, wm = self.bank_motion.read(fm)
        fc_aug = concat([fc, rc], axis=-1)
        fa_aug = concat([fa, ra], axis=-1)
        fm_aug = concat([fm, rm], axis=-1)

        v_hat = self.decoder_app(concat([fc_aug, fa_aug], axis=-1), self.grid1)
        m_hat = self.decoder_motion(concat([fc_aug, fm_aug], axis=-1), self.grid1)

        return ModelOutput(
            v_hat=v_hat, m_hat=m_hat, f_app=fa, f_motion=fm,
            read_weights={"common": wc, "app": wa, "motion": wm},
            write_items={"common": fc.data, "app": fa.data, "motion": fm.data},
        )

    def write_memories(self, out: ModelOutput):
        """Absorb the step's features into the banks (training only)."""
        with no_grad():
            self.bank_common.write(out.write_items["common"])
            self.bank_app.write(out.write_items["app"])
            self.bank_motion.write(out.write_items["motion"])

    # ---- persistence ---------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        state = {f"param.{k}": v for k, v in self.state_dict().items()}
        state["bank.common"] = self.bank_common.state()
        state["bank.app"] = self.bank_app.state()
        state["bank.motion"] = self.bank_motion.state()
        return state

    def load_state_arrays(self, state: dict[str, np.ndarray]):
        params = {k[len("param."):]: v for k, v in state.items()
                  if k.startswith("param.")}
        self.load_state_dict(params)
        self.bank_common.load_state(state["bank.common"])
        self.bank_app.load_state(state["bank.app"])
        self.bank_motion.load_state(state["bank.motion"])
