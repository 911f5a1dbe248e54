"""Run configuration: one flat dataclass, an INI schema, strict validation.

The file format is sectioned key=value text (configparser).  Unknown
sections or keys are rejected so typos fail loudly.  Every default is
either a published training setting or a recorded implementation choice;
command-line flags override file values, and the effective configuration is
echoed into run output directories for provenance.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from pathlib import Path

from .data import SyntheticSceneSpec
from .model import ModelConfig
from .objective import LossWeights

__all__ = ["RunConfig", "ALPHA_PRESETS", "load_config", "save_config"]

ALPHA_PRESETS = {"ped2": 0.6, "avenue": 0.4, "shanghai": 0.5}


@dataclass
class RunConfig:
    """Complete run schema; see module docstring for the file format."""

    # data
    n_train_clips: int = 16
    n_test_clips: int = 8
    clip_frames: int = 80
    anomaly_onset: int = 40
    n_objects: int = 3

    # model
    resolution: int = 256
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
    dtype: str = "float32"

    # train
    lr: float = 2e-4
    lr_decay_factor: float = 0.5
    lr_decay_every: int = 20
    epochs: int = 60
    batch_size: int = 4
    lambda_m: float = 0.5
    lambda_s: float = 0.1
    lambda_g: float = 0.2
    lambda_ssim: float = 0.5
    use_motion_loss: bool = True
    use_separate_loss: bool = True
    seed: int = 0

    # score
    alpha: float = 0.6
    alpha_preset: str = ""
    normalize: str = "per_video"

    def __post_init__(self):
        if self.alpha_preset:
            if self.alpha_preset not in ALPHA_PRESETS:
                raise ValueError(
                    f"unknown alpha preset {self.alpha_preset!r}; "
                    f"choose from {sorted(ALPHA_PRESETS)}")
        if self.normalize not in ("per_video", "global"):
            raise ValueError("normalize must be per_video or global")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        if len(self.patch_resolutions) != 3 or len(self.temporal_windows) != 3:
            raise ValueError("exactly three patch scales and three windows required")
        for r in self.patch_resolutions:
            if self.resolution % r:
                raise ValueError(f"patch size {r} does not divide {self.resolution}")
        if max(self.temporal_windows) > self.k:
            raise ValueError(
                f"largest window {max(self.temporal_windows)} exceeds k={self.k}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0,1]")

    @property
    def effective_alpha(self) -> float:
        if self.alpha_preset:
            return ALPHA_PRESETS[self.alpha_preset]
        return self.alpha

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            frame_hw=(self.resolution, self.resolution),
            k=self.k,
            d_model=self.d_model,
            state_size=self.state_size,
            n_blocks=self.n_blocks,
            patch_resolutions=self.patch_resolutions,
            temporal_windows=self.temporal_windows,
            dw_kernels=self.dw_kernels,
            memory_slots=self.memory_slots,
            memory_temperature=self.memory_temperature,
            multi_scale_spatial=self.multi_scale_spatial,
            multi_temporal=self.multi_temporal,
            decompose=self.decompose,
            dtype=self.dtype,
        )

    def scene_spec(self) -> SyntheticSceneSpec:
        return SyntheticSceneSpec(
            canvas=(self.resolution, self.resolution),
            n_objects=self.n_objects,
            n_frames=self.clip_frames,
            anomaly_onset=self.anomaly_onset,
            seed=self.seed,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(lambda_m=self.lambda_m, lambda_s=self.lambda_s,
                           lambda_g=self.lambda_g, lambda_ssim=self.lambda_ssim)


_SECTIONS = {
    "data": ("n_train_clips", "n_test_clips", "clip_frames", "anomaly_onset",
             "n_objects"),
    "model": ("resolution", "k", "d_model", "state_size", "n_blocks",
              "patch_resolutions", "temporal_windows", "dw_kernels",
              "memory_slots", "memory_temperature", "multi_scale_spatial",
              "multi_temporal", "decompose", "dtype"),
    "train": ("lr", "lr_decay_factor", "lr_decay_every", "epochs", "batch_size",
              "lambda_m", "lambda_s", "lambda_g", "lambda_ssim",
              "use_motion_loss", "use_separate_loss", "seed"),
    "score": ("alpha", "alpha_preset", "normalize"),
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(name: str, raw: str):
    ftype = _FIELD_TYPES[name]
    raw = raw.strip()
    if ftype == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if ftype == "int":
        return int(raw)
    if ftype == "float":
        return float(raw)
    if ftype.startswith("tuple"):
        return tuple(int(part) for part in raw.split(",") if part.strip())
    return raw


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse an INI file into a RunConfig; unknown keys are an error."""
    parser = configparser.ConfigParser()
    path = Path(path)
    with open(path) as fh:
        parser.read_file(fh)
    values: dict = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValueError(f"{path}: unknown section [{section}]")
        allowed = _SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in allowed:
                raise ValueError(f"{path}: unknown key {key!r} in [{section}]")
            values[key] = _parse_value(key, raw)
    if overrides:
        values.update(overrides)
    return RunConfig(**values)


def save_config(cfg: RunConfig, path):
    """Serialize the effective configuration back to INI."""
    parser = configparser.ConfigParser()
    for section, keys in _SECTIONS.items():
        parser[section] = {}
        for key in keys:
            val = getattr(cfg, key)
            if isinstance(val, tuple):
                parser[section][key] = ",".join(str(v) for v in val)
            elif isinstance(val, bool):
                parser[section][key] = "true" if val else "false"
            else:
                parser[section][key] = str(val)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        parser.write(fh)
