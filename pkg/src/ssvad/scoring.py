"""Inference-time scoring: windows through the model into score CSVs.

Each k+1-frame window contributes one scored frame (the target).  Frame and
motion PSNR come from the two decoder outputs; combination and min-max
normalization happen per video by default, or over the concatenated test
set with normalize="global".
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .autodiff import Tensor, no_grad
from .checkpoint import load_checkpoint
from .data import ClipStore
from .model import AnomalyPredictor, ModelConfig
from .objective import ScoreRecord, combine_and_normalize, psnr, write_scores_csv

__all__ = ["model_config_from_meta", "load_model", "score_clip", "score_store"]


def model_config_from_meta(meta: dict) -> ModelConfig:
    c = meta["config"]
    return ModelConfig(
        frame_hw=(int(c["resolution"]), int(c["resolution"])),
        k=int(c["k"]),
        d_model=int(c["d_model"]),
        state_size=int(c["state_size"]),
        n_blocks=int(c["n_blocks"]),
        patch_resolutions=tuple(c["patch_resolutions"]),
        temporal_windows=tuple(c["temporal_windows"]),
        dw_kernels=tuple(c["dw_kernels"]),
        memory_slots=int(c["memory_slots"]),
        memory_temperature=float(c["memory_temperature"]),
        multi_scale_spatial=bool(c["multi_scale_spatial"]),
        multi_temporal=bool(c["multi_temporal"]),
        decompose=bool(c["decompose"]),
        dtype=str(c["dtype"]),
    )


def load_model(ckpt_path) -> tuple[AnomalyPredictor, dict]:
    """Rebuild the model a checkpoint describes and load its state."""
    arrays, meta = load_checkpoint(ckpt_path)
    cfg = model_config_from_meta(meta)
    model = AnomalyPredictor(cfg, np.random.default_rng(int(meta["config"]["seed"])))
    model.load_state_arrays({k: v for k, v in arrays.items()
                             if k.startswith(("param.", "bank."))})
    return model, meta


def score_clip(model: AnomalyPredictor, frames: np.ndarray,
               batch_size: int = 8) -> list[ScoreRecord]:
    """PSNR records for every scorable frame of one clip (no normalization)."""
    k = model.cfg.k
    h, w = model.cfg.frame_hw
    if frames.shape[1] != h or frames.shape[2] != w:
        raise ValueError(
            f"clip resolution {frames.shape[1]}x{frames.shape[2]} does not "
            f"match checkpoint {h}x{w}")
    t_total = frames.shape[0]
    if t_total < k + 1:
        raise ValueError(f"clip has {t_total} frames, needs {k + 1}")
    np_dtype = model.cfg.np_dtype()
    starts = list(range(t_total - k))
    records = []
    with no_grad():
        for lo in range(0, len(starts), batch_size):
            chunk = starts[lo : lo + batch_size]
            inputs = np.stack([frames[s : s + k] for s in chunk]).astype(np_dtype)
            targets = np.stack([frames[s + k] for s in chunk]).astype(np_dtype)
            motion = targets - inputs[:, -1]
            out = model(Tensor(inputs))
            for bi, s in enumerate(chunk):
                records.append(ScoreRecord(
                    frame_index=s + k,
                    psnr_frame=psnr(out.v_hat.data[bi], targets[bi]),
                    psnr_motion=psnr(out.m_hat.data[bi], motion[bi],
                                     max_val=2.0),
                ))
    return records


def score_store(model: AnomalyPredictor, store: ClipStore, alpha: float,
                out_dir, names: list[str] | None = None,
                normalize: str = "per_video",
                ) -> dict[str, list[ScoreRecord]]:
    """Score clips and write one canonical CSV per clip into out_dir."""
    if names is None:
        names = [n for n in store.clip_names() if n.startswith("test")]
        if not names:
            names = store.clip_names()
    out_dir = Path(out_dir)
    raw: dict[str, list[ScoreRecord]] = {}
    for name in names:
        raw[name] = score_clip(model, store.load_frames(name))

    scored: dict[str, list[ScoreRecord]] = {}
    if normalize == "per_video":
        for name, recs in raw.items():
            scored[name] = combine_and_normalize(recs, alpha)
    elif normalize == "global":
        flat = [r for recs in raw.values() for r in recs]
        normed = combine_and_normalize(flat, alpha)
        pos = 0
        for name, recs in raw.items():
            scored[name] = normed[pos : pos + len(recs)]
            pos += len(recs)
    else:
        raise ValueError(f"unknown normalize mode {normalize!r}")

    for name, recs in scored.items():
        write_scores_csv(recs, out_dir / f"{name}.csv")
    return scored
