"""Training loop: batching, schedule, loss logging, checkpointing, resume.

Reproducibility scheme: the window order for epoch e is a shuffle drawn
from a generator seeded with (seed * 1000 + e), so a resumed run can
reconstruct the exact batch sequence from the step counter alone; no RNG
state needs to be serialized.  Together with single-threaded numpy this
makes fixed-seed loss logs byte-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, save_config
from .data import ClipStore
from .model import AnomalyPredictor
from .nn import Adam
from .objective import loss_frame, loss_motion, loss_separate, loss_total

__all__ = ["TrainResult", "build_model", "train"]


@dataclass
class TrainResult:
    steps: int
    epochs: int
    final_loss: float
    log_path: Path
    ckpt_path: Path


def build_model(cfg: RunConfig) -> AnomalyPredictor:
    rng = np.random.default_rng(cfg.seed)
    return AnomalyPredictor(cfg.model_config(), rng)


def _load_training_windows(store: ClipStore, k: int) -> tuple[list[np.ndarray], list[tuple[int, int]]]:
    """All train-clip frame stacks plus (clip_idx, start) window index pairs."""
    names = [n for n in store.clip_names() if n.startswith("train")]
    if not names:
        names = store.clip_names()
    if not names:
        raise FileNotFoundError(f"no clips under {store.root}")
    clips = []
    index = []
    for ci, name in enumerate(names):
        frames = store.load_frames(name)
        if frames.shape[0] < k + 1:
            continue
        clips.append(frames)
        for start in range(frames.shape[0] - k):
            index.append((ci, start))
    if not index:
        raise ValueError(f"no usable windows of {k + 1} frames under {store.root}")
    return clips, index


def _batch_arrays(clips, index, picks, k, np_dtype):
    inputs = np.stack([clips[ci][s : s + k] for ci, s in picks]).astype(np_dtype)
    targets = np.stack([clips[ci][s + k] for ci, s in picks]).astype(np_dtype)
    motion = targets - inputs[:, -1]
    return inputs, targets, motion


def train(cfg: RunConfig, store: ClipStore, out_dir, resume_from=None,
          max_steps: int | None = None, log_every: int = 0) -> TrainResult:
    """Train on the store's normal clips; emit loss log + final checkpoint.

    resume_from: checkpoint path to continue; the schedule resumes at the
    recorded step and reproduces the uninterrupted batch sequence.
    max_steps: optional hard cap on total optimizer steps (testing hook).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_dir / "config.ini")

    model = build_model(cfg)
    opt = Adam(model.parameters(), lr=cfg.lr)
    np_dtype = np.dtype(cfg.dtype)
    weights = cfg.loss_weights()

    clips, index = _load_training_windows(store, cfg.k)
    n_windows = len(index)
    bs = min(cfg.batch_size, n_windows)
    steps_per_epoch = (n_windows + bs - 1) // bs

    start_step = 0
    if resume_from is not None:
        arrays, meta = load_checkpoint(resume_from)
        state = {k: v for k, v in arrays.items()}
        model.load_state_arrays({k: v for k, v in state.items()
                                 if k.startswith(("param.", "bank."))})
        opt.load_state_arrays({k: v for k, v in state.items()
                               if k.startswith("adam.")})
        start_step = int(meta["step"])

    total_steps = steps_per_epoch * cfg.epochs
    if max_steps is not None:
        total_steps = min(total_steps, max_steps)

    log_path = out_dir / "loss_log.csv"
    mode = "a" if (resume_from is not None and log_path.exists()) else "w"
    log = open(log_path, mode)
    if mode == "w":
        log.write("step,l_frame,l_motion,l_separate,l_total\n")

    ckpt_path = out_dir / "model.ckpt"
    last_total = float("nan")
    if mode == "a":
        lines = log_path.read_text().strip().splitlines()
        if len(lines) > 1:
            last_total = float(lines[-1].split(",")[-1])
    try:
        step = start_step
        while step < total_steps:
            epoch = step // steps_per_epoch
            within = step % steps_per_epoch
            order = np.random.default_rng(cfg.seed * 1000 + epoch).permutation(n_windows)
            opt.lr = cfg.lr * (cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every))

            picks = [index[i] for i in order[within * bs : (within + 1) * bs]]
            if not picks:
                step += 1
                continue
            inputs, targets, motion = _batch_arrays(clips, index, picks, cfg.k, np_dtype)

            out = model(Tensor(inputs))
            l_f = loss_frame(out.v_hat, Tensor(targets), lambda_g=cfg.lambda_g)
            if cfg.use_motion_loss:
                l_m = loss_motion(out.m_hat, Tensor(motion),
                                  lambda_ssim=cfg.lambda_ssim)
            else:
                l_m = Tensor(np.zeros((), dtype=np_dtype))
            if cfg.use_separate_loss and cfg.decompose:
                l_s = loss_separate(out.f_app, out.f_motion)
            else:
                l_s = Tensor(np.zeros((), dtype=np_dtype))
            total = loss_total(l_f, l_m, l_s, weights,
                               use_motion=cfg.use_motion_loss,
                               use_separate=cfg.use_separate_loss and cfg.decompose)

            vals = {"l_frame": float(l_f.data), "l_motion": float(l_m.data),
                    "l_separate": float(l_s.data), "l_total": float(total.data)}
            for name, val in vals.items():
                if not np.isfinite(val):
                    log.close()
                    raise RuntimeError(
                        f"non-finite loss at step {step}: {name} = {val}")

            model.zero_grad()
            total.backward()
            opt.step()
            model.write_memories(out)

            log.write(f"{step},{vals['l_frame']:.8e},{vals['l_motion']:.8e},"
                      f"{vals['l_separate']:.8e},{vals['l_total']:.8e}\n")
            last_total = vals["l_total"]
            step += 1
            if log_every and step % log_every == 0:
                print(f"step {step}/{total_steps} epoch {epoch} "
                      f"l_total {vals['l_total']:.5f}", flush=True)
    finally:
        if not log.closed:
            log.close()

    arrays = {}
    arrays.update(model.state_arrays())
    arrays.update(opt.state_arrays())
    meta = {"step": step, "epoch": step // steps_per_epoch,
            "steps_per_epoch": steps_per_epoch,
            "config": {f: getattr(cfg, f) if not isinstance(getattr(cfg, f), tuple)
                       else list(getattr(cfg, f))
                       for f in (
                           "resolution", "k", "d_model", "state_size", "n_blocks",
                           "memory_slots", "memory_temperature", "dtype", "seed",
                           "multi_scale_spatial", "multi_temporal", "decompose",
                           "patch_resolutions", "temporal_windows", "dw_kernels")}}
    save_checkpoint(ckpt_path, arrays, meta)
    return TrainResult(steps=step, epochs=step // steps_per_epoch,
                       final_loss=last_total, log_path=log_path,
                       ckpt_path=ckpt_path)
