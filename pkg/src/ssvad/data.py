"""Synthetic surveillance clips, on-disk clip store, and window iteration.

Scenes contain a static textured background and a few constant-velocity
shapes with reflective boundaries; anomalies are injected from a configured
onset frame (velocity jump, shape swap, or an intruding object) and labeled
per frame.  Generation is fully determined by (spec, seed): each clip draws
from its own spawned child stream, so clip i's content is stable no matter
how many clips are requested.

Store layout under a root directory:

    clips/<name>/frames/%06d.png      8-bit frames (interchange)
    clips/<name>/labels.csv           header: frame_index,label
    clips/<name>/clip.m2sl            raw float32 tensor (exact round-trip)

Raw container: magic ``M2SL``, u16 version, four u32 dims (frames, H, W, C),
then a little-endian float32 payload in C order.
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

__all__ = [
    "SyntheticSceneSpec",
    "ClipStore",
    "write_raw_clip",
    "read_raw_clip",
    "generate_clip",
    "generate_dataset",
    "iterate_windows",
]

RAW_MAGIC = b"M2SL"
RAW_VERSION = 1


@dataclass
class SyntheticSceneSpec:
    """Everything that determines a generated scene family."""

    canvas: tuple[int, int] = (64, 64)
    n_objects: int = 3
    kinds: tuple[str, ...] = ("rectangle", "disc")
    speed_range: tuple[float, float] = (0.8, 2.2)
    n_frames: int = 80
    anomaly_kinds: tuple[str, ...] = ("speed_jump", "shape_swap", "intruder_object")
    anomaly_onset: int = 40
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.anomaly_onset < self.n_frames:
            raise ValueError("anomaly onset must fall inside the clip")
        for kind in self.kinds:
            if kind not in ("rectangle", "disc"):
                raise ValueError(f"unknown object kind {kind!r}")
        for kind in self.anomaly_kinds:
            if kind not in ("speed_jump", "shape_swap", "intruder_object"):
                raise ValueError(f"unknown anomaly kind {kind!r}")


# ---- rendering ---------------------------------------------------------------


def _soft_disc(yy, xx, cy, cx, radius):
    dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    return np.clip(radius + 0.5 - dist, 0.0, 1.0)


def _soft_rect(yy, xx, cy, cx, half_h, half_w):
    ay = np.clip(half_h + 0.5 - np.abs(yy - cy), 0.0, 1.0)
    ax = np.clip(half_w + 0.5 - np.abs(xx - cx), 0.0, 1.0)
    return ay * ax


@dataclass
class _MovingObject:
    kind: str
    cy: float
    cx: float
    vy: float
    vx: float
    size: float
    color: np.ndarray
    active_from: int = 0

    def step(self, h: int, w: int):
        self.cy += self.vy
        self.cx += self.vx
        # reflective boundaries: bounce the center off the walls
        if self.cy < self.size:
            self.cy = 2 * self.size - self.cy
            self.vy = -self.vy
        elif self.cy > h - 1 - self.size:
            self.cy = 2 * (h - 1 - self.size) - self.cy
            self.vy = -self.vy
        if self.cx < self.size:
            self.cx = 2 * self.size - self.cx
            self.vx = -self.vx
        elif self.cx > w - 1 - self.size:
            self.cx = 2 * (w - 1 - self.size) - self.cx
            self.vx = -self.vx

    def render(self, yy, xx):
        if self.kind == "disc":
            return _soft_disc(yy, xx, self.cy, self.cx, self.size)
        if self.kind == "bar":
            # swap-only geometry, never spawned in normal clips
            return _soft_rect(yy, xx, self.cy, self.cx,
                              self.size * 0.45, self.size * 1.8)
        return _soft_rect(yy, xx, self.cy, self.cx, self.size * 0.85, self.size)


def _background(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    base = 0.16 + 0.08 * (yy / max(h - 1, 1)) + 0.05 * (xx / max(w - 1, 1))
    speckle = rng.uniform(-0.02, 0.02, size=(h, w))
    tint = rng.uniform(0.9, 1.1, size=3)
    img = (base + speckle)[:, :, None] * tint[None, None, :]
    return np.clip(img, 0.0, 1.0)


_PALETTE = np.array([
    [0.95, 0.55, 0.25],
    [0.35, 0.75, 0.95],
    [0.85, 0.85, 0.35],
    [0.55, 0.95, 0.45],
    [0.9, 0.45, 0.75],
    [0.7, 0.7, 0.95],
])


def _spawn_object(rng: np.random.Generator, spec: SyntheticSceneSpec,
                  color_idx: int) -> _MovingObject:
    h, w = spec.canvas
    size = rng.uniform(0.09, 0.14) * min(h, w)
    kind = spec.kinds[int(rng.integers(len(spec.kinds)))]
    speed = rng.uniform(*spec.speed_range)
    angle = rng.uniform(0, 2 * np.pi)
    return _MovingObject(
        kind=kind,
        cy=rng.uniform(size + 1, h - size - 2),
        cx=rng.uniform(size + 1, w - size - 2),
        vy=speed * np.sin(angle),
        vx=speed * np.cos(angle),
        size=size,
        color=_PALETTE[color_idx % len(_PALETTE)].copy(),
    )


def generate_clip(spec: SyntheticSceneSpec, rng: np.random.Generator,
                  anomaly: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Render one clip: frames (T,H,W,3) float32 in [0,1], labels (T,) u8."""
    h, w = spec.canvas
    t_total = spec.n_frames
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    bg = _background(h, w, rng)
    objects = [_spawn_object(rng, spec, i) for i in range(spec.n_objects)]

    labels = np.zeros(t_total, dtype=np.uint8)
    if anomaly is not None:
        labels[spec.anomaly_onset:] = 1
        if anomaly == "intruder_object":
            intruder = _spawn_object(rng, spec, len(objects))
            intruder.size *= 1.7
            intruder.color = np.array([0.98, 0.2, 0.2])
            # enter from the left wall at onset
            intruder.cy = h / 2.0 + rng.uniform(-h / 6, h / 6)
            intruder.cx = intruder.size + 1
            intruder.vx = abs(intruder.vx) + 1.0
            intruder.active_from = spec.anomaly_onset
            objects.append(intruder)

    frames = np.empty((t_total, h, w, 3), dtype=np.float32)
    for t in range(t_total):
        if anomaly is not None and t == spec.anomaly_onset:
            if anomaly == "speed_jump":
                for obj in objects:
                    obj.vy *= 4.0
                    obj.vx *= 4.0
            elif anomaly == "shape_swap":
                # every object takes an out-of-vocabulary silhouette; the
                # trajectory and color stay, so only appearance is anomalous
                for obj in objects:
                    obj.kind = "bar"
        img = bg.copy()
        for obj in objects:
            if t < obj.active_from:
                continue
            alpha = obj.render(yy, xx)[:, :, None]
            img = img * (1.0 - alpha) + obj.color[None, None, :] * alpha
        frames[t] = np.clip(img, 0.0, 1.0).astype(np.float32)
        for obj in objects:
            if t >= obj.active_from:
                obj.step(h, w)
    return frames, labels


# ---- raw tensor container ----------------------------------------------------


def write_raw_clip(path, frames: np.ndarray):
    """Serialize (T,H,W,C) float32 frames to the raw container format."""
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 4:
        raise ValueError(f"expected (T,H,W,C), got {frames.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = RAW_MAGIC + struct.pack("<H", RAW_VERSION)
    header += struct.pack("<4I", *frames.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(frames.tobytes())


def read_raw_clip(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != RAW_MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != RAW_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    dims = struct.unpack_from("<4I", blob, 6)
    payload = blob[6 + 16:]
    expected = int(np.prod(dims)) * 4
    if len(payload) != expected:
        raise ValueError(f"{path}: payload {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


# ---- clip store --------------------------------------------------------------


class ClipStore:
    """Directory-backed collection of labeled clips."""

    def __init__(self, root):
        self.root = Path(root)

    @property
    def clips_dir(self) -> Path:
        return self.root / "clips"

    def clip_names(self) -> list[str]:
        if not self.clips_dir.is_dir():
            return []
        return sorted(p.name for p in self.clips_dir.iterdir() if p.is_dir())

    def write_clip(self, name: str, frames: np.ndarray, labels: np.ndarray,
                   raw: bool = True):
        """Store frames as PNGs + labels.csv (+ the raw tensor by default)."""
        if frames.shape[0] != len(labels):
            raise ValueError(
                f"{name}: {frames.shape[0]} frames but {len(labels)} labels")
        cdir = self.clips_dir / name
        fdir = cdir / "frames"
        fdir.mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(frames):
            img = Image.fromarray(
                np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8))
            img.save(fdir / f"{i:06d}.png")
        with open(cdir / "labels.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["frame_index", "label"])
            for i, lab in enumerate(labels):
                wr.writerow([i, int(lab)])
        if raw:
            write_raw_clip(cdir / "clip.m2sl", frames)

    def load_frames(self, name: str) -> np.ndarray:
        """Frames as float32 in [0,1]; prefers the raw tensor when present."""
        cdir = self.clips_dir / name
        raw_path = cdir / "clip.m2sl"
        if raw_path.is_file():
            return read_raw_clip(raw_path)
        fdir = cdir / "frames"
        files = sorted(fdir.glob("*.png"))
        if not files:
            raise FileNotFoundError(f"no frames under {fdir}")
        frames = [np.asarray(Image.open(f), dtype=np.float32) / 255.0 for f in files]
        return np.stack(frames)

    def load_labels(self, name: str) -> np.ndarray:
        path = self.clips_dir / name / "labels.csv"
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if header != ["frame_index", "label"]:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [(int(r[0]), int(r[1])) for r in rd]
        rows.sort()
        return np.array([lab for _, lab in rows], dtype=np.uint8)


def generate_dataset(spec: SyntheticSceneSpec, n_train_clips: int,
                     n_test_clips: int, out_dir) -> ClipStore:
    """Write a labeled dataset; byte-identical for identical (spec, seed)."""
    store = ClipStore(out_dir)
    ss = np.random.SeedSequence(spec.seed)
    children = ss.spawn(n_train_clips + n_test_clips)
    for i in range(n_train_clips):
        rng = np.random.default_rng(children[i])
        frames, labels = generate_clip(spec, rng, anomaly=None)
        store.write_clip(f"train_{i:03d}", frames, labels)
    for j in range(n_test_clips):
        rng = np.random.default_rng(children[n_train_clips + j])
        anomaly = spec.anomaly_kinds[j % len(spec.anomaly_kinds)]
        frames, labels = generate_clip(spec, rng, anomaly=anomaly)
        store.write_clip(f"test_{j:03d}", frames, labels)
    return store


def iterate_windows(store: ClipStore, k: int, names: list[str] | None = None,
                    ) -> Iterator[tuple[np.ndarray, dict]]:
    """Stride-1 sliding windows of k+1 frames (k inputs + 1 target).

    Yields (window, meta) with window float32 in [0,1] and meta giving the
    clip name, start index, and the target frame's index in the source clip.
    Clips shorter than k+1 frames are skipped with a warning.
    """
    if names is None:
        names = store.clip_names()
    for name in names:
        frames = store.load_frames(name)
        t_total = frames.shape[0]
        if t_total < k + 1:
            warnings.warn(f"clip {name} has {t_total} frames, needs {k + 1}; skipped")
            continue
        for start in range(t_total - k):
            window = frames[start : start + k + 1]
            yield window, {"clip": name, "start": start, "target_index": start + k}
