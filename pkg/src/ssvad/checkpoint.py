"""Versioned binary checkpoint container.

Layout: 8-byte magic, u16 format version, u32 header length, UTF-8 JSON
header, then the tensor payload.  The header carries free-form metadata and
a manifest of named tensors (name, dtype, shape, byte offset into the
payload).  All tensors are stored as little-endian float32.  Writes are
atomic (temp file + rename) so a crash never leaves a torn checkpoint.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

__all__ = ["save_checkpoint", "load_checkpoint"]

MAGIC = b"M2SLCKPT"
VERSION = 1


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict):
    """Write named tensors + metadata; float32 payload, atomic replace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        # asarray, not ascontiguousarray: the latter promotes 0-d to (1,)
        arr = np.asarray(arrays[name], dtype="<f4")
        manifest.append({
            "name": name,
            "dtype": "<f4",
            "shape": list(arr.shape),
            "offset": offset,
        })
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta, "tensors": manifest},
                        sort_keys=True).encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<H", VERSION))
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            for blob in blobs:
                fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back (arrays, meta); arrays come out as native float32."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    pos = len(MAGIC)
    (version,) = struct.unpack_from("<H", blob, pos)
    pos += 2
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    header = json.loads(blob[pos : pos + hlen].decode("utf-8"))
    payload = blob[pos + hlen :]
    arrays = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype=entry["dtype"], count=count,
                            offset=start).reshape(shape)
        arrays[entry["name"]] = arr.astype(np.float32)
    return arrays, header["meta"]
