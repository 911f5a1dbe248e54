"""Checkpoint container: exact float32 round-trip, guards, atomicity."""

import struct

import numpy as np
import pytest

from ssvad.checkpoint import MAGIC, load_checkpoint, save_checkpoint

RNG = np.random.default_rng(11447)


class TestRoundTrip:
    def test_float32_bit_exact(self, tmp_path):
        arrays = {
            "w": RNG.standard_normal((7, 5)).astype(np.float32),
            "b": RNG.standard_normal(5).astype(np.float32),
            "scalar": np.float32(3.25).reshape(()),
        }
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, arrays, {"step": 12})
        back, meta = load_checkpoint(path)
        assert sorted(back) == sorted(arrays)
        for name, arr in arrays.items():
            got = back[name]
            assert got.dtype == np.float32
            assert got.shape == arr.shape
            assert np.array_equal(got, arr)

    def test_meta_json_round_trip(self, tmp_path):
        meta = {"step": 7, "lr": 0.0002, "note": "after epoch 3",
                "flags": [True, False]}
        save_checkpoint(tmp_path / "m.ckpt", {"x": np.zeros(2, np.float32)}, meta)
        _, back = load_checkpoint(tmp_path / "m.ckpt")
        assert back == meta

    def test_float64_input_stored_as_float32(self, tmp_path):
        arr = np.array([1.0, 1.0 / 3.0], dtype=np.float64)
        save_checkpoint(tmp_path / "m.ckpt", {"x": arr}, {})
        back, _ = load_checkpoint(tmp_path / "m.ckpt")
        assert back["x"].dtype == np.float32
        assert np.array_equal(back["x"], arr.astype(np.float32))

    def test_empty_arrays_dict(self, tmp_path):
        save_checkpoint(tmp_path / "m.ckpt", {}, {"step": 0})
        back, meta = load_checkpoint(tmp_path / "m.ckpt")
        assert back == {} and meta == {"step": 0}


class TestGuards:
    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTCKPT!" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)

    def test_wrong_version_rejected(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, {"x": np.zeros(1, np.float32)}, {})
        blob = bytearray(path.read_bytes())
        blob[len(MAGIC) : len(MAGIC) + 2] = struct.pack("<H", 99)
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)


class TestAtomicity:
    def test_no_temp_residue_after_save(self, tmp_path):
        save_checkpoint(tmp_path / "m.ckpt", {"x": np.ones(3, np.float32)},
                        {"step": 1})
        assert sorted(p.name for p in tmp_path.iterdir()) == ["m.ckpt"]

    def test_overwrite_replaces_content(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, {"x": np.zeros(3, np.float32)}, {"step": 1})
        save_checkpoint(path, {"x": np.ones(3, np.float32)}, {"step": 2})
        back, meta = load_checkpoint(path)
        assert meta["step"] == 2
        assert np.array_equal(back["x"], np.ones(3, np.float32))
