"""Run configuration: defaults, file round-trip, validation, presets."""

import dataclasses

import pytest

from ssvad.config import ALPHA_PRESETS, RunConfig, load_config, save_config


class TestDefaults:
    def test_published_hyperparameters(self):
        cfg = RunConfig()
        assert cfg.k == 16
        assert cfg.resolution == 256
        assert cfg.d_model == 256
        assert cfg.state_size == 16
        assert cfg.patch_resolutions == (4, 8, 16)
        assert cfg.temporal_windows == (4, 8, 16)
        assert cfg.lr == pytest.approx(2e-4)
        assert cfg.lr_decay_factor == pytest.approx(0.5)
        assert cfg.lr_decay_every == 20
        assert cfg.lambda_m == pytest.approx(0.5)
        assert cfg.lambda_s == pytest.approx(0.1)
        assert cfg.lambda_g == pytest.approx(0.2)
        assert cfg.lambda_ssim == pytest.approx(0.5)
        assert cfg.memory_slots == 10
        assert cfg.n_blocks == 2
        assert cfg.multi_scale_spatial and cfg.multi_temporal and cfg.decompose
        assert cfg.use_motion_loss and cfg.use_separate_loss

    def test_alpha_presets(self):
        assert ALPHA_PRESETS == {"ped2": 0.6, "avenue": 0.4, "shanghai": 0.5}
        cfg = dataclasses.replace(RunConfig(), alpha_preset="avenue")
        assert cfg.effective_alpha == pytest.approx(0.4)
        cfg2 = dataclasses.replace(RunConfig(), alpha=0.33)
        assert cfg2.effective_alpha == pytest.approx(0.33)


class TestRoundTrip:
    def test_save_load_identity(self, tmp_path):
        cfg = dataclasses.replace(
            RunConfig(), resolution=64, k=8, d_model=32,
            temporal_windows=(2, 4, 8), epochs=3, alpha=0.45, decompose=False)
        path = tmp_path / "run.ini"
        save_config(cfg, path)
        back = load_config(path)
        assert back == cfg

    def test_overrides_apply(self, tmp_path):
        save_config(RunConfig(), tmp_path / "c.ini")
        back = load_config(tmp_path / "c.ini", overrides={"seed": 99})
        assert back.seed == 99

    def test_unknown_key_rejected(self, tmp_path):
        save_config(RunConfig(), tmp_path / "c.ini")
        text = (tmp_path / "c.ini").read_text()
        (tmp_path / "c.ini").write_text(text + "\nwarp_speed = 9\n")
        with pytest.raises(ValueError, match="warp_speed"):
            load_config(tmp_path / "c.ini")

    def test_unknown_section_rejected(self, tmp_path):
        save_config(RunConfig(), tmp_path / "c.ini")
        text = (tmp_path / "c.ini").read_text()
        (tmp_path / "c.ini").write_text(text + "\n[mystery]\nx = 1\n")
        with pytest.raises(ValueError, match="mystery"):
            load_config(tmp_path / "c.ini")


class TestValidation:
    def test_window_exceeding_k_rejected(self):
        with pytest.raises(ValueError):
            dataclasses.replace(RunConfig(), k=8, temporal_windows=(4, 8, 16))

    def test_resolution_divisibility(self):
        with pytest.raises(ValueError):
            dataclasses.replace(RunConfig(), resolution=100)

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            dataclasses.replace(RunConfig(), alpha=1.5)

    def test_scale_count(self):
        with pytest.raises(ValueError):
            dataclasses.replace(RunConfig(), patch_resolutions=(4, 8))

    def test_normalize_mode(self):
        with pytest.raises(ValueError):
            dataclasses.replace(RunConfig(), normalize="sometimes")


class TestBuilders:
    def test_model_config_mirror(self):
        cfg = dataclasses.replace(RunConfig(), resolution=64, k=8,
                                  temporal_windows=(2, 4, 8))
        mc = cfg.model_config()
        assert mc.frame_hw == (64, 64)
        assert mc.k == 8
        assert mc.d_model == cfg.d_model
        assert mc.temporal_windows == (2, 4, 8)

    def test_scene_spec_mirror(self):
        cfg = dataclasses.replace(RunConfig(), resolution=64, clip_frames=40,
                                  anomaly_onset=20)
        spec = cfg.scene_spec()
        assert spec.canvas == (64, 64)
        assert spec.n_frames == 40
        assert spec.anomaly_onset == 20

    def test_loss_weights_mirror(self):
        w = RunConfig().loss_weights()
        assert (w.lambda_m, w.lambda_s, w.lambda_g, w.lambda_ssim) == \
            (0.5, 0.1, 0.2, 0.5)
