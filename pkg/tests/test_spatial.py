"""Spatial branch: token counts, scale fusion weights, resize behavior."""

import numpy as np
import pytest

from ssvad.autodiff import Tensor, gradient_check
from ssvad.spatial import (ImportanceFusion, PatchConfig, PatchEmbed,
                           SpatialStream, patch_partition)
from ssvad.ssm import BlockConfig

RNG = np.random.default_rng(45311)


def small_stream(multi_scale=True):
    pc = PatchConfig(resolutions=(4, 8, 16), embed_dim=8, frame_hw=(32, 32))
    bc = BlockConfig(d_model=8, state_size=2, n_blocks=1)
    return SpatialStream(pc, bc, np.random.default_rng(7), multi_scale=multi_scale)


class TestPatchPartition:
    def test_token_counts_at_full_resolution(self):
        clip = RNG.uniform(size=(1, 256, 256, 3))
        embed = Tensor(RNG.normal(size=(4 * 4 * 3, 8)))
        assert patch_partition(Tensor(clip), 4, embed).shape == (1, 4096, 8)
        embed16 = Tensor(RNG.normal(size=(16 * 16 * 3, 8)))
        assert patch_partition(Tensor(clip), 16, embed16).shape == (1, 256, 8)

    def test_single_patch_flattens_whole_frame(self):
        clip = RNG.uniform(size=(1, 8, 8, 3))
        d_in = 8 * 8 * 3
        embed = Tensor(np.eye(d_in))
        tokens = patch_partition(Tensor(clip), 8, embed)
        assert tokens.shape == (1, 1, d_in)
        np.testing.assert_allclose(tokens.data[0, 0], clip[0].reshape(-1))

    def test_non_divisible_resolution_rejected(self):
        with pytest.raises(ValueError):
            PatchConfig(resolutions=(5, 8, 16), embed_dim=8, frame_hw=(32, 32))

    def test_patch_values_match_manual_gather(self):
        clip = RNG.uniform(size=(1, 4, 4, 3))
        embed = Tensor(np.eye(2 * 2 * 3))
        tokens = patch_partition(Tensor(clip), 2, embed).data[0]
        manual = clip[0, :2, 2:4, :].reshape(-1)  # patch row 0, col 1
        np.testing.assert_allclose(tokens[1], manual)


class TestImportanceFusion:
    def make(self, d=8):
        return ImportanceFusion(d, np.random.default_rng(9))

    def test_weights_are_probability_vectors(self):
        fusion = self.make()
        for _ in range(100):
            pooled = [Tensor(RNG.normal(size=(2, 8))) for _ in range(3)]
            w = fusion.weights(pooled).data
            assert np.all(w >= 0.0)
            np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-6)

    def test_equal_logits_average_scales(self):
        fusion = self.make()
        # identical pooled summaries -> identical logits -> weights 1/3
        pooled = [Tensor(np.ones((1, 8)))] * 3
        np.testing.assert_allclose(fusion.weights(pooled).data, 1.0 / 3.0,
                                   rtol=1e-12)

    def test_dominant_logit_wins(self):
        # softmax(10, 0, 0) puts ~0.9999 on the first entry
        z = np.array([10.0, 0.0, 0.0])
        w = np.exp(z) / np.exp(z).sum()
        assert w[0] > 0.9999
        fused_weight = w[0]
        # feed features so that the output must be ~G1
        fusion = self.make()
        feats = [Tensor(np.full((1, 2, 16, 8), v)) for v in (1.0, 5.0, 9.0)]
        grids = [(4, 4), (4, 4), (4, 4)]

        class FixedWeights(ImportanceFusion):
            def weights(self, pooled):
                return Tensor(np.array([[fused_weight, w[1], w[2]]]))

        fixed = FixedWeights(8, np.random.default_rng(0))
        out = fixed(feats, grids).data
        expected = w[0] * 1.0 + w[1] * 5.0 + w[2] * 9.0
        np.testing.assert_allclose(out, expected, rtol=1e-4)
        assert abs(out.mean() - 1.0) < 2e-3

    def test_constant_field_resize_exact(self):
        fusion = self.make()
        feats = [
            Tensor(np.full((1, 2, 64, 8), 2.0)),
            Tensor(np.full((1, 2, 16, 8), 2.0)),
            Tensor(np.full((1, 2, 4, 8), 2.0)),
        ]
        out = fusion(feats, [(8, 8), (4, 4), (2, 2)]).data
        np.testing.assert_allclose(out, 2.0, atol=1e-10)

    def test_wrong_scale_count_rejected(self):
        fusion = self.make()
        with pytest.raises(ValueError, match="3 scales"):
            fusion([Tensor(np.zeros((1, 2, 4, 8)))] * 2, [(2, 2)] * 2)


class TestSpatialStream:
    def test_output_shape_on_finest_grid(self):
        stream = small_stream()
        clip = RNG.uniform(size=(1, 2, 32, 32, 3))
        out = stream(Tensor(clip))
        assert out.shape == (1, 2, 64, 8)  # 32/4 = 8 -> 64 tokens

    def test_single_scale_ablation_shape_matches(self):
        stream = small_stream(multi_scale=False)
        clip = RNG.uniform(size=(1, 2, 32, 32, 3))
        assert stream(Tensor(clip)).shape == (1, 2, 64, 8)

    def test_frames_processed_independently(self):
        stream = small_stream()
        clip = RNG.uniform(size=(1, 3, 32, 32, 3))
        perm = [2, 0, 1]
        out = stream(Tensor(clip)).data
        out_perm = stream(Tensor(clip[:, perm])).data
        np.testing.assert_allclose(out_perm, out[:, perm], rtol=1e-8, atol=1e-10)

    def test_stream_gradient_matches_finite_differences(self):
        pc = PatchConfig(resolutions=(4, 8, 16), embed_dim=8, frame_hw=(16, 16))
        bc = BlockConfig(d_model=8, state_size=2, n_blocks=1)
        stream = SpatialStream(pc, bc, np.random.default_rng(11))
        clip = Tensor(RNG.uniform(size=(1, 2, 16, 16, 3)), requires_grad=True)
        assert gradient_check(lambda c: stream(c).mean(), [clip]) < 1e-3


def test_patch_embed_projects_to_model_width():
    embed = PatchEmbed(4, 3, 8, np.random.default_rng(13))
    frames = Tensor(RNG.uniform(size=(2, 16, 16, 3)))
    assert embed(frames).shape == (2, 16, 8)
