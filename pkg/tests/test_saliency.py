"""Rarity maps, fusion weighting, and the end-to-end salience contract."""

import numpy as np
import pytest

from bannerlens.errors import ConfigError, InputError
from bannerlens.features import FeatureLayer, FeatureMapStack, Screenshot, extract_filter_bank
from bannerlens.saliency import (
    RarityConfig,
    SalienceMap,
    compute_salience,
    fuse_block,
    fuse_layer,
    normalize_to_range,
    rarity_map,
)
from oracles import fuse_oracle, rarity_oracle


class TestRarityMap:
    def test_matches_oracle_on_random_channels(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            ch = rng.uniform(-5, 5, size=(int(rng.integers(1, 12)), int(rng.integers(1, 12))))
            bins = int(rng.integers(2, 16))
            np.testing.assert_allclose(
                rarity_map(ch, RarityConfig(bin_count=bins)),
                rarity_oracle(ch, bins),
                atol=1e-9,
            )

    def test_constant_channel_is_zero(self):
        np.testing.assert_array_equal(rarity_map(np.full((4, 4), 2.5)), np.zeros((4, 4)))

    def test_boundary_value_joins_higher_bin(self):
        # Range [0, 10] with 10 bins: width 1, so 3.0 sits on the 2|3 boundary.
        ch = np.array([[0.0, 10.0, 3.0, 3.0, 2.5]])
        out = rarity_map(ch, RarityConfig(bin_count=10))
        # The two 3.0 values share bin 3 (count 2); 2.5 is alone in bin 2.
        assert out[0, 2] == out[0, 3] == -np.log(2 / 5)
        assert out[0, 4] == -np.log(1 / 5)

    def test_maximum_in_last_bin(self):
        ch = np.array([[0.0, 1.0, 2.0, 10.0]])
        out = rarity_map(ch, RarityConfig(bin_count=5))
        # 10.0 maps to bin 4, alone; rarity is -log(1/4).
        assert out[0, 3] == pytest.approx(-np.log(1 / 4), abs=1e-12)

    def test_rarer_bin_scores_higher(self):
        ch = np.array([[0.0] * 9 + [10.0]])
        out = rarity_map(ch, RarityConfig(bin_count=2))
        assert out[0, -1] > out[0, 0]

    def test_rejects_non_finite(self):
        with pytest.raises(InputError):
            rarity_map(np.array([[1.0, np.nan]]))

    def test_rejects_empty_or_1d(self):
        with pytest.raises(InputError):
            rarity_map(np.zeros((0, 3)))
        with pytest.raises(InputError):
            rarity_map(np.zeros(5))


class TestFuseLayer:
    def test_matches_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            n = int(rng.integers(1, 6))
            shape = (int(rng.integers(1, 10)), int(rng.integers(1, 10)))
            maps = [rng.uniform(0, 7, size=shape) for _ in range(n)]
            np.testing.assert_allclose(fuse_layer(maps), fuse_oracle(maps), atol=1e-9)

    def test_constant_map_gets_zero_weight(self):
        rng = np.random.default_rng(12)
        varying = rng.uniform(0, 5, size=(6, 6))
        fused = fuse_layer([np.full((6, 6), 9.0), varying])
        # Normalized weights: constant 0.0 exactly, varying 1.0.
        np.testing.assert_array_equal(fused, np.zeros((6, 6)) + 1.0 * varying)

    def test_all_constant_maps_fuse_to_zero(self):
        fused = fuse_layer([np.full((3, 3), 1.0), np.full((3, 3), 2.0)])
        np.testing.assert_array_equal(fused, np.zeros((3, 3)))

    def test_unnormalized_weights(self):
        rng = np.random.default_rng(13)
        maps = [rng.uniform(0, 3, size=(4, 4)) for _ in range(3)]
        config = RarityConfig(weight_normalization=False)
        np.testing.assert_allclose(
            fuse_layer(maps, config), fuse_oracle(maps, normalize=False), atol=1e-9
        )

    def test_weights_flip_invariant(self):
        rng = np.random.default_rng(14)
        maps = [rng.uniform(0, 5, size=(5, 7)) for _ in range(3)]
        fused = fuse_layer(maps)
        flipped = fuse_layer([m[:, ::-1] for m in maps])
        assert np.array_equal(flipped, fused[:, ::-1])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InputError):
            fuse_layer([np.zeros((2, 2)), np.zeros((3, 3))])

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            fuse_layer([])


class TestFuseBlock:
    def test_equals_fuse_layer_for_same_sizes(self):
        rng = np.random.default_rng(15)
        maps = [rng.uniform(0, 4, size=(5, 5)) for _ in range(2)]
        np.testing.assert_array_equal(fuse_block(maps), fuse_layer(maps))

    def test_upsamples_to_largest(self):
        rng = np.random.default_rng(16)
        big = rng.uniform(0, 4, size=(8, 10))
        small = rng.uniform(0, 4, size=(4, 5))
        assert fuse_block([big, small]).shape == (8, 10)
        # Mixed axes: the target is (max height, max width) across maps.
        tall = rng.uniform(0, 4, size=(9, 3))
        wide = rng.uniform(0, 4, size=(2, 12))
        assert fuse_block([tall, wide]).shape == (9, 12)


class TestNormalizeToRange:
    def test_spans_0_255(self):
        rng = np.random.default_rng(17)
        out = normalize_to_range(rng.uniform(-3, 9, size=(6, 6)))
        assert out.min() == 0.0 and out.max() == 255.0

    def test_constant_becomes_zero(self):
        np.testing.assert_array_equal(normalize_to_range(np.full((3, 3), 7.0)), np.zeros((3, 3)))


class TestRarityConfig:
    def test_bin_count_floor(self):
        with pytest.raises(ConfigError):
            RarityConfig(bin_count=1)

    def test_upsample_method_checked(self):
        with pytest.raises(ConfigError):
            RarityConfig(upsample_method="lanczos")


class TestSalienceMap:
    def test_dimensions_derived(self):
        smap = SalienceMap(scores=np.zeros((4, 9)))
        assert (smap.width, smap.height) == (9, 4)

    def test_rejects_empty(self):
        with pytest.raises(InputError):
            SalienceMap(scores=np.zeros((0, 4)))


def layer(block, index, channels):
    return FeatureLayer(name=f"b{block}", block_index=block, layer_index=index, channels=channels)


def five_block_stack(rng, h=8, w=8, channels=2):
    layers = [layer(b, b, rng.uniform(0, 5, size=(channels, h, w))) for b in range(1, 6)]
    return FeatureMapStack(source_id="s", image_width=w, image_height=h, layers=layers)


class TestComputeSalience:
    def test_range_and_shape(self):
        rng = np.random.default_rng(18)
        stack = five_block_stack(rng)
        smap = compute_salience(stack, 16, 12)
        assert smap.scores.shape == (12, 16)
        assert smap.scores.min() == 0.0 and smap.scores.max() == 255.0

    def test_defaults_to_stack_dimensions(self):
        rng = np.random.default_rng(19)
        stack = five_block_stack(rng, h=6, w=10)
        smap = compute_salience(stack)
        assert (smap.width, smap.height) == (10, 6)

    def test_constant_image_all_zero(self):
        shot = Screenshot(source_id="c", pixels=np.full((40, 48, 3), 128, dtype=np.uint8))
        smap = compute_salience(extract_filter_bank(shot))
        np.testing.assert_array_equal(smap.scores, np.zeros((40, 48)))

    def test_missing_block_rejected(self):
        rng = np.random.default_rng(20)
        layers = [layer(b, b, rng.uniform(0, 1, size=(1, 4, 4))) for b in (1, 2, 3, 5)]
        stack = FeatureMapStack(source_id="s", image_width=4, image_height=4, layers=layers)
        with pytest.raises(InputError, match="missing blocks"):
            compute_salience(stack)

    def test_rejects_non_stack(self):
        with pytest.raises(InputError):
            compute_salience(np.zeros((4, 4)))

    def test_deterministic(self):
        rng = np.random.default_rng(21)
        stack = five_block_stack(rng)
        a = compute_salience(stack, 9, 9).scores
        b = compute_salience(stack, 9, 9).scores
        assert np.array_equal(a, b)

    def test_multiple_layers_per_block(self):
        rng = np.random.default_rng(22)
        layers = []
        idx = 1
        for b in range(1, 6):
            for _ in range(2 if b < 3 else 1):
                layers.append(layer(b, idx, rng.uniform(0, 5, size=(2, 6, 6))))
                idx += 1
        stack = FeatureMapStack(source_id="s", image_width=6, image_height=6, layers=layers)
        smap = compute_salience(stack)
        assert smap.scores.shape == (6, 6)
