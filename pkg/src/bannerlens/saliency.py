"""Training-free salience from per-channel rarity.

A feature channel's salience is how statistically rare each value is within
that channel: values are binned into equal-width histogram bins over the
channel's own range and each pixel scores ``-log p(bin)``. Channel maps are
fused per layer with data-driven weights ``(max - mean)^2`` (a peaked map
earns more weight than a flat one), layer maps are fused per block the same
way after upsampling to the block's largest map, and the five block maps are
upsampled to image size, summed, and min-max normalized to [0, 255].

All fusion arithmetic keeps the mirror-exactness guarantees of
:mod:`bannerlens.imageops`: weights derive from permutation-invariant
reductions, and per-pixel accumulation order is fixed by layer order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError
from .imageops import resize, stable_mean


@dataclass(frozen=True)
class RarityConfig:
    """Knobs for rarity binning and map fusion.

    ``bin_count`` equal-width bins span each channel's [min, max];
    ``weight_normalization`` rescales fusion weights to sum to 1;
    ``upsample_method`` selects the interpolation used to grow maps.
    """

    bin_count: int = 10
    weight_normalization: bool = True
    upsample_method: str = "bilinear"

    def __post_init__(self) -> None:
        if self.bin_count < 2:
            raise ConfigError(f"bin_count must be >= 2, got {self.bin_count}")
        if self.upsample_method not in ("bilinear", "nearest"):
            raise ConfigError(f"unknown upsample method {self.upsample_method!r}")


@dataclass
class SalienceMap:
    """Final salience scores for one image, values in [0, 255].

    ``scores`` has the image's height x width. After normalization the map
    attains both 0 and 255 unless it is constant (then it is all zeros).
    """

    scores: np.ndarray
    width: int = field(init=False)
    height: int = field(init=False)

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 2 or scores.size == 0:
            raise InputError(f"scores must be a non-empty 2-D array, got {scores.shape}")
        self.scores = scores
        self.height, self.width = scores.shape


def rarity_map(channel: np.ndarray, config: RarityConfig = RarityConfig()) -> np.ndarray:
    """Per-pixel rarity ``-log p`` of a single feature channel.

    Bins are ``bin_count`` equal-width intervals over [min, max] of the
    channel; a value exactly on an interior boundary belongs to the higher
    bin, and the maximum falls in the last bin. A constant channel has no
    rarity structure and maps to all zeros.
    """
    ch = np.asarray(channel, dtype=np.float64)
    if ch.ndim != 2 or ch.size == 0:
        raise InputError(f"channel must be a non-empty 2-D array, got {ch.shape}")
    if not np.all(np.isfinite(ch)):
        raise InputError("channel contains non-finite values")
    lo = float(ch.min())
    hi = float(ch.max())
    if hi == lo:
        return np.zeros_like(ch)
    width = (hi - lo) / config.bin_count
    idx = np.floor((ch - lo) / width).astype(np.int64)
    np.clip(idx, 0, config.bin_count - 1, out=idx)
    counts = np.bincount(idx.ravel(), minlength=config.bin_count)
    with np.errstate(divide="ignore"):
        bin_rarity = -np.log(counts / ch.size)
    return bin_rarity[idx]


def _fusion_weights(maps: list[np.ndarray], config: RarityConfig) -> list[float]:
    """Per-map weights ``(max - mean)^2``, optionally normalized to sum 1.

    A constant map has max equal to mean by definition; the weight is pinned
    to exactly 0.0 rather than trusting floating-point summation to cancel.
    The mean uses a permutation-invariant reduction so mirrored maps receive
    bit-identical weights.
    """
    weights: list[float] = []
    for m in maps:
        mx = float(m.max())
        if mx == float(m.min()):
            weights.append(0.0)
        else:
            weights.append((mx - stable_mean(m)) ** 2)
    if config.weight_normalization:
        total = sum(weights)
        if total == 0.0:
            return [0.0] * len(weights)
        weights = [w / total for w in weights]
    return weights


def _check_maps(maps: list[np.ndarray], same_shape: bool) -> list[np.ndarray]:
    if not maps:
        raise InputError("no maps to fuse")
    out = []
    for m in maps:
        a = np.asarray(m, dtype=np.float64)
        if a.ndim != 2 or a.size == 0:
            raise InputError(f"maps must be non-empty 2-D arrays, got {a.shape}")
        out.append(a)
    if same_shape and len({a.shape for a in out}) > 1:
        raise InputError(
            "maps must share dimensions: " + ", ".join(str(a.shape) for a in out)
        )
    return out


def fuse_layer(
    maps: list[np.ndarray], config: RarityConfig = RarityConfig()
) -> np.ndarray:
    """Weighted sum of same-size maps with ``(max - mean)^2`` weights.

    With normalization on and every map constant, all weights are 0 and the
    result is a zero map.
    """
    arrs = _check_maps(maps, same_shape=True)
    weights = _fusion_weights(arrs, config)
    out = np.zeros_like(arrs[0])
    for w, m in zip(weights, arrs):
        out += w * m
    return out


def fuse_block(
    maps: list[np.ndarray], config: RarityConfig = RarityConfig()
) -> np.ndarray:
    """Fuse layer maps of one block, upsampling each to the block's largest.

    Maps of unequal size are first brought to (max height, max width) with the
    configured interpolation, then fused exactly like a layer.
    """
    arrs = _check_maps(maps, same_shape=False)
    max_h = max(a.shape[0] for a in arrs)
    max_w = max(a.shape[1] for a in arrs)
    arrs = [
        a if a.shape == (max_h, max_w) else resize(a, max_h, max_w, config.upsample_method)
        for a in arrs
    ]
    return fuse_layer(arrs, config)


def normalize_to_range(total: np.ndarray) -> np.ndarray:
    """Min-max normalize to [0, 255]; a constant map becomes all zeros."""
    lo = float(total.min())
    hi = float(total.max())
    if hi == lo:
        return np.zeros_like(total)
    return (total - lo) / (hi - lo) * 255.0


def compute_salience(
    stack: "FeatureMapStack",
    target_w: int | None = None,
    target_h: int | None = None,
    config: RarityConfig = RarityConfig(),
) -> SalienceMap:
    """Full salience map of an image from its feature-map stack.

    Per layer: rarity of each channel, fused with data-driven weights. Per
    block: layer maps fused after upsampling to the block's largest. The five
    block maps are upsampled to ``target_w x target_h`` (the stack's recorded
    image size when omitted), summed in block order, and min-max normalized
    to [0, 255]. Pure function of its inputs: the same stack and config
    always produce the bit-identical map.
    """
    from .features import FeatureMapStack  # cycle guard: features builds stacks

    if not isinstance(stack, FeatureMapStack):
        raise InputError("expected a FeatureMapStack")
    if target_w is None:
        target_w = stack.image_width
    if target_h is None:
        target_h = stack.image_height
    if target_w < 1 or target_h < 1:
        raise InputError(f"target dimensions must be positive, got {target_w}x{target_h}")
    blocks_present = {layer.block_index for layer in stack.layers}
    missing = set(range(1, 6)) - blocks_present
    if missing:
        raise InputError(f"stack is missing blocks {sorted(missing)}")

    block_maps: dict[int, list[np.ndarray]] = {b: [] for b in range(1, 6)}
    for layer in stack.layers:
        channel_maps = [rarity_map(c, config) for c in layer.channels]
        block_maps[layer.block_index].append(fuse_layer(channel_maps, config))

    total = np.zeros((target_h, target_w), dtype=np.float64)
    for b in range(1, 6):
        fused = fuse_block(block_maps[b], config)
        total += resize(fused, target_h, target_w, config.upsample_method)
    return SalienceMap(scores=normalize_to_range(total))
