"""Seeded perturbation ensemble for robustness-averaged scoring.

Each ensemble sample independently applies up to five transforms, each firing
with probability 0.5: integer pixel shift with edge replication, horizontal
mirror, vertical mirror, small color jitter, and a light gaussian blur.
Geometric transforms move the annotated boxes along with the pixels; box
coordinates are clamped to the image.

Randomness is a pure function of ``(master_seed, source_id, sample_index)``:
parameters are drawn in a fixed transform order and only for transforms that
fire, so sample ``i`` of an image is reproducible bit for bit regardless of
how many samples are generated or in what order.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import ConfigError, InputError
from .features import BoundingBox, Screenshot
from .imageops import gaussian_smooth, luma

#: Fixed order in which transforms draw randomness and apply.
TRANSFORM_ORDER = ("shift", "flip_h", "flip_v", "color_jitter", "blur")


@dataclass(frozen=True)
class PerturbationConfig:
    """Ensemble size, seed and per-transform magnitudes."""

    ensemble_size: int = 32
    master_seed: int = 0
    per_transform_probability: float = 0.5
    max_shift: int = 15
    jitter_fraction: float = 0.02
    blur_sigma_max: float = 0.02
    blur_kernel: int = 3

    def __post_init__(self) -> None:
        if self.ensemble_size < 1:
            raise ConfigError("ensemble_size must be >= 1")
        if not 0.0 <= self.per_transform_probability <= 1.0:
            raise ConfigError("per_transform_probability must be in [0, 1]")
        if self.max_shift < 0:
            raise ConfigError("max_shift must be >= 0")
        if self.jitter_fraction < 0 or self.jitter_fraction >= 1:
            raise ConfigError("jitter_fraction must be in [0, 1)")
        if self.blur_sigma_max <= 0:
            raise ConfigError("blur_sigma_max must be positive")
        if self.blur_kernel < 1 or self.blur_kernel % 2 == 0:
            raise ConfigError("blur_kernel must be odd and >= 1")


@dataclass
class PerturbedSample:
    """One ensemble member: transformed image, moved boxes, applied params."""

    image: Screenshot
    boxes: dict[str, BoundingBox]
    applied: dict[str, dict[str, Any]]


def sample_rng(config: PerturbationConfig, source_id: str, index: int) -> np.random.Generator:
    """Deterministic generator for sample ``index`` of ``source_id``."""
    digest = hashlib.sha256(source_id.encode("utf-8")).digest()
    id_entropy = int.from_bytes(digest[:8], "little")
    seq = np.random.SeedSequence([config.master_seed, id_entropy, index])
    return np.random.default_rng(seq)


def shift_image(pixels: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift by ``(dx, dy)`` pixels (x right, y down), replicating edges."""
    h, w = pixels.shape[:2]
    rows = np.clip(np.arange(h) - dy, 0, h - 1)
    cols = np.clip(np.arange(w) - dx, 0, w - 1)
    return pixels[np.ix_(rows, cols)]


def shift_box(box: BoundingBox, dx: int, dy: int, width: int, height: int) -> BoundingBox:
    """Move a box by ``(dx, dy)`` and clamp it back into the image."""
    moved_x = box.x + dx
    moved_y = box.y + dy
    x0 = min(max(moved_x, 0), width - 1)
    y0 = min(max(moved_y, 0), height - 1)
    x1 = max(min(moved_x + box.width, width), x0 + 1)
    y1 = max(min(moved_y + box.height, height), y0 + 1)
    return BoundingBox(x0, y0, x1 - x0, y1 - y0)


def flip_box_horizontal(box: BoundingBox, width: int) -> BoundingBox:
    """Box position after mirroring the image left-right."""
    return BoundingBox(width - box.x - box.width, box.y, box.width, box.height)


def flip_box_vertical(box: BoundingBox, height: int) -> BoundingBox:
    """Box position after mirroring the image top-bottom."""
    return BoundingBox(box.x, height - box.y - box.height, box.width, box.height)


def _rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB -> HSV on [0, 1] floats (hue in turns)."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Vectorized HSV -> RGB on [0, 1] floats (hue in turns)."""
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    choices = [
        (v, t, p),
        (q, v, p),
        (p, v, t),
        (p, q, v),
        (t, p, v),
        (v, p, q),
    ]
    r = np.choose(i, [c[0] for c in choices])
    g = np.choose(i, [c[1] for c in choices])
    b = np.choose(i, [c[2] for c in choices])
    return np.stack([r, g, b], axis=-1)


def apply_color_jitter(
    pixels: np.ndarray,
    brightness: float,
    contrast: float,
    saturation: float,
    hue_shift: float,
) -> np.ndarray:
    """Brightness, contrast, saturation scales then a hue rotation, on floats.

    Contrast pivots on the mean luma; saturation blends with per-pixel luma;
    hue shifts the HSV hue channel by a fraction of the color wheel. Output is
    clipped to [0, 255].
    """
    out = pixels.astype(np.float64) * brightness
    pivot = float(np.mean(luma(out)))
    out = (out - pivot) * contrast + pivot
    gray = luma(out)[..., None]
    out = gray + (out - gray) * saturation
    out = np.clip(out, 0.0, 255.0)
    if hue_shift != 0.0:
        hsv = _rgb_to_hsv(out / 255.0)
        hsv[..., 0] = (hsv[..., 0] + hue_shift) % 1.0
        out = _hsv_to_rgb(hsv) * 255.0
    return np.clip(out, 0.0, 255.0)


def sample_perturbation(
    shot: Screenshot,
    boxes: dict[str, BoundingBox],
    config: PerturbationConfig,
    index: int,
) -> PerturbedSample:
    """Generate ensemble sample ``index`` for a screenshot and its boxes.

    Transforms are considered in :data:`TRANSFORM_ORDER`; each fires with the
    configured probability, drawing its parameters only when it fires. With a
    fire probability of 0 the sample equals the input exactly.
    """
    if index < 0 or index >= config.ensemble_size:
        raise InputError(
            f"sample index {index} outside ensemble of {config.ensemble_size}"
        )
    h, w = shot.height, shot.width
    for role, box in boxes.items():
        if box.x + box.width > w or box.y + box.height > h:
            raise InputError(f"box {role} exceeds image bounds")
    rng = sample_rng(config, shot.source_id, index)
    pixels = shot.pixels.astype(np.float64)
    out_boxes = dict(boxes)
    applied: dict[str, dict[str, Any]] = {}

    if rng.random() < config.per_transform_probability:
        dx = int(rng.integers(-config.max_shift, config.max_shift + 1))
        dy = int(rng.integers(-config.max_shift, config.max_shift + 1))
        pixels = shift_image(pixels, dx, dy)
        out_boxes = {r: shift_box(b, dx, dy, w, h) for r, b in out_boxes.items()}
        applied["shift"] = {"dx": dx, "dy": dy}

    if rng.random() < config.per_transform_probability:
        pixels = pixels[:, ::-1]
        out_boxes = {r: flip_box_horizontal(b, w) for r, b in out_boxes.items()}
        applied["flip_h"] = {}

    if rng.random() < config.per_transform_probability:
        pixels = pixels[::-1, :]
        out_boxes = {r: flip_box_vertical(b, h) for r, b in out_boxes.items()}
        applied["flip_v"] = {}

    if rng.random() < config.per_transform_probability:
        j = config.jitter_fraction
        brightness = float(rng.uniform(1.0 - j, 1.0 + j))
        contrast = float(rng.uniform(1.0 - j, 1.0 + j))
        saturation = float(rng.uniform(1.0 - j, 1.0 + j))
        hue_shift = float(rng.uniform(-j, j))
        pixels = apply_color_jitter(pixels, brightness, contrast, saturation, hue_shift)
        applied["color_jitter"] = {
            "brightness": brightness,
            "contrast": contrast,
            "saturation": saturation,
            "hue": hue_shift,
        }

    if rng.random() < config.per_transform_probability:
        # Map U[0,1) to (0, sigma_max] so the drawn sigma is always valid.
        sigma = config.blur_sigma_max * (1.0 - float(rng.random()))
        radius = config.blur_kernel // 2
        pixels = np.stack(
            [gaussian_smooth(pixels[:, :, c], sigma, radius) for c in range(3)],
            axis=-1,
        )
        applied["blur"] = {"sigma": sigma, "kernel": config.blur_kernel}

    out_pixels = np.clip(np.rint(pixels), 0, 255).astype(np.uint8)
    return PerturbedSample(
        image=Screenshot(source_id=shot.source_id, pixels=out_pixels),
        boxes=out_boxes,
        applied=applied,
    )


def ensemble_scores(
    shot: Screenshot,
    boxes: dict[str, BoundingBox],
    config: PerturbationConfig,
    backend: Callable[[Screenshot], "SalienceMap"],
    scorer: Callable[["SalienceMap", BoundingBox, str], "ButtonSalience"],
) -> dict[str, "ButtonSalience"]:
    """Average per-button scores over the perturbation ensemble.

    For each sample the backend recomputes salience from the perturbed pixels
    and every box is scored at its moved position. Per-role avg and max are
    means over the ensemble computed against the first sample as anchor with
    an exact deviation sum, so an ensemble of identical samples (e.g. fire
    probability 0) averages to exactly the unperturbed score; combined is
    rebuilt from the mean components. Same seed and inputs give bit-identical
    results.
    """
    from .scoring import ButtonSalience

    if not boxes:
        raise InputError("no boxes to score")
    avgs: dict[str, list[float]] = {role: [] for role in boxes}
    maxes: dict[str, list[float]] = {role: [] for role in boxes}
    for index in range(config.ensemble_size):
        sample = sample_perturbation(shot, boxes, config, index)
        smap = backend(sample.image)
        for role, box in sample.boxes.items():
            bs = scorer(smap, box, role)
            avgs[role].append(bs.avg)
            maxes[role].append(bs.max)

    def anchored_mean(vals: list[float]) -> float:
        return vals[0] + math.fsum(v - vals[0] for v in vals) / len(vals)

    out: dict[str, ButtonSalience] = {}
    for role in boxes:
        avg = anchored_mean(avgs[role])
        mx = anchored_mean(maxes[role])
        out[role] = ButtonSalience(
            role=role, avg=avg, max=mx, combined=avg / 255.0 + mx / 255.0
        )
    return out
