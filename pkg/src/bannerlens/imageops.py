"""Low-level raster primitives with exact mirror symmetry.

Every operation here is written so that flipping the input along an axis and
un-flipping the output reproduces the original result bit for bit. That rules
out library resampling (whose accumulation order is unspecified) and pins
three implementation choices:

* convolutions pair the two taps equidistant from the center before scaling,
  so a mirrored window sums the same two floats in the other order (IEEE
  addition is commutative);
* bilinear resampling derives both interpolation weights by division from an
  integer remainder (never as ``1 - w``), so mirrored sample positions get the
  exact same weight pair, swapped;
* reductions that feed into further arithmetic (see ``stable_mean``) sum in a
  canonical value order, independent of pixel layout.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InputError


def as_float_image(pixels: np.ndarray) -> np.ndarray:
    """Return ``pixels`` as a float64 array, validating an H x W x 3 layout."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InputError(f"expected an H x W x 3 image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError("image has an empty axis")
    return arr.astype(np.float64)


def stable_mean(arr: np.ndarray) -> float:
    """Mean that is invariant to any permutation of the input elements.

    Values are sorted before pairwise summation, so spatially flipped arrays
    produce the bit-identical result. Used wherever a mean feeds back into
    per-pixel arithmetic that must stay mirror-symmetric.
    """
    flat = np.asarray(arr, dtype=np.float64).ravel()
    if flat.size == 0:
        raise InputError("mean of an empty array")
    return float(np.sort(flat, kind="stable").sum() / flat.size)


def gaussian_kernel(sigma: float, radius: int | None = None) -> np.ndarray:
    """Normalized 1-D gaussian taps for ``sigma``, radius ``ceil(3*sigma)``."""
    if sigma <= 0:
        raise InputError(f"sigma must be positive, got {sigma}")
    if radius is None:
        radius = max(1, int(math.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def _correlate_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Correlate one axis with a symmetric kernel, reflect boundary.

    Accumulates center tap first, then each equidistant pair as
    ``w_k * (left + right)``: the inner two-term sum is the only place a
    mirror changes evaluation order, and addition commutes.
    """
    if kernel.size % 2 != 1:
        raise InputError("kernel must have odd length")
    radius = kernel.size // 2
    moved = np.moveaxis(arr, axis, -1)
    if radius == 0:
        out = moved * kernel[0]
        return np.moveaxis(out, -1, axis)
    pad = [(0, 0)] * moved.ndim
    pad[-1] = (radius, radius)
    padded = np.pad(moved, pad, mode="reflect")
    n = moved.shape[-1]
    center = kernel[radius]
    out = padded[..., radius : radius + n] * center
    for k in range(1, radius + 1):
        left = padded[..., radius - k : radius - k + n]
        right = padded[..., radius + k : radius + k + n]
        out += kernel[radius + k] * (left + right)
    return np.moveaxis(out, -1, axis)


def gaussian_smooth(
    arr: np.ndarray, sigma: float, radius: int | None = None
) -> np.ndarray:
    """Separable gaussian smoothing of a 2-D array, reflect boundary.

    The kernel radius is clipped so reflect padding stays within numpy's
    multi-reflection support; clipping is symmetric, preserving mirror
    exactness.
    """
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2:
        raise InputError(f"expected a 2-D array, got shape {a.shape}")
    kernel = gaussian_kernel(sigma, radius)
    out = _correlate_axis(a, kernel, axis=0)
    out = _correlate_axis(out, kernel, axis=1)
    return out


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integer-exact half-pixel bilinear sampling plan for one axis.

    Source position of output cell ``i`` is ``((2i+1)*n_in - n_out) / (2*n_out)``
    in cell-center coordinates. The floor index ``k`` and remainder ``r`` are
    computed in integers; the two weights are ``(den-r)/den`` and ``r/den``,
    both by division, so the mirrored cell gets the identical pair swapped.
    """
    den = 2 * n_out
    num = (2 * np.arange(n_out, dtype=np.int64) + 1) * n_in - n_out
    k = num // den
    r = num - k * den
    below = k < 0
    k[below] = 0
    r[below] = 0
    above = k >= n_in - 1
    k[above] = n_in - 1
    r[above] = 0
    w_hi = r / float(den)
    w_lo = (den - r) / float(den)
    return k, w_lo, w_hi


def _resize_axis_bilinear(arr: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    moved = np.moveaxis(arr, axis, -1)
    n_in = moved.shape[-1]
    k, w_lo, w_hi = _axis_weights(n_in, n_out)
    k1 = np.minimum(k + 1, n_in - 1)
    out = moved[..., k] * w_lo + moved[..., k1] * w_hi
    return np.moveaxis(out, -1, axis)


def _resize_axis_nearest(arr: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    moved = np.moveaxis(arr, axis, -1)
    n_in = moved.shape[-1]
    # Round the half-pixel source position to the nearer cell, ties toward
    # the higher index. Unlike bilinear, the tie rule is not mirror-symmetric.
    den = 2 * n_out
    num = (2 * np.arange(n_out, dtype=np.int64) + 1) * n_in - n_out
    idx = np.clip((2 * num + den) // (2 * den), 0, n_in - 1)
    out = moved[..., idx]
    return np.moveaxis(out, -1, axis)


def resize(
    arr: np.ndarray, out_h: int, out_w: int, method: str = "bilinear"
) -> np.ndarray:
    """Resize a 2-D array to ``(out_h, out_w)``.

    ``bilinear`` uses half-pixel centers with integer-exact weights and is
    mirror-symmetric bit for bit; ``nearest`` replicates cells. Identity sizes
    return an exact copy.
    """
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2:
        raise InputError(f"expected a 2-D array, got shape {a.shape}")
    if out_h < 1 or out_w < 1:
        raise InputError(f"target size must be positive, got {(out_h, out_w)}")
    if method == "bilinear":
        out = _resize_axis_bilinear(a, out_w, axis=1)
        out = _resize_axis_bilinear(out, out_h, axis=0)
    elif method == "nearest":
        out = _resize_axis_nearest(a, out_w, axis=1)
        out = _resize_axis_nearest(out, out_h, axis=0)
    else:
        raise InputError(f"unknown resize method {method!r}")
    return out


def luma(image: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma of an H x W x 3 float image."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InputError(f"expected an H x W x 3 image, got shape {img.shape}")
    return 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]


def central_diff(arr: np.ndarray, axis: int) -> np.ndarray:
    """Central difference ``(x[i+1] - x[i-1]) / 2`` with reflect boundary.

    Border cells difference a value against itself and come out exactly 0.
    """
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2:
        raise InputError(f"expected a 2-D array, got shape {a.shape}")
    moved = np.moveaxis(a, axis, -1)
    pad = [(0, 0)] * moved.ndim
    pad[-1] = (1, 1)
    padded = np.pad(moved, pad, mode="reflect")
    n = moved.shape[-1]
    out = (padded[..., 2 : 2 + n] - padded[..., 0:n]) * 0.5
    return np.moveaxis(out, -1, axis)
