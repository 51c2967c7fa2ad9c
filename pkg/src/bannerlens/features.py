"""Feature-map backends: image-derived filter bank and FMAP containers.

The salience core consumes a :class:`FeatureMapStack`: per layer, a stack of
same-size feature channels, grouped into five blocks of increasing receptive
field. Two producers exist:

* :func:`extract_filter_bank` computes a fixed, versioned recipe of smoothed
  color, luma, edge and center-surround channels at five dyadic scales from
  the screenshot itself (no learned weights involved);
* :func:`load_fmap` / :func:`write_fmap` read and write a binary container of
  precomputed activations, so externally exported network features can drive
  the identical fusion path.

The filter bank inherits the mirror-exactness of :mod:`bannerlens.imageops`:
flipping the screenshot flips every channel bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    HeaderError,
    InputError,
    LayerOrderError,
    PayloadSizeError,
    TruncationError,
)
from .imageops import as_float_image, central_diff, gaussian_smooth, luma, resize

FMAP_MAGIC = b"FMAPv1"

#: Channel recipe of one filter-bank layer, in emission order.
FILTER_BANK_CHANNELS = (
    "smooth_r",
    "smooth_g",
    "smooth_b",
    "smooth_luma",
    "edge_h",
    "edge_v",
    "dog",
)


@dataclass(frozen=True)
class Screenshot:
    """An RGB screenshot with a stable identity.

    ``pixels`` is H x W x 3 uint8; treat it as immutable once constructed.
    ``source_id`` identifies the capture (e.g. ``website__locale``) and seeds
    per-image randomness downstream.
    """

    source_id: str
    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise InputError(
                f"pixels must be H x W x 3 uint8, got {px.shape} {px.dtype}"
            )
        if px.shape[0] < 32 or px.shape[1] < 32:
            raise InputError(
                f"screenshot must be at least 32x32, got {px.shape[1]}x{px.shape[0]}"
            )
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel rectangle ``(x, y, width, height)``, top-left origin."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InputError(f"box must have positive size, got {self}")
        if self.x < 0 or self.y < 0:
            raise InputError(f"box origin must be non-negative, got {self}")

    def center(self) -> tuple[float, float]:
        return (self.x + self.width / 2.0, self.y + self.height / 2.0)


@dataclass
class FeatureLayer:
    """Channels of one layer: ``channels`` is C x H x W float64."""

    name: str
    block_index: int
    layer_index: int
    channels: np.ndarray

    def __post_init__(self) -> None:
        ch = np.asarray(self.channels, dtype=np.float64)
        if ch.ndim != 3 or ch.size == 0:
            raise InputError(f"channels must be non-empty C x H x W, got {ch.shape}")
        if not 1 <= self.block_index <= 5:
            raise InputError(f"block_index must be in 1..5, got {self.block_index}")
        if self.layer_index < 1:
            raise InputError(f"layer_index must be >= 1, got {self.layer_index}")
        self.channels = ch


@dataclass
class FeatureMapStack:
    """All feature layers of one image, covering blocks 1..5.

    Layer indices must be strictly increasing and block indices non-decreasing
    (layers of a block are contiguous). ``image_width``/``image_height`` give
    the size the final salience map is upsampled to.
    """

    source_id: str
    image_width: int
    image_height: int
    layers: list[FeatureLayer] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.image_width < 1 or self.image_height < 1:
            raise InputError("image dimensions must be positive")
        if not self.layers:
            raise InputError("stack has no layers")
        prev_layer = 0
        prev_block = 1
        for layer in self.layers:
            if layer.layer_index <= prev_layer:
                raise LayerOrderError(
                    f"layer indices must strictly increase, got {layer.layer_index} "
                    f"after {prev_layer}"
                )
            if layer.block_index < prev_block:
                raise LayerOrderError(
                    f"block indices must not decrease, got {layer.block_index} "
                    f"after {prev_block}"
                )
            prev_layer = layer.layer_index
            prev_block = layer.block_index


@dataclass(frozen=True)
class FilterBankSpec:
    """Versioned recipe of the image-derived backend.

    Five blocks at dyadic downsampling factors; block ``b`` smooths at
    ``sigma = factor/2`` before resampling, and emits the seven
    :data:`FILTER_BANK_CHANNELS`. Changing any constant changes outputs, so
    the recipe carries a version tag.
    """

    version: str = "fb1"
    factors: tuple[int, ...] = (1, 2, 4, 8, 16)

    def __post_init__(self) -> None:
        if len(self.factors) != 5 or any(f < 1 for f in self.factors):
            raise InputError("factors must be five positive integers")

    def sigma(self, block: int) -> float:
        return self.factors[block - 1] / 2.0


def extract_filter_bank(
    shot: Screenshot, spec: FilterBankSpec = FilterBankSpec()
) -> FeatureMapStack:
    """Compute the filter-bank feature stack of a screenshot.

    Block ``b`` (factor ``f``): channels are computed at full resolution
    (gaussian-smoothed R, G, B, luma at ``sigma=f/2``; absolute central
    differences of the smoothed luma; absolute difference of gaussians at
    ``sigma`` vs ``2*sigma``), then resampled to ``ceil(H/f) x ceil(W/f)``.
    Block 1 applies the same recipe at ``sigma=0.5`` without resampling. A
    constant image yields all-zero edge and dog channels.
    """
    img = as_float_image(shot.pixels)
    h, w = img.shape[:2]
    lum = luma(img)
    layers: list[FeatureLayer] = []
    for block in range(1, 6):
        f = spec.factors[block - 1]
        sig = spec.sigma(block)
        bh = -(-h // f)
        bw = -(-w // f)

        def at_scale(arr2d: np.ndarray) -> np.ndarray:
            if (bh, bw) == arr2d.shape:
                return arr2d
            return resize(arr2d, bh, bw)

        sm = [gaussian_smooth(img[:, :, c], sig) for c in range(3)]
        sml = gaussian_smooth(lum, sig)
        lum_b = at_scale(sml)
        dog_full = np.abs(sml - gaussian_smooth(lum, 2.0 * sig))
        channels = np.stack(
            [
                at_scale(sm[0]),
                at_scale(sm[1]),
                at_scale(sm[2]),
                lum_b,
                np.abs(central_diff(lum_b, axis=1)),
                np.abs(central_diff(lum_b, axis=0)),
                at_scale(dog_full),
            ]
        )
        layers.append(
            FeatureLayer(
                name=f"{spec.version}_block{block}",
                block_index=block,
                layer_index=block,
                channels=channels,
            )
        )
    return FeatureMapStack(
        source_id=shot.source_id, image_width=w, image_height=h, layers=layers
    )


def _canonical_header(stack: FeatureMapStack) -> bytes:
    header = {
        "image_height": stack.image_height,
        "image_width": stack.image_width,
        "source_id": stack.source_id,
        "tensors": [
            {
                "block_index": layer.block_index,
                "dtype": "f32le",
                "layer_index": layer.layer_index,
                "name": layer.name,
                "shape": list(layer.channels.shape),
            }
            for layer in stack.layers
        ],
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_fmap(stack: FeatureMapStack, path: str) -> None:
    """Serialize a stack to the FMAP container format.

    Layout: magic ``FMAPv1``, little-endian uint32 byte length of the
    canonical JSON header (sorted keys, no whitespace), the header, then each
    tensor's row-major little-endian float32 payload in header order.
    Canonical encoding makes equal stacks produce byte-identical files.
    """
    header = _canonical_header(stack)
    with open(path, "wb") as fh:
        fh.write(FMAP_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for layer in stack.layers:
            fh.write(np.ascontiguousarray(layer.channels, dtype="<f4").tobytes())


def load_fmap(path: str) -> FeatureMapStack:
    """Parse an FMAP container back into a FeatureMapStack.

    Raises :class:`BadMagicError`, :class:`TruncationError`,
    :class:`HeaderError`, :class:`PayloadSizeError` or
    :class:`LayerOrderError` for the respective format violations. Tensor
    names and order are preserved, so ``write_fmap(load_fmap(p))`` reproduces
    the input byte for byte.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(FMAP_MAGIC) or data[: len(FMAP_MAGIC)] != FMAP_MAGIC:
        raise BadMagicError(f"not an FMAP container: {path}")
    off = len(FMAP_MAGIC)
    if len(data) < off + 4:
        raise TruncationError("container ends inside the header length field")
    (header_len,) = struct.unpack_from("<I", data, off)
    off += 4
    if len(data) < off + header_len:
        raise TruncationError(
            f"header declares {header_len} bytes but only "
            f"{len(data) - off} remain"
        )
    try:
        header = json.loads(data[off : off + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"header is not valid JSON: {exc}") from exc
    off += header_len

    for key in ("source_id", "image_width", "image_height", "tensors"):
        if key not in header:
            raise HeaderError(f"header is missing field {key!r}")
    layers: list[FeatureLayer] = []
    expected = 0
    specs = header["tensors"]
    if not isinstance(specs, list) or not specs:
        raise HeaderError("header field 'tensors' must be a non-empty list")
    for spec in specs:
        for key in ("name", "block_index", "layer_index", "shape", "dtype"):
            if key not in spec:
                raise HeaderError(f"tensor entry is missing field {key!r}")
        if spec["dtype"] != "f32le":
            raise HeaderError(f"unsupported tensor dtype {spec['dtype']!r}")
        shape = spec["shape"]
        if (
            not isinstance(shape, list)
            or len(shape) != 3
            or any(not isinstance(s, int) or s < 1 for s in shape)
        ):
            raise HeaderError(f"tensor shape must be a [C,H,W] list, got {shape!r}")
        expected += int(np.prod(shape)) * 4
    payload = data[off:]
    if len(payload) != expected:
        cls = TruncationError if len(payload) < expected else PayloadSizeError
        raise cls(
            f"payload has {len(payload)} bytes but header declares {expected}"
        )

    pos = 0
    for spec in specs:
        shape = tuple(spec["shape"])
        nbytes = int(np.prod(shape)) * 4
        arr = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=pos)
        pos += nbytes
        try:
            layers.append(
                FeatureLayer(
                    name=str(spec["name"]),
                    block_index=int(spec["block_index"]),
                    layer_index=int(spec["layer_index"]),
                    channels=arr.reshape(shape).astype(np.float64),
                )
            )
        except InputError as exc:
            raise HeaderError(str(exc)) from exc
    return FeatureMapStack(
        source_id=str(header["source_id"]),
        image_width=int(header["image_width"]),
        image_height=int(header["image_height"]),
        layers=layers,
    )
