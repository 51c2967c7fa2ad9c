"""Writer for the FMAP activation container.

Layout: the magic ``FMAPv1``, a little-endian uint32 byte length of the
canonical JSON header (sorted keys, no whitespace), the header itself, then
each tensor's row-major little-endian float32 payload in header order. The
canonical header encoding makes equal exports byte-identical files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ExporterError

FMAP_MAGIC = b"FMAPv1"


@dataclass(frozen=True)
class TensorRecord:
    """One named activation tensor: ``array`` is channels x height x width."""

    name: str
    block_index: int
    layer_index: int
    array: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.array, dtype=np.float32)
        if arr.ndim != 3 or arr.size == 0:
            raise ExporterError(
                f"tensor {self.name!r} must be a non-empty C x H x W array, "
                f"got shape {arr.shape}"
            )
        if not 1 <= self.block_index <= 5:
            raise ExporterError(
                f"tensor {self.name!r} block_index must be in 1..5, got {self.block_index}"
            )
        if self.layer_index < 1:
            raise ExporterError(
                f"tensor {self.name!r} layer_index must be >= 1, got {self.layer_index}"
            )
        object.__setattr__(self, "array", arr)


def _check_order(tensors: list[TensorRecord]) -> None:
    if not tensors:
        raise ExporterError("nothing to write: no tensors")
    prev_layer = 0
    prev_block = 0
    for t in tensors:
        if t.layer_index <= prev_layer:
            raise ExporterError(
                f"layer indices must strictly increase, got {t.layer_index} "
                f"after {prev_layer}"
            )
        if t.block_index < prev_block:
            raise ExporterError(
                f"block indices must not decrease, got {t.block_index} "
                f"after {prev_block}"
            )
        prev_layer = t.layer_index
        prev_block = t.block_index


def write_container(
    path: str,
    source_id: str,
    image_width: int,
    image_height: int,
    tensors: list[TensorRecord],
) -> None:
    """Serialize ``tensors`` to ``path`` in FMAP container layout."""
    if image_width < 1 or image_height < 1:
        raise ExporterError("image dimensions must be positive")
    _check_order(tensors)
    header = {
        "image_height": int(image_height),
        "image_width": int(image_width),
        "source_id": str(source_id),
        "tensors": [
            {
                "block_index": t.block_index,
                "dtype": "f32le",
                "layer_index": t.layer_index,
                "name": t.name,
                "shape": list(t.array.shape),
            }
            for t in tensors
        ],
    }
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(FMAP_MAGIC)
        fh.write(struct.pack("<I", len(encoded)))
        fh.write(encoded)
        for t in tensors:
            fh.write(np.ascontiguousarray(t.array, dtype="<f4").tobytes())
