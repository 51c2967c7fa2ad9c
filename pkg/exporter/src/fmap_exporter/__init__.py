"""Export VGG16 convolution activations to FMAP containers."""

from .container import FMAP_MAGIC, TensorRecord, write_container
from .errors import ExporterError, ImageReadError, WeightLoadError
from .export import (
    CONV_BLOCKS,
    MIN_SIDE,
    NORMALIZE_MEAN,
    NORMALIZE_STD,
    ExportManifest,
    export,
)

__all__ = [
    "CONV_BLOCKS",
    "ExporterError",
    "ExportManifest",
    "FMAP_MAGIC",
    "ImageReadError",
    "MIN_SIDE",
    "NORMALIZE_MEAN",
    "NORMALIZE_STD",
    "TensorRecord",
    "WeightLoadError",
    "export",
    "write_container",
]
