"""Exporter error taxonomy.

Unreadable inputs and failed weight acquisition are distinct failure modes:
the first is the caller's data, the second is the environment (network,
cache); callers and the CLI route them differently.
"""


class ExporterError(Exception):
    """Base class for all exporter failures."""


class ImageReadError(ExporterError):
    """The input image is missing, undecodable, or too small to run."""


class WeightLoadError(ExporterError):
    """Pretrained weights could not be downloaded or loaded."""
