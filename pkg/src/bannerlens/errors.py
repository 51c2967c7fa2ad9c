"""Error taxonomy shared across the package.

Input validation failures raise :class:`InputError`; malformed feature
containers raise a :class:`FormatError` subclass identifying what broke, so
callers can distinguish a truncated file from a corrupt header. Statistics
that are undefined for the given data (e.g. McNemar with no discordant
pairs) raise :class:`UndefinedStatisticError` rather than returning NaN.
"""

from __future__ import annotations


class BannerLensError(Exception):
    """Base class for all package-specific errors."""


class InputError(BannerLensError, ValueError):
    """A precondition on user-supplied input was violated."""


class ConfigError(BannerLensError, ValueError):
    """A configuration value is out of range or inconsistent."""


class FormatError(BannerLensError):
    """Base class for feature-container format violations."""


class BadMagicError(FormatError):
    """Container does not start with the expected magic string."""


class TruncationError(FormatError):
    """Container ends before the declared header or payload is complete."""


class HeaderError(FormatError):
    """Container header is not valid JSON or is missing required fields."""


class PayloadSizeError(FormatError):
    """Payload byte count disagrees with the shapes declared in the header."""


class LayerOrderError(FormatError):
    """Tensor layer indices are not strictly increasing."""


class UndefinedStatisticError(BannerLensError, ValueError):
    """The requested statistic is undefined for the supplied data."""


class CollinearityError(BannerLensError, ValueError):
    """Design matrix is rank deficient after the within transformation.

    ``columns`` names the offending design columns.
    """

    def __init__(self, columns: list[str]):
        self.columns = list(columns)
        super().__init__(
            "collinear design columns after within transformation: "
            + ", ".join(self.columns)
        )


class PipelineAborted(BannerLensError):
    """A backend failure forced the pipeline to stop mid-run.

    The store written so far ends with a partial-run marker line.
    """
