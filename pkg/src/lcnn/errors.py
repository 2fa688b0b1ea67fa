"""Exception hierarchy shared by every module."""


class LCNNError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(LCNNError):
    """Inconsistent network, layer, or head configuration."""


class GeometryError(ConfigurationError):
    """A layer would produce a non-positive spatial size."""


class UsageError(LCNNError, ValueError):
    """Invalid arguments passed to an operation."""


class FormatError(LCNNError):
    """Malformed weight, image, or ground-truth file.

    ``offset`` is the byte offset (or line number for text formats) where
    parsing stopped, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class WeightLoadError(LCNNError):
    """A weight array required by a layer is missing or mis-shaped."""
