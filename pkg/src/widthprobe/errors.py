"""Exception types shared across the package."""


class WidthProbeError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(WidthProbeError):
    """Operands have incompatible or invalid dimensions."""


class NumericError(WidthProbeError):
    """Non-finite values or a failed numerical routine."""


class FormatError(WidthProbeError):
    """A file does not conform to its declared format."""


class ConfigError(WidthProbeError):
    """Invalid configuration value or combination."""


class LayerError(WidthProbeError):
    """A layer index does not address a usable layer."""


class StructureError(WidthProbeError):
    """The network structure does not support the requested rewrite."""


class DataError(WidthProbeError):
    """A dataset is degenerate or inconsistent."""


class FormulaError(WidthProbeError):
    """An architecture formula string failed to parse."""


class TrainError(WidthProbeError):
    """Training failed; carries the epoch at which it happened."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
