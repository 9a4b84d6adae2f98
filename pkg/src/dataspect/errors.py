"""Exception hierarchy shared by all dataspect modules."""


class DataspectError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DataspectError):
    """Tensor or layer shapes are incompatible."""


class NumericError(DataspectError):
    """A computation produced or received non-finite values."""


class LabelError(DataspectError):
    """A class label is outside the valid range."""


class DataError(DataspectError):
    """A dataset operation received invalid sizes, counts or fractions."""


class FormatError(DataspectError):
    """A binary file failed magic, structure, or CRC validation."""


class ArgumentError(DataspectError):
    """An argument violates a documented precondition."""


class EmptyFingerprintError(DataspectError):
    """No successful adversarial perturbation could be generated."""


class BuildError(DataspectError):
    """The meta-classifier build pipeline failed for a named stage or model."""


class StageError(DataspectError):
    """A pipeline stage aborted; the message names the stage."""
