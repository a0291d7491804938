"""Exception types shared across the package."""


class ZeroNormRow(ValueError):
    """A feature row has (near-)zero L2 norm and cannot be normalized."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"row {index} has L2 norm <= 1e-12")


class DimMismatch(ValueError):
    """Two feature containers disagree on the feature dimension."""


class EmptyInput(ValueError):
    """An operation received an empty sequence where values are required."""


class InvalidDimension(ValueError):
    """A model or dataset dimension is zero or negative."""


class InvalidConfig(ValueError):
    """A configuration value violates its documented range."""


class ShapeMismatch(ValueError):
    """An array argument has the wrong shape for the requested operation."""


class LabelOutOfRange(ValueError):
    """A class label falls outside [0, K)."""


class NonFiniteLoss(ArithmeticError):
    """A loss evaluated to NaN or infinity during training."""


class FileFormatError(ValueError):
    """Base class for embedding/checkpoint file parse failures."""


class BadMagic(FileFormatError):
    """File does not start with the expected magic bytes."""


class VersionUnsupported(FileFormatError):
    """File declares a format version this reader does not support."""


class TruncatedFile(FileFormatError):
    """File ends before the declared payload is complete."""


class SizeMismatch(FileFormatError):
    """File byte length disagrees with the sizes declared in the header."""
