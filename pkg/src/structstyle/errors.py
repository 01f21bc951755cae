"""Exception hierarchy shared across the package."""


class StyleError(Exception):
    """Base class for all package errors."""


class NumericInputError(StyleError, ValueError):
    """Input contains NaN or infinite values."""


class ShapeMismatchError(StyleError, ValueError):
    pass


class RangeError(StyleError, ValueError):
    """Pixel values outside the expected [0, 1] interval."""


class ContainerError(StyleError):
    """A binary container could not be read or does not match expectations."""


class DigestMismatchError(ContainerError):
    pass


class ManifestMismatchError(ContainerError):
    pass


class TrainingError(StyleError, RuntimeError):
    pass
