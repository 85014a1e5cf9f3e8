"""Exception types raised by drsplat.

Each error also derives from the closest builtin so callers that only know
about ``ValueError`` or ``ArithmeticError`` keep working.
"""


class DrSplatError(Exception):
    """Base class for all drsplat errors."""


class InvalidParameterError(DrSplatError, ValueError):
    """A model parameter (scale, quaternion, opacity, intrinsics) is out of range."""


class InvalidArgumentError(DrSplatError, ValueError):
    """A call received inconsistent or out-of-bounds arguments."""


class NumericalDegeneracyError(DrSplatError, ArithmeticError):
    """A covariance or other matrix is singular or not positive-definite."""


class EmptySceneError(DrSplatError, ValueError):
    """No Gaussians are left to work with."""


class InsufficientDataError(DrSplatError, ValueError):
    """Not enough training vectors for the requested number of centroids."""


class CorruptCodeError(DrSplatError, ValueError):
    """A PQ code references a centroid that does not exist."""


class DegenerateCodeError(DrSplatError, ArithmeticError):
    """A PQ code decodes to a vector whose normalizer is zero."""


class ResourceLimitError(DrSplatError, RuntimeError):
    """A requested grid or buffer exceeds the configured budget."""


class SceneSpecError(DrSplatError, ValueError):
    """A synthetic scene specification cannot be satisfied."""


class FormatError(DrSplatError, ValueError):
    """A binary file has the wrong magic, version or size."""
