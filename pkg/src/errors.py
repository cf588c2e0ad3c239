class LatentGeometryError(Exception):
    """Base class for all domain errors raised by this package"""


class InvalidInputError(LatentGeometryError, ValueError):
    """Input violates a documented precondition"""


class DimensionMismatchError(InvalidInputError):
    """Array dimensions do not chain"""


class NonPositiveDefiniteError(InvalidInputError):
    """A matrix that must be positive definite has an eigenvalue <= 0"""


class SingularMetricError(InvalidInputError):
    """Smallest metric eigenvalue is zero, condition number undefined"""


class NonPsdError(InvalidInputError):
    """A metric has an eigenvalue or quadratic form below the PSD tolerance"""


class ModelFormatError(LatentGeometryError, ValueError):
    """Malformed or inconsistent model / curve file"""


class DatasetFormatError(LatentGeometryError, ValueError):
    """IDX file with an unexpected magic number or truncated payload"""


class DatasetConsistencyError(LatentGeometryError, ValueError):
    """Image and label files disagree"""


class EmptyDatasetError(LatentGeometryError, ValueError):
    """A filter or loader produced no samples"""


class CurveDomainError(InvalidInputError):
    """Curve parameter outside [0, 1]"""


class DegenerateEndpointsError(InvalidInputError):
    """Start and end point coincide"""


class UnsupportedModeError(InvalidInputError):
    """Requested gradient mode is not available for this metric"""


class UnsupportedFeatureError(InvalidInputError):
    """Operation needs a different feature map kind"""


class TrainingError(LatentGeometryError):
    """Optimization produced a non-finite loss"""


class MonteCarloError(LatentGeometryError):
    """Too many Monte-Carlo samples failed"""
