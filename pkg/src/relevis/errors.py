"""Exception types shared across the package.

Every error raised on purpose derives from RelevisError so callers can
catch the package's failures without also swallowing programming bugs.
"""


class RelevisError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(RelevisError):
    """A file does not match the documented on-disk layout."""


class UnsupportedError(RelevisError):
    """A file is recognized but uses a feature outside the supported subset."""


class IoError(RelevisError):
    """Reading or writing a file failed at the OS level."""


class RejectedError(RelevisError):
    """A value was refused before writing (non-finite data, bad dims)."""


class AtlasError(RelevisError):
    """Atlas labels and region names are inconsistent."""


class DimsError(RelevisError):
    """Volume dimensions do not match what an operation requires."""


class ShapeError(RelevisError):
    """An array shape is incompatible with the model architecture."""


class NumericError(RelevisError):
    """A computation produced non-finite values."""


class DataError(RelevisError):
    """A data set is empty or otherwise unusable."""


class SingularDesignError(RelevisError):
    """The covariate design matrix is exactly collinear.

    Carries the names of the offending columns.
    """

    def __init__(self, columns, message=None):
        self.columns = list(columns)
        super().__init__(message or f"singular design matrix; offending columns: {self.columns}")


class DegenerateClassError(RelevisError):
    """A class has zero members where at least one is required."""


class DegenerateLabelsError(RelevisError):
    """Labels contain only one class where both are required."""


class DegenerateInputError(RelevisError):
    """An input volume is unusable for the requested analysis."""


class DegenerateRelevanceError(RelevisError):
    """Relevance propagation cannot distribute any relevance."""
