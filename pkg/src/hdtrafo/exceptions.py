"""Exception hierarchy shared by all modules."""


class HDTrafoError(Exception):
    """Base class for all errors raised by this package."""


class TransformDomainError(HDTrafoError, ValueError):
    """Input lies outside the domain of a transformation family."""


class TransformRangeError(HDTrafoError, ValueError):
    """Value lies outside the range of a transformation and cannot be inverted."""


class TransformOverflowError(HDTrafoError, ArithmeticError):
    """Evaluating a transformation overflowed double precision."""


class LassoInputError(HDTrafoError, ValueError):
    pass


class DegenerateModelError(HDTrafoError):
    """Transformed response has (numerically) zero residual variance."""


class VarianceError(HDTrafoError, ValueError):
    pass


class EmptyDataError(HDTrafoError, ValueError):
    pass


class EstimationInfeasibleError(HDTrafoError):
    """No grid point produced a finite score."""


class BootstrapUnstableError(HDTrafoError):
    pass


class DegenerateTestError(HDTrafoError):
    pass


class FlatScoreError(HDTrafoError):
    pass


class CovarianceError(HDTrafoError, ValueError):
    pass


class CalibrationError(HDTrafoError, ValueError):
    pass


class DGPInfeasibleError(HDTrafoError):
    """Too many latent draws fell outside the range of the transformation."""


class StudyError(HDTrafoError):
    pass


class DataParseError(HDTrafoError, ValueError):
    """Problem reading a user supplied data file."""


class SchemaError(DataParseError):
    pass


class ConfigError(HDTrafoError, ValueError):
    pass
