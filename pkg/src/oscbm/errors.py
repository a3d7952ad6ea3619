"""Exception types raised across the package."""


class OscBMError(Exception):
    """Base class for all package errors."""


class NonIntegrable(OscBMError):
    pass


class ToleranceNotMet(OscBMError):
    pass


class InvalidBeta(OscBMError, ValueError):
    pass


class NotEmbeddable(OscBMError):
    """The circulant extension of the covariance row has a negative eigenvalue."""


class QuadratureUnstable(OscBMError):
    pass


class NonCentered(OscBMError):
    pass


class RankUndetected(OscBMError):
    pass


class GridMismatch(OscBMError):
    pass


class NonAdmissible(OscBMError):
    """Denominator of the explicit corrector formula is (numerically) zero."""


class TooFewSamples(OscBMError):
    pass


class DegenerateSigma(OscBMError, ValueError):
    pass


class ShapeMismatch(OscBMError, ValueError):
    pass


class ConfigInvalid(OscBMError):
    """Config validation failure; ``field`` names the offending key."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
