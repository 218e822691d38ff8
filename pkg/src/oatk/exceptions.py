"""Exception hierarchy shared by every module of the package."""


class OATKError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(OATKError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class RankDeficient(OATKError, ValueError):
    """The design matrix does not have full column rank."""


class NonFinite(OATKError, ValueError):
    """Input contains NaN or infinite entries."""


class LeverageOne(OATKError, ValueError):
    """Some row has leverage 1, so leave-one-out error is undefined."""


class AllSkipped(OATKError, ValueError):
    """No candidate regularization value produced a usable LOOCV error."""


class LambdaMismatch(OATKError, ValueError):
    """A ridge fit and column geometry were computed at different lambdas."""


class SOutOfRange(OATKError, ValueError):
    """A decorrelation parameter s_j lies outside its admissible interval."""


class DegenerateDraw(OATKError, RuntimeError):
    """Random residual draws repeatedly collapsed onto the column space."""


class FactorizationFailure(OATKError, ValueError):
    """The Gram target for multiple knockoffs is indefinite."""


class GammaOutOfRange(OATKError, ValueError):
    """SeqStep+ gamma is outside [alpha / (alpha + 1), 1/2]."""


class NegativeBudget(OATKError, ValueError):
    """The residual norm budget of a sufficient statistic is negative."""


class SingularCovariance(OATKError, ValueError):
    """A requested covariance structure is singular or not positive definite."""


class ConfigError(OATKError, ValueError):
    """A simulation or run configuration is malformed."""


class ParseError(OATKError, ValueError):
    """An input file could not be parsed into a numeric matrix."""
