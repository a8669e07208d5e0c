"""Semantic exception hierarchy shared across the package."""


class MisadaptError(Exception):
    """Base class for all package-specific failures."""


class NonPositiveSigmaO(MisadaptError):
    """Variance of the estimator difference is not strictly positive."""


class RhoOutOfRange(MisadaptError):
    """Correlation between unrestricted estimate and difference is not in (-1, 1)."""


class HausmanOrderViolated(MisadaptError):
    """Restricted estimator is not more precise than the unrestricted one."""


class OutOfGridRange(MisadaptError):
    """Query point lies outside a policy's tabulated grid span."""


class UndefinedWeight(MisadaptError):
    """Weighted-average representation is degenerate (t = 0)."""


class DegenerateCell(MisadaptError):
    """Posterior denominator underflowed; observation grid far wider than prior support."""


class NoConvergence(MisadaptError):
    """Solver hit its iteration limit before meeting tolerances."""

    def __init__(self, message, best_prior=None, gap=None):
        super().__init__(message)
        self.best_prior = best_prior
        self.gap = gap


class RhoTooExtreme(MisadaptError):
    """Squared correlation exceeds the supported solve range."""


class InfeasibleCap(MisadaptError):
    """Requested worst-case risk cap cannot be met by any adaptive rule."""


class SingularSubCovariance(MisadaptError):
    """Selected sub-covariance block is singular."""


class FormatVersionMismatch(MisadaptError):
    """Lookup file was written with an unsupported format version."""


class ChecksumMismatch(MisadaptError):
    """Lookup file content does not match its recorded checksum."""
