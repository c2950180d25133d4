"""Exception hierarchy.

Every failure mode has its own class so that callers and the CLI can name
the stage and the violated hypothesis without parsing messages.
"""

from __future__ import annotations


class PhaselessError(Exception):
    """Base class for all package errors."""


class SeparationViolated(PhaselessError, ValueError):
    """Nested balls are not separated by more than twice epsilon."""


class QuadratureFailure(PhaselessError):
    """A normalization or quadrature integral underflowed."""


class SeriesNotConverged(PhaselessError):
    """The last Neumann term is too large relative to the partial sum."""


class DegenerateWindow(PhaselessError, ValueError):
    """A fitting window contains no usable samples."""


class TailNotResolved(PhaselessError):
    """A time trace has not decayed at its final time and no rate is known."""


class IterationDiverged(PhaselessError):
    """Successive Born iterates grow instead of contracting."""


class FitUnstable(PhaselessError):
    """A regression residual exceeds its threshold."""


class ContinuationUnreliable(PhaselessError):
    """Analytic continuation of a modulus off its band is not trustworthy."""


class ZeroOnGrid(PhaselessError):
    """The modulus vanishes (below floor) somewhere on the grid."""


class TailMismatch(PhaselessError):
    """Measured high-k decay disagrees with the declared power n."""


class ResidueDegenerate(PhaselessError, ValueError):
    """Two distinct zeros coincide without being merged."""


class ZeroMismatch(PhaselessError):
    """Two moduli that should share real zeros do not."""


class ContourThroughZero(PhaselessError):
    """The function is (nearly) zero on the counting contour."""


class StepTooLarge(PhaselessError, ValueError):
    """The Volterra step violates h * max|K| < 1."""


class LeadingValueZero(PhaselessError):
    """The leading kernel coefficient vanishes, so no second-kind reduction exists."""


class WindowEmpty(PhaselessError, ValueError):
    """The early-time agreement window has nonpositive length."""


class InsufficientCoverage(PhaselessError):
    """Some sinogram angle bin received no chord."""


class PreconditionViolated(PhaselessError, ValueError):
    """An operation's documented precondition does not hold."""


class StageFailed(PhaselessError):
    """A pipeline stage raised; the stage name is attached."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
