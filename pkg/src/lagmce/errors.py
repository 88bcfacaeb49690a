"""Exception hierarchy.

Every error here signals that a hypothesis of the underlying mathematics is
not met (or that a numerical routine gave up), never a programming bug.
"""


class LagmceError(Exception):
    """Base class for all domain errors raised by the package."""


class DegenerateSpectrum(LagmceError):
    """Eigenvalue gap at or below the tolerance where perturbation formulas apply."""


class EigGapTooSmall(DegenerateSpectrum):
    """lambda_m - lambda_{m+1} too small for log v_m to be smooth."""


class ConstraintViolated(LagmceError):
    """Hessian constraint required by a Jacobi inequality does not hold."""


class PhaseOutOfRange(LagmceError, ValueError):
    """|theta| >= n*pi/2."""


class SubcriticalPhase(LagmceError):
    """Phase dips below the critical value (n-2)*pi/2."""


class SingularJacobian(LagmceError):
    """J_beta = cos S + sin S * M is (numerically) singular."""


class SingularHessian(LagmceError):
    """Hessian not invertible, so the beta* rotation is undefined."""


class JacobianBoundViolated(LagmceError):
    """J_beta fails the lower bound J >= I/3 needed for graph resampling."""


class TargetOutsideImage(LagmceError):
    """A requested target node is not covered by the rotated graph."""


class PhiNotDiverging(LagmceError, ValueError):
    """phi does not blow up at 0+."""


class PhiNonpositive(LagmceError, ValueError):
    """phi takes a non-positive value on (0, 2]."""


class LineSearchFailed(LagmceError):
    """Armijo backtracking exhausted its step ladder."""


class LinearSolveStalled(LagmceError):
    """Inner linear solver did not reach its tolerance."""


class ContinuationStalled(LagmceError):
    """Continuation step shrank below the minimum."""


class FrameHypothesisUnmet(LagmceError):
    """Jordan angles are not close enough to beta* for the rotated frame."""


class FieldFormatError(LagmceError, ValueError):
    """Malformed field CSV or config file."""


class DimensionMismatch(FieldFormatError):
    """Column or row count inconsistent with the header."""
