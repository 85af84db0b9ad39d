"""Exception hierarchy.

Every error carries a stable ``code`` string; the batch runner writes it into
reports so failures are machine readable.
"""


class CPKernError(Exception):
    code = "ErrInternal"

    def __init__(self, message="", **details):
        super().__init__(message)
        self.details = details


class DimensionMismatchError(CPKernError, ValueError):
    code = "ErrDimensionMismatch"


class NumericalError(CPKernError, ArithmeticError):
    code = "ErrNumerical"


class NotPSDError(CPKernError, ValueError):
    code = "ErrNotPSD"


class UnknownLabelError(CPKernError, KeyError):
    code = "ErrUnknownLabel"

    def __str__(self):
        return Exception.__str__(self)


class TooManyStringsError(CPKernError, ValueError):
    code = "ErrTooManyStrings"


class LiftInadmissibleError(CPKernError, ValueError):
    code = "ErrLiftInadmissible"


class CertificateFailedError(CPKernError):
    code = "ErrCertificateFailed"


class NotConvergedError(CPKernError):
    code = "ErrNotConverged"


class NotDominatedError(CPKernError, ValueError):
    code = "ErrNotDominated"


class NotSubunitalError(CPKernError, ValueError):
    code = "ErrNotSubunital"


class PreconditionFailedError(CPKernError, ValueError):
    code = "ErrPreconditionFailed"


class BadDistributionError(CPKernError, ValueError):
    code = "ErrBadDistribution"


class UnderflowError(CPKernError, ArithmeticError):
    code = "ErrUnderflow"


class CheckFailedError(CPKernError, AssertionError):
    """A verified property did not hold on the given instance."""

    code = "ErrCheckFailed"


class ValidationError(CPKernError, ValueError):
    """Malformed scenario or wire-format input."""

    code = "ErrValidation"
