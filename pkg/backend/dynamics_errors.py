"""
Error hierarchy for boundary-dynamics computations.

Every error carries the process exit code the CLI reports for it:
1 for malformed input, 2 for domain errors, 3 for numerical failures.
"""

from typing import Optional


class DynamicsError(Exception):
    """Base class for all library errors"""

    exit_code = 2

    def __init__(self, detail: str, field: Optional[str] = None):
        super().__init__(detail)
        self.detail = detail
        self.field = field

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "field": self.field,
            "detail": self.detail,
        }


# --- malformed input (exit 1) ---


class InvalidInputError(DynamicsError):
    exit_code = 1

    def __init__(self, field: Optional[str], detail: str):
        super().__init__(detail, field=field)


class ParseError(InvalidInputError):
    pass


class ZeroPolynomialError(InvalidInputError):
    def __init__(self, detail: str = "polynomial is identically zero", field: Optional[str] = None):
        super().__init__(field, detail)


class DegreeMismatchError(InvalidInputError):
    def __init__(self, detail: str, field: Optional[str] = None):
        super().__init__(field, detail)


class BackendMismatchError(InvalidInputError):
    def __init__(self, detail: str, field: Optional[str] = "backend"):
        super().__init__(field, detail)


# --- domain errors (exit 2) ---


class IndeterminatePointError(DynamicsError):
    """f lies in the indeterminacy locus I(d)"""


class IndeterminatePairError(DynamicsError):
    """(f, g) lies in I(d, e): phi_g is constant with value a hole of f"""


class DegreeBudgetError(DynamicsError):
    pass


class SingularMobiusError(DynamicsError):
    pass


class NotBoundaryPointError(DynamicsError):
    pass


class BaseLocusError(DynamicsError):
    """Disk base point does not sit where the requested computation needs it"""


class InexactDivisionError(DynamicsError):
    pass


class FiberUndeterminedError(DynamicsError):
    pass


class ConstraintViolationError(DynamicsError):
    pass


# --- numerical failures (exit 3) ---


class NumericalError(DynamicsError):
    exit_code = 3


class NonConvergenceError(NumericalError):
    pass


class TauConvergenceError(NonConvergenceError):
    pass


class BarycenterConvergenceError(NonConvergenceError):
    pass


class RootFindingError(NumericalError):
    pass


class ExceptionalStartError(NumericalError):
    pass


class InvariantViolation(NumericalError):
    """A computed result contradicts an identity it must satisfy"""
