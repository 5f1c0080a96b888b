"""Exception hierarchy shared across the package."""


class FrdsynError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FrdsynError):
    """Input violates a documented precondition."""


class NumericalFailureError(FrdsynError):
    """An iterative routine exceeded its budget or lost accuracy.

    Carries a ``diagnostics`` dict with the best-so-far state.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class SingularMatrixError(FrdsynError):
    """A linear solve hit a pivot below the rejection threshold."""

    def __init__(self, message, omega=None):
        if omega is not None:
            message = f"{message} (at omega={omega!r})"
        super().__init__(message)
        self.omega = omega


class HiddenConstraintViolation(FrdsynError):
    """Trial point violates the hidden stability constraint.

    This is a control-flow signal for the optimizer, not a crash: the
    solver turns it into a null step with a model-based cutting plane.
    """

    def __init__(self, message, omega=None):
        super().__init__(message)
        self.omega = omega


class IllPosedLoopError(HiddenConstraintViolation):
    """The feedback interconnection is singular at some frequency."""


class PrecisionError(FrdsynError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class PoleError(FrdsynError):
    """A transfer function was evaluated at (numerically) a pole."""

    def __init__(self, message, s=None):
        super().__init__(message)
        self.s = s


class InsufficientResolutionError(FrdsynError):
    """Too few fine-grid samples to bound a derivative on an interval."""


class BudgetExceededError(FrdsynError):
    """A node or refinement budget ran out; partial result attached."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class AssemblyError(FrdsynError):
    """Plant assembly failed (for example a filter pole on the grid)."""


class ParseError(FrdsynError):
    """A data or config file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:"
        if line is not None:
            loc = f"{loc}{line}: "
        elif loc:
            loc = f"{loc} "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class ConfigError(FrdsynError):
    """A run configuration is inconsistent or incomplete."""
