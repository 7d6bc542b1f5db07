"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    pass


class DataError(ValueError):
    """Boundary data violates a compatibility requirement."""


class OutOfDomain(ValueError):
    pass


class NumericalBreakdown(ArithmeticError):
    pass


class LinearSolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SolverDivergence(RuntimeError):
    """Outer iteration stopped making progress.

    The partially iterated state is attached so callers can still write it out.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class DegenerateFieldWarning(UserWarning):
    pass
