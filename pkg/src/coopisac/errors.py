"""Exception hierarchy shared by all modules."""


class CoopIsacError(Exception):
    """Base class for all package errors."""


class ParseError(CoopIsacError):
    pass


class ValidationError(CoopIsacError):
    """A scenario or plan violates a documented invariant.

    ``field`` names the offending quantity so callers can report it.
    """

    def __init__(self, field, message=None):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)


class DegenerateGeometry(CoopIsacError):
    pass


class InvalidFraction(CoopIsacError):
    pass


class SingularFim(CoopIsacError):
    """Equivalent FIM not invertible; carries the diagnostics."""

    def __init__(self, message, condition_number=float("inf"), null_basis=None):
        self.condition_number = condition_number
        self.null_basis = null_basis
        super().__init__(f"{message} (cond={condition_number:.3g})")


class UnobservableLink(CoopIsacError):
    pass


class RankDeficientFusion(CoopIsacError):
    pass


class EmptyLink(CoopIsacError):
    pass


class NoConvergence(CoopIsacError):
    """Iterative routine hit its iteration cap; ``best`` holds the best iterate."""

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class Infeasible(CoopIsacError):
    """Optimization problem has no (strictly) feasible point.

    ``constraints`` names the constraint families implicated, ``stage`` tags
    where in the algorithm it happened.
    """

    def __init__(self, message, constraints=(), stage=None):
        self.constraints = tuple(constraints)
        self.stage = stage
        super().__init__(message)


class SolverStall(CoopIsacError):
    pass


class NumericalBreakdown(CoopIsacError):
    def __init__(self, message, iterate=None):
        self.iterate = iterate
        super().__init__(message)


class ZeroMainlobe(CoopIsacError):
    pass


class PhaseIInfeasible(Infeasible):
    """Phase I of the barrier method ended with a positive minimum slack."""

    def __init__(self, message, constraints=(), stage=None, slack=None):
        self.slack = slack
        super().__init__(message, constraints, stage)
