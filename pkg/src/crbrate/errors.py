"""Exception types shared across the solvers."""


class ContractError(ValueError):
    """An input violates an operation's precondition (shape, symmetry, sign)."""


class InfeasibleError(ValueError):
    """The requested problem has no feasible point (e.g. CRB threshold below CRB_min)."""


class NotApplicableError(ValueError):
    """An analysis was requested on a solution it does not apply to."""


class SolverError(RuntimeError):
    """An iterative solver ran out of budget before certifying its result.

    ``bounds`` carries whatever certified information was available when the
    solver stopped (best lower/upper objective bounds, best iterate, ...).
    """

    def __init__(self, message, bounds=None):
        super().__init__(message)
        self.bounds = dict(bounds or {})
