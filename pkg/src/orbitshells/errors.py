"""Exception hierarchy.  Numerical failures are separated from bad input so
the CLI can map them to distinct exit codes."""


class OrbitShellsError(Exception):
    pass


class FormatError(OrbitShellsError, ValueError):
    """Malformed or unsupported file contents."""


class NumericalError(OrbitShellsError, ArithmeticError):
    """A linear system could not be solved reliably."""


class InfeasibleError(NumericalError):
    """Fewer equations than unknowns."""

    def __init__(self, msg, *, ell=None, num_equations=None, num_unknowns=None):
        super().__init__(msg)
        self.ell = ell
        self.num_equations = num_equations
        self.num_unknowns = num_unknowns


class RankDeficientError(NumericalError):
    def __init__(self, msg, *, ell=None, rank=None, num_unknowns=None, condition=None):
        super().__init__(msg)
        self.ell = ell
        self.rank = rank
        self.num_unknowns = num_unknowns
        self.condition = condition
