"""Exception types raised by the solvers, oracles and the CLI."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class DimensionError(ValueError):
    """Array shapes do not agree."""


class ConsistencyError(ValueError):
    """A coupling does not reproduce the stated marginal."""

    def __init__(self, message, max_deviation):
        super().__init__(f"{message} (max deviation {max_deviation:.3e})")
        self.max_deviation = max_deviation


class InputError(ValueError):
    """Inputs are individually valid but mutually inconsistent."""


class SolverError(RuntimeError):
    """A numerical solver could not produce a certified result."""


class ConvergenceError(SolverError):
    """An iterative solver stopped before meeting its tolerance.

    ``best`` carries the last usable iterate and ``residual`` its error.
    """

    def __init__(self, message, best=None, residual=float("nan")):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.best = best
        self.residual = residual


class DegeneracyError(SolverError):
    """A rank or sign decision could not be made reliably."""


class GuardError(RuntimeError):
    """An enumeration would exceed its resource guard."""

    def __init__(self, message, required, limit):
        super().__init__(f"{message}: requires {required}, limit {limit}")
        self.required = required
        self.limit = limit


class SpecError(ValueError):
    """A problem-spec document violates the schema."""

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path
