"""Exception vocabulary shared by all spmelab modules.

The CLI maps these onto its exit-code contract: configuration problems
exit with 2, numerical failures with 3, validation failures with 4.
"""


class SpmelabError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(SpmelabError, ValueError):
    """Invalid parameters, profiles or file contents."""


class ResolutionError(ConfigurationError):
    """Mollification scale too small for the sampled path resolution."""


class ShapeError(SpmelabError, ValueError):
    """Mismatched grids, time axes or array shapes."""


class RangeError(SpmelabError, ValueError):
    """A displacement or query leaves the allocated ambient region."""

    def __init__(self, msg: str, required_margin: float | None = None):
        super().__init__(msg)
        self.required_margin = required_margin


class StabilityError(SpmelabError, RuntimeError):
    """A requested time step exceeds the explicit stability bound."""


class BudgetError(SpmelabError, RuntimeError):
    """Step budget exhausted before the time horizon was reached.

    Carries the partial trace accumulated so far in ``partial_trace``.
    """

    def __init__(self, msg: str, partial_trace=None):
        super().__init__(msg)
        self.partial_trace = partial_trace


class IntegrityError(SpmelabError, RuntimeError):
    """An internal consistency check failed (signals a solver bug)."""


class SearchFailureError(SpmelabError, RuntimeError):
    """A parameter search could not satisfy its constraints.

    ``binding_constraint`` describes where the search was pinched.
    """

    def __init__(self, msg: str, binding_constraint: str | None = None):
        super().__init__(msg)
        self.binding_constraint = binding_constraint


class RunFailureError(SpmelabError, RuntimeError):
    """Too many per-path failures in a Monte Carlo run."""
