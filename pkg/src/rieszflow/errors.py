"""Exception hierarchy shared by every module.

The command line front end maps these onto exit codes, so each class
records which family it belongs to.
"""


class RieszFlowError(Exception):
    """Base class for all library errors."""

    exit_code = 3


class ParameterError(RieszFlowError, ValueError):
    """Invalid model or numerical parameters.

    Carries the complete list of violated constraints in ``violations``.
    """

    exit_code = 2

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DomainError(ParameterError):
    """Argument outside the domain where a formula is defined."""


class RegimeError(ParameterError):
    """Operation requested in a parameter regime where it does not apply."""


class ConfigurationError(RieszFlowError):
    """Problem set up so that no solution can be found (e.g. grid too small)."""

    exit_code = 2


class TruncationError(RieszFlowError):
    """Mass would leave the computational domain."""


class GridMismatchError(RieszFlowError, ValueError):
    """Objects defined on different grids were combined."""


class BuildError(RieszFlowError):
    """Operator assembly failed to reach its accuracy target."""


class StabilityError(RieszFlowError):
    """Time step larger than the explicit stability bound."""


class DivergenceError(RieszFlowError):
    """Iterative solver did not converge."""

    exit_code = 4
