"""Exception hierarchy shared by all rilab modules.

CLI handlers map these onto exit codes: ``ConfigError`` -> 2,
``CriterionFailure`` -> 3, everything else -> 4.
"""


class RilabError(Exception):
    """Base class for all rilab errors."""


class ParameterError(RilabError, ValueError):
    """A parameter is outside the range an operation accepts."""


class GeometryError(RilabError, ValueError):
    """A set, box or window does not satisfy a geometric precondition."""


class PathError(ParameterError):
    """A lattice path is malformed or does not cross the required region."""


class ConfigError(RilabError):
    """The experiment configuration failed validation."""


class CapabilityError(RilabError):
    """The requested computation is infeasible at the requested scale."""


class NumericError(RilabError):
    """A linear solve did not converge.

    Attributes:
        residual: Relative residual reached by the solver
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class FamilySizeError(RilabError):
    """A packet family is larger than the enumeration cap.

    Attributes:
        count: Exact number of index sets in the family
    """

    def __init__(self, count: int, cap: int):
        super().__init__(f"family has {count} index sets, enumeration cap is {cap}")
        self.count = count
        self.cap = cap


class CriterionFailure(RilabError):
    """An acceptance criterion of the verify suite failed.

    Attributes:
        criterion: Name of the failing criterion
    """

    def __init__(self, criterion: str, detail: str = ""):
        message = f"criterion '{criterion}' failed"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)
        self.criterion = criterion


class TrialFailureError(RilabError):
    """Too many trials of an experiment raised.

    Attributes:
        failures: Number of failed trials
        trials: Number of dispatched trials
    """

    def __init__(self, failures: int, trials: int, first: str = ""):
        message = f"{failures} of {trials} trials failed"
        if first:
            message = f"{message} (first: {first})"
        super().__init__(message)
        self.failures = failures
        self.trials = trials
