"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes (parse=2, validation=3,
numeric=4, wrong-regime=5).
"""


class NearCritError(Exception):
    """Base class for package-specific failures."""


class ScenarioParseError(NearCritError):
    """Scenario file could not be read or has malformed syntax."""


class ScenarioValidationError(NearCritError):
    """Scenario parsed but violates a structural invariant."""


class NumericError(NearCritError):
    """A numeric procedure failed (overflow, non-convergence, bad series)."""


class SeriesDivergenceError(NumericError):
    """A series required to converge showed no sign of converging."""


class NotADistributionError(NumericError):
    """Coefficients that should form a probability law do not."""


class WrongRegimeError(NearCritError):
    """An operation was invoked on a scenario outside its regime."""


class UnsupportedFamilyError(WrongRegimeError):
    """A closed-form path was asked for a family it does not cover."""
