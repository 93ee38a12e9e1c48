"""
Exception hierarchy for the structural ETKF toolkit
"""
from typing import Optional


class AssimilationToolkitError(Exception):
    """Base class for every error raised by the toolkit"""


class GridError(AssimilationToolkitError, ValueError):
    """Out-of-range indices, grid mismatches and malformed field files"""


class ConfigError(AssimilationToolkitError, ValueError):
    """Invalid scenario configuration"""


class ParameterError(AssimilationToolkitError, ValueError):
    """Invalid numeric parameter passed to an operation"""


class ZeroDenominatorError(AssimilationToolkitError, ArithmeticError):
    """A relative metric was requested against an identically-zero reference"""


class FactorizationError(AssimilationToolkitError, ArithmeticError):
    """A matrix that must be symmetric positive definite is not"""


class SnapshotMissingError(AssimilationToolkitError, KeyError):
    """Plot data was requested for a time that was not recorded"""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the message readable
        return str(self.args[0]) if self.args else ""


class CycleError(AssimilationToolkitError):
    """A component failed inside an assimilation cycle"""

    def __init__(self, cycle: int, cause: Exception, time: Optional[float] = None):
        """
        Args:
            cycle: 1-based index of the failing assimilation cycle
            cause: The underlying exception
            time: Model time of the failing cycle, if known
        """
        self.cycle = cycle
        self.cause = cause
        self.time = time
        where = f"cycle {cycle}" if time is None else f"cycle {cycle} (t={time!r})"
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")
