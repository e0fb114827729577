"""Exception hierarchy shared by all modules."""


class MaxstabError(Exception):
    """Base class for all errors raised by maxstab."""


class ContractError(MaxstabError, ValueError):
    """An input violates a documented precondition."""


class NumericalError(MaxstabError, ArithmeticError):
    """A linear-algebra or optimisation step failed numerically."""


class CalibrationError(MaxstabError, RuntimeError):
    """A threshold could not be calibrated to the requested target."""


class StoppingCapError(MaxstabError, RuntimeError):
    """A simulation loop hit its safety cap (usually a miscalibrated threshold)."""
