"""Exception hierarchy.

Every error carries a ``category`` used by the CLI for its exit status:
``config``, ``precision``, ``convergence`` or ``runtime``.
"""


class HeatsheetError(Exception):
    category = "runtime"


class DomainError(HeatsheetError, ValueError):
    category = "config"


class ConfigError(HeatsheetError, ValueError):
    category = "config"


class PrecisionError(HeatsheetError, ArithmeticError):
    category = "precision"


class DegeneracyError(PrecisionError):
    pass


class ConvergenceError(HeatsheetError):
    category = "convergence"

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class ApproximationError(ConvergenceError):
    pass


class IntegrationError(HeatsheetError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class StateError(HeatsheetError):
    pass


class EfficiencyError(HeatsheetError):
    pass


EXIT_CODES = {"config": 2, "precision": 3, "convergence": 4, "runtime": 5}
