"""Exception hierarchy; the CLI maps these onto exit codes."""


class ThermosyphonError(Exception):
    pass


class ConfigError(ThermosyphonError, ValueError):
    """Invalid scenario, grid or network specification (exit code 2)."""


class NumericalError(ThermosyphonError):
    """Failure inside a discretisation or linear solve (exit code 4)."""


class DomainError(NumericalError, ValueError):
    """Argument outside the domain of a mathematical function."""


class RankDeficiencyError(NumericalError):
    pass


class UnsupportedError(NumericalError):
    pass


class PropertyRangeError(NumericalError, ValueError):
    """Fluid property requested outside the tabulated validity interval."""


class InversionError(NumericalError):
    pass


class IterationError(ThermosyphonError):
    """Fixed-point iteration did not converge (exit code 3).

    ``history`` holds the residuals recorded before giving up.
    """

    def __init__(self, message: str, history=None, report=None):
        super().__init__(message)
        self.history = list(history or [])
        self.report = report
