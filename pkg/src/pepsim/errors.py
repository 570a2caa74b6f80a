"""Exception types. Each maps onto one CLI exit code."""


class PepsimError(Exception):
    exit_code = 1


class ContractError(PepsimError, ValueError):
    """A caller broke a documented precondition."""

    exit_code = 3


class ConfigError(PepsimError, ValueError):
    exit_code = 2


class DataError(PepsimError, ValueError):
    exit_code = 3


class CapacityError(PepsimError, RuntimeError):
    exit_code = 2


class NumericalError(PepsimError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
