"""Exception types shared across the pipeline."""


class DisorientError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolation(DisorientError, ValueError):
    """An input broke a documented precondition."""


class EmptyInput(ContractViolation):
    pass


class InsufficientData(ContractViolation):
    pass


class DegenerateTraining(ContractViolation):
    pass


class StratificationError(ContractViolation):
    pass


class DegenerateNull(ContractViolation):
    pass


class RequiresMonteCarlo(ContractViolation):
    """Raised when an exact enumeration would exceed the configured bound."""

    def __init__(self, n, bound):
        super().__init__(f"n={n} exceeds exact enumeration bound {bound}")
        self.n = n
        self.bound = bound


class NumericError(DisorientError, ArithmeticError):
    pass
