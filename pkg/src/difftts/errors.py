class DiffTTSError(Exception):
    pass


class DomainError(DiffTTSError, ValueError):
    """Argument outside the mathematical domain of an operation (t, tau, factor...)."""


class ShapeError(DiffTTSError, ValueError):
    pass


class ContractError(DiffTTSError, ValueError):
    """Structural precondition violated, e.g. a non-monotonic alignment."""


class NumericalError(DiffTTSError, ArithmeticError):
    pass


class ConfigError(DiffTTSError, ValueError):
    pass
