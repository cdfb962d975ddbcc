"""Exception and warning types raised across spinlab."""


class SpinlabError(Exception):
    """Base class for all spinlab errors."""


class NegativeCoefficient(SpinlabError, ValueError):
    pass


class AllZero(SpinlabError, ValueError):
    pass


class DomainError(SpinlabError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class DimensionMismatch(SpinlabError, ValueError):
    pass


class ResourceLimit(SpinlabError, MemoryError):
    """Coupling tensors would exceed the configured memory budget."""


class UnsupportedDimension(SpinlabError, ValueError):
    pass


class ConfigError(SpinlabError, ValueError):
    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class NonErgodicWarning(RuntimeWarning):
    """A Metropolis chain accepted almost nothing or almost everything."""
