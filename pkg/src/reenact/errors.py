"""Exception types shared across the toolkit."""


class ReenactError(Exception):
    """Base class for all toolkit errors."""


class StructuralError(ReenactError):
    """Input has the wrong shape, count, or encoding."""


class DomainError(ReenactError):
    """Input values are outside the accepted domain."""


class ConfigurationError(ReenactError):
    """A configuration or dataset requirement is not satisfiable."""


class DataError(ReenactError):
    """Dataset contents are malformed or inconsistent."""


class DivergenceError(ReenactError):
    """Training produced non-finite parameters or losses."""
