"""Exception hierarchy shared across the package."""


class GruPfgError(Exception):
    """Base class for all package errors."""


class DimensionError(GruPfgError, ValueError):
    pass


class NumericError(GruPfgError, ValueError):
    """Non-finite input or intermediate value."""


class InsufficientSamplesError(GruPfgError, ValueError):
    pass


class ContractError(GruPfgError, ValueError):
    pass


class DeterminismError(GruPfgError, RuntimeError):
    pass


class DomainError(GruPfgError, ValueError):
    pass


class SchemaError(GruPfgError, ValueError):
    """Input file or array does not match the expected layout."""


class EmptyInputError(GruPfgError, ValueError):
    pass


class SpecError(GruPfgError, ValueError):
    """Invalid sizes, ranges or options."""


class CheckpointError(GruPfgError, ValueError):
    pass


class DivergenceError(GruPfgError, RuntimeError):
    """Training produced a non-finite loss."""


class ConfigError(GruPfgError, ValueError):
    pass
