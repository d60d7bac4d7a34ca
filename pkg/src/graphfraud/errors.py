"""Exception types shared across the package, mapped to stable CLI exit codes."""


class GraphFraudError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ValidationError(GraphFraudError):
    """Bad configuration, malformed values, or a violated precondition."""

    exit_code = 2


class DimensionError(ValidationError):
    """Operand shapes do not agree."""


class LoadError(GraphFraudError):
    """Missing, unreadable, or structurally broken files."""

    exit_code = 3


class ProviderError(GraphFraudError):
    """Embedding provider failure (transport, auth, or malformed response)."""

    exit_code = 4


class CacheIntegrityError(ProviderError):
    """Cache contents disagree with what the provider would produce."""


class NumericError(GraphFraudError):
    """Non-finite values where finite ones are required."""

    exit_code = 5
