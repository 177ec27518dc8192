class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class ContractError(RuntimeError):
    """An operation was called outside its precondition."""
