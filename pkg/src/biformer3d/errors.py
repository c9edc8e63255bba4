"""Exception types mapped to CLI exit codes (2/3/4)."""


class ConfigError(ValueError):
    """Invalid configuration, hyperparameter, or argument. Exit code 2."""


class DataError(ValueError):
    """Malformed bundle, corpus, or checkpoint content. Exit code 3."""


class UndefinedCueError(DataError):
    """A binaural cue is undefined (e.g. silent ear)."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required. Exit code 4."""
