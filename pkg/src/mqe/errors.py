"""Exception taxonomy shared by all modules.

The CLI maps these onto process exit codes: ConfigError -> 2,
InputError / EvalError -> 3, NumericalError -> 4.
"""


class MqeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MqeError):
    """Invalid or missing configuration value."""


class InputError(MqeError):
    """Malformed or inconsistent input data (files, shapes, indices)."""


class EvalError(MqeError):
    """Evaluation cannot proceed (degenerate splits, no perturbed nodes)."""


class NumericalError(MqeError):
    """Non-finite values encountered during numerical computation."""
