"""Exception types raised across the package."""


class InputError(ValueError):
    """An argument violates an operation's precondition."""


class UndefinedPaprError(ValueError):
    """PAPR requested for an all-zero waveform."""


class RankDeficientError(ValueError):
    """A per-subcarrier channel matrix lost full row rank; regenerate the channel."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed in a way that cannot be reported as converged=False."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConfigError(ValueError):
    """Malformed or unknown configuration entry; ``key_path`` names the offending key."""

    def __init__(self, message, key_path=""):
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.message = message
        self.key_path = key_path
