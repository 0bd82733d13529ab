# errors.py
"""Exception hierarchy. Each class knows the CLI exit code it maps to."""


class AlleeError(Exception):
    exit_code = 2


class InputError(AlleeError, ValueError):
    """A value outside the state interval, a bad flag, a bad trial count."""
    exit_code = 2


class ConfigurationError(AlleeError, ValueError):
    """Invalid map parameters or a malformed system config file."""
    exit_code = 2


class PreconditionError(AlleeError):
    """A theorem check was asked for maps of the wrong monotonicity class."""
    exit_code = 2


class NotAnAlleeMap(AlleeError):
    exit_code = 3


class NotUnimodal(AlleeError):
    exit_code = 3


class EstimateUnavailable(AlleeError):
    """Every hitting-time trial reached the cap."""
    exit_code = 4

    def __init__(self, message: str, n_censored: int):
        super().__init__(message)
        self.n_censored = n_censored
