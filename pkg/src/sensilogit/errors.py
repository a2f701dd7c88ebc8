"""Exception hierarchy; the CLI maps these onto exit codes."""


class SensilogitError(Exception):
    exit_code = 3


class ConfigError(SensilogitError, ValueError):
    exit_code = 1


class DataError(SensilogitError, ValueError):
    exit_code = 2


class DesignError(DataError):
    """Block-design parameters violate the necessary conditions, or no design was found."""


class FitError(SensilogitError, RuntimeError):
    """Numerical failure while fitting or testing a model."""

    exit_code = 3


class NestingError(FitError, ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass
