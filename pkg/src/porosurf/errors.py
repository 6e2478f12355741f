"""Exception taxonomy shared by all porosurf modules.

The service layer maps these onto HTTP status codes and the CLI onto
exit codes, so raise the most specific class available.
"""


class PorosurfError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(PorosurfError):
    """Caller passed arguments violating a documented precondition."""


class SingularParameter(InvalidInput):
    """A parameter combination makes the requested scales undefined (e.g. nu=0.5)."""


class NumericalFailure(PorosurfError):
    """A numerical routine failed (singular system, eigensolver breakdown, ...)."""


class DivergenceError(NumericalFailure):
    """A transient solve or training run produced non-finite values."""


class DataError(PorosurfError):
    """A persisted dataset or checkpoint is missing, corrupt, or fails checksums."""


class CompatibilityError(PorosurfError):
    """Model and dataset (or request and artifact) do not belong together."""
