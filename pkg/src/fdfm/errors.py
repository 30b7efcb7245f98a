"""Exception taxonomy shared by all fdfm modules.

The CLI maps these onto its exit-code contract: configuration and input
problems exit 2, numeric aborts exit 3.
"""


class FdfmError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(FdfmError):
    """Tensor shapes violate an operation's contract."""


class DomainError(FdfmError):
    """A scalar argument lies outside its admissible range (e.g. t outside [0,1])."""


class ConfigError(FdfmError):
    """Invalid configuration value, key, or file."""


class FormatError(FdfmError):
    """Malformed serialized tensor or manifest."""


class SingularityError(FdfmError):
    """Velocity conversion requested too close to t=1, where 1-g(t) vanishes."""


class ContractError(FdfmError):
    """An internal protocol was violated (e.g. backward called with a stale tape)."""


class UndefinedEstimateError(FdfmError):
    """A Monte-Carlo estimate has no effective samples in its kernel window."""


class NumericsError(FdfmError):
    """A numeric invariant failed at runtime (non-finite loss, singular system)."""
