"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operation was called with arguments violating its contract."""


class NumericError(RuntimeError):
    """Non-finite values where finite ones are required."""


class ConfigError(ValueError):
    """Invalid configuration (bad key, bad value, bad combination)."""


class WiringError(RuntimeError):
    """A network component was evaluated before its prerequisites."""


class CheckpointError(RuntimeError):
    """Checkpoint incompatible with the requested architecture."""


class SampleLoadError(RuntimeError):
    """A dataset sample could not be loaded."""


class EmptyGroundTruthError(ValueError):
    """Ground truth has no foreground pixel; F-measure is undefined."""
