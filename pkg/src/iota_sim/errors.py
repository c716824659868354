"""Exception types shared across the simulator."""


class IotaSimError(Exception):
    """Base class for all simulator errors."""


class InvalidConfigError(IotaSimError):
    """A configuration value violates its documented constraints."""


class ShapeError(IotaSimError):
    """Operands have incompatible dimensions."""


class KeyExistsError(IotaSimError):
    """Blob key already present and overwrite was not requested."""


class NotFoundError(IotaSimError):
    """Blob key is not present in the store."""


class NoActiveMinersError(IotaSimError):
    """An operation that needs at least one active miner found none."""


class TooFewMinersError(IotaSimError):
    """Butterfly all-reduce needs at least two miners."""


class DegenerateShardsError(IotaSimError):
    """Payload too small to split into one shard per miner pair."""


class InvalidArgumentError(IotaSimError):
    """Argument outside its valid range."""


class ProtocolViolationError(IotaSimError):
    """An event was applied to a stage that does not accept it."""


class InsufficientHorizonError(IotaSimError):
    """Simulation horizon too short relative to the decay window."""
