"""Exception types shared across the package."""


class ConfigError(Exception):
    """A model spec, run config, or config file is inconsistent."""


class IngestError(Exception):
    """A dataset file could not be parsed; message carries the offset."""


class PartitionError(Exception):
    """A partition could not satisfy its feasibility constraints."""


class ProtocolError(Exception):
    """A federated round hit an inconsistent state (shapes, empty sets)."""


class MetricsError(Exception):
    """A metrics file is malformed or cannot be written."""
