"""
Exception hierarchy for the vessel-transfer package.

Every domain failure raises a ``VesselTransferError`` subclass. The command
template (``Command.run``) logs these and maps them to the carried exit code,
so pipeline code can raise freely without formatting its own diagnostics.
"""


class VesselTransferError(Exception):
    """Base class for all vessel-transfer errors."""

    def __init__(self, message: str, exit_code: int = 1):
        self.message = message
        self.exit_code = exit_code
        super().__init__(self.message)


class ImageFormatError(VesselTransferError):
    """A PGM/PPM file or an in-memory image is malformed."""

    def __init__(self, message: str, field: str = ""):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ConfigurationError(VesselTransferError):
    """A parameter or configuration value is outside its allowed range."""


class ShapeError(VesselTransferError):
    """Array extents do not match what an operation requires."""


class NonFiniteError(VesselTransferError):
    """A loss or gradient became NaN or infinite."""


class CheckpointError(VesselTransferError):
    """A checkpoint file is corrupt, truncated, or incompatible."""


class SelectionError(VesselTransferError):
    """Transfer selection cannot be performed with the given supervision."""


class UndefinedMetricError(VesselTransferError):
    """A metric is mathematically undefined for the given input."""
