"""Exception hierarchy shared across the package."""


class CrownstitchError(Exception):
    """Base class for all package errors."""


class ValidationError(CrownstitchError):
    """Invalid user input: bad files, mismatched CRS, out-of-range parameters."""


class GeoreferenceError(ValidationError):
    """Missing, rotated, or otherwise unsupported georeferencing."""


class BackendError(CrownstitchError):
    """A segmentation backend failed on a tile (recoverable per tile)."""


class ProtocolError(CrownstitchError):
    """External backend spoke an incompatible or malformed wire protocol."""


class PipelineError(CrownstitchError):
    """Unrecoverable failure of an inference run (e.g. every tile failed)."""
