"""Exception types shared across the package."""


class OutOfDomainError(ValueError):
    """A query point fell outside the encoding's declared bounding box."""


class DetachedTapeError(RuntimeError):
    """A gradient was requested from a render that recorded no tape."""


class ConfigError(ValueError):
    """An invalid or inconsistent configuration value."""


class EmptyMeshError(RuntimeError):
    """Surface extraction produced no triangles where some were required."""


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, truncated, or structurally invalid."""


class DivergenceError(RuntimeError):
    """Optimization produced non-finite parameters; carries a diagnostic dump."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}
