"""Exception types shared across the package."""


class GsrayError(Exception):
    """Base class for all package-specific errors."""


class EmptyIsosurface(GsrayError):
    """Density amplitude does not exceed the truncation threshold; the
    bounding ellipsoid is empty."""


class EmptyScene(GsrayError):
    """An operation that requires at least one primitive got none."""


class BufferOverflow(GsrayError):
    """More primitives overlap a query segment than the hit buffer can hold."""

    def __init__(self, count, capacity):
        super().__init__(f"segment overlaps {count} primitives, capacity {capacity}")
        self.count = count
        self.capacity = capacity


class DegenerateCenter(GsrayError):
    """Point coincides with the camera center; spherical projection undefined."""


class ParseError(GsrayError):
    """Malformed scene, camera, or PLY file."""


class ValidationError(GsrayError):
    """File parsed but violates an invariant (bad quaternion, scale <= 0, ...)."""

    def __init__(self, message, record=None):
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)
        self.record = record
