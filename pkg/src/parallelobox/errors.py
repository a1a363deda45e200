"""Exception types shared across the package."""


class ParalleloboxError(Exception):
    """Base class for all package-specific errors."""


class ParseError(ParalleloboxError):
    """A mesh file could not be parsed in the declared or detected format."""


class EmptyMesh(ParalleloboxError):
    """A mesh ended up with zero triangles after load-time cleanup."""


class NonWatertightInput(ParalleloboxError):
    """An operation that needs a closed surface received an open one."""


class DegenerateBox(ParalleloboxError):
    """A clip box has non-positive extent along at least one axis."""


class InsufficientBoundaryCells(ParalleloboxError):
    """Fewer boundary cells than requested seed blocks."""


class ConfigError(ParalleloboxError):
    """A printer configuration file is missing, malformed, or out of range."""


class NoValidDecomposition(ParalleloboxError):
    """Every metaheuristic iteration failed to produce a valid decomposition."""
