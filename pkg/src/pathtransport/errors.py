"""Exception types shared across the toolkit."""


class GeometryError(Exception):
    """Base class for numerical-geometry failures."""


class DomainError(GeometryError):
    """A coordinate point lies outside the chart domain."""


class StencilError(DomainError):
    """A finite-difference stencil would leave the chart domain."""


class CurveTruncationError(GeometryError):
    """An integrated trajectory left the chart domain.

    ``exit_parameter`` is the curve parameter at which integration stopped;
    the usable part of the trajectory ends strictly before it.
    """

    def __init__(self, message, exit_parameter):
        super().__init__(message)
        self.exit_parameter = exit_parameter


class BasePointMismatchError(GeometryError):
    """A tangent vector's base point does not sit on the expected curve point."""


class ScenarioConsistencyError(GeometryError):
    """A deviation scenario violates one of its endpoint identities."""


class DegenerateScalingError(GeometryError):
    """The scalar scaling factor of a congruence vanished."""


class ShootingError(GeometryError):
    """Two-point connector search failed to converge."""


class ExpressionError(ValueError):
    """Malformed arithmetic expression; ``position`` indexes into the source."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class ConfigError(ValueError):
    """Invalid scenario configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key
