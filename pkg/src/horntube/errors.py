"""Exception hierarchy shared by all horntube modules."""

from __future__ import annotations


class HorntubeError(Exception):
    """Base class for library errors."""


class DomainError(HorntubeError, ValueError):
    """Arc length or coordinate outside the admissible range."""


class GeometryError(HorntubeError, ValueError):
    """Tube geometry violates the non-folding condition or is malformed."""


class DegenerateFrameError(GeometryError):
    """Frenet normal undefined because the curvature vanishes."""


class PoleError(HorntubeError, ValueError):
    """Evaluation at the coordinate pole r = 0."""


class DegenerateWallError(GeometryError):
    """Wall metric W vanishes so the normal is undefined."""


class CapabilityError(HorntubeError, LookupError):
    """A field does not provide a derivative channel an operation needs."""


class ParameterError(HorntubeError, ValueError):
    """Physical parameter out of range (for example a negative admittance)."""


class ConfigError(HorntubeError, ValueError):
    """Invalid solver or run configuration."""


class DivergenceError(HorntubeError, FloatingPointError):
    """Non-finite values detected during time stepping."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite state detected at step {step}")


class AlignmentError(HorntubeError, ValueError):
    """Grids or time axes of two compared quantities do not match."""


class PreconditionError(HorntubeError, ValueError):
    """Operation called on inputs that do not satisfy its hypotheses."""


class TestFunctionError(HorntubeError, ValueError):
    """Test function support touches the boundary of the space-time box."""

    __test__ = False
