from typing import Optional, Tuple


class ShearflowError(Exception):
    """Base class for errors raised by the shearflow app"""


class ConfigurationError(ShearflowError, ValueError):
    """Invalid run configuration. Carries the violated rule and source line when known."""

    def __init__(self, message: str, rule: str = '', line: Optional[int] = None, path: str = ''):
        self.rule = rule
        self.line = line
        self.path = path
        prefix = ''
        if path:
            prefix += f"{path}:"
        if line is not None:
            prefix += f"{line}:"
        super().__init__(f"{prefix} {message}".strip() if prefix else message)


class GridMismatchError(ShearflowError, ValueError):
    """Two fields or a sample array do not live on the same grid"""


class GevreyOverflowError(ShearflowError, OverflowError):
    """A weighted norm overflowed double range even in the log domain"""

    def __init__(self, message: str, frequency: Tuple[float, float]):
        self.frequency = frequency
        super().__init__(f"{message} (dominant frequency k={frequency[0]:g}, eta={frequency[1]:g})")


class IntegrationError(ShearflowError, RuntimeError):
    """Time integration aborted; `state` is the last good state"""

    def __init__(self, message: str, state=None):
        self.state = state
        super().__init__(message)


class CFLViolationError(IntegrationError):
    """Requested step exceeds dt_max or the CFL limit"""


class StreamGapError(ShearflowError, ValueError):
    """Zero-mode velocity samples do not form a continuous stream"""


class StencilError(ShearflowError, ValueError):
    """Coordinate states do not form an equally spaced three-point stencil"""


class CoordinateMonotonicityError(ShearflowError, RuntimeError):
    """The map y -> v(t, y) stopped being monotone"""

    def __init__(self, message: str, t: float, min_vprime: float):
        self.t = t
        self.min_vprime = min_vprime
        super().__init__(message)


class FitError(ShearflowError, ValueError):
    """A least-squares fit could not be carried out or is ill-conditioned"""
