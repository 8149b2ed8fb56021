from typing import Any
from typing import Dict
from typing import Optional


class ThermoloopError(Exception):
    """Base class for every error raised by thermoloop"""


class ShapeError(ThermoloopError, ValueError):
    """Array shapes or dimensions do not match the contract"""


class NonFiniteError(ThermoloopError, FloatingPointError):
    """NaN or inf showed up in a forward value, latent state or loss"""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class ConvergenceError(ThermoloopError):
    """A nonlinear solve ended without meeting its tolerance"""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report


class StepFailure(ThermoloopError):
    """Hard failure while advancing a trajectory"""

    def __init__(
        self,
        message: str,
        t: float = float("nan"),
        step: Optional[int] = None,
        diagnostics: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message)
        self.t = t
        self.step = step
        self.diagnostics = diagnostics or {}


class ConfigError(ThermoloopError, ValueError):
    """Invalid or inconsistent configuration"""
