"""Constant-delay compartmental epidemic models: solvers, stability analysis and scenarios."""

from .core import (TABLE1, ConfigError, ConvergenceError, ModelParams, ParamSchedule, TimeGrid,
                   normalize_ode_params, params_at)

__all__ = [
    "TABLE1",
    "ConfigError",
    "ConvergenceError",
    "ModelParams",
    "ParamSchedule",
    "TimeGrid",
    "normalize_ode_params",
    "params_at",
]
__version__ = "0.1.0"
