"""Phase-space solver and verification harness for a kinetic Fokker-Planck angiogenesis model."""

from .core import ConfigError, GridSpec, ModelParams, PhaseGrid, validate_params

__all__ = ["ConfigError", "GridSpec", "ModelParams", "PhaseGrid", "validate_params"]
