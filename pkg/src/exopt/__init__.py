"""Exchange option pricing under two-asset jump diffusion with shared stochastic variance.

All pricing is carried out in units of the second asset's yield process,
where the exchange option becomes a one-dimensional call on the asset
yield ratio.
"""

from ._core import BACKEND as kernel_backend
from .model import (
    JumpSpec,
    MarketState,
    ModelParams,
    PhysicalDrifts,
    ValidationReport,
    compensator,
    risk_premia,
    transform_jump_measure,
    validate_params,
)
from .numerics import QuadSpec

__version__ = "0.1.0"

__all__ = [
    "JumpSpec",
    "MarketState",
    "ModelParams",
    "PhysicalDrifts",
    "QuadSpec",
    "ValidationReport",
    "compensator",
    "kernel_backend",
    "risk_premia",
    "transform_jump_measure",
    "validate_params",
]
