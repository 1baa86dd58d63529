"""Profitability and profit lag of deviant mining strategies under difficulty retargeting."""

from .domain import (
    DAY,
    NEVER_PROFITABLE,
    WEEK,
    DeltaTrajectory,
    Estimate,
    MinerParams,
    ParameterError,
    ProfitLag,
    ProtocolParams,
    Strategy,
)

__version__ = "0.1.0"

__all__ = [
    "DAY", "NEVER_PROFITABLE", "WEEK", "DeltaTrajectory", "Estimate", "MinerParams",
    "ParameterError", "ProfitLag", "ProtocolParams", "Strategy", "__version__",
]
