"""Term-structure toolkit for overnight risk-free rates with scheduled jumps."""

from .errors import CalibrationError, ConfigurationError, DataError, DomainError, NumericalError, RfrError
from .hedging import FuturesSpec, HedgeReport, run_hedge, zeta_continuous, zeta_jump
from .model import HullWhiteParams, JumpSpec, R_moments, joint_gaussian_law, rho_moments
from .montecarlo import PathSet, build_grid, mc_price, simulate, weighted_expectation
from .pricing import (
    CapletSpec,
    DiscountCurve,
    bond_price,
    caplet_delta,
    caplet_price,
    fit_drift_to_curve,
    forward_measure_params,
    futures_rate,
)
from .riccati import build_gaussian_hw_spec, solve_riccati, transform
from .schedule import PiecewiseConstant, Schedule

__all__ = [
    "CalibrationError", "ConfigurationError", "DataError", "DomainError", "NumericalError", "RfrError",
    "FuturesSpec", "HedgeReport", "run_hedge", "zeta_continuous", "zeta_jump",
    "HullWhiteParams", "JumpSpec", "R_moments", "joint_gaussian_law", "rho_moments",
    "PathSet", "build_grid", "mc_price", "simulate", "weighted_expectation",
    "CapletSpec", "DiscountCurve", "bond_price", "caplet_delta", "caplet_price", "fit_drift_to_curve",
    "forward_measure_params", "futures_rate",
    "build_gaussian_hw_spec", "solve_riccati", "transform",
    "PiecewiseConstant", "Schedule",
]
