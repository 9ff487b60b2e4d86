"""Risk-constrained Kelly and CRRA betting in finite-state markets."""

from .crra import PrefixSelection, SolverParams, find_prefix, optimal_unconstrained, solve_kelly, solve_unconstrained_crra
from .errors import ConvergenceFailure, KellyError, ModelError, NonUniquePrefix, NoPrefix
from .fairbench import fair_constrained_solve, fair_feasibility
from .logcal import CalibrationResult, calibrate, inner_solve, solve, sweep
from .market import Allocation, Market, Regime, SortedMarket, risk_functional, sort_market, validate
from .oracle import audit_kkt, brute_force_solve, check_full_support_obstruction

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "CalibrationResult",
    "ConvergenceFailure",
    "KellyError",
    "Market",
    "ModelError",
    "NoPrefix",
    "NonUniquePrefix",
    "PrefixSelection",
    "Regime",
    "SolverParams",
    "SortedMarket",
    "audit_kkt",
    "brute_force_solve",
    "calibrate",
    "check_full_support_obstruction",
    "fair_constrained_solve",
    "fair_feasibility",
    "find_prefix",
    "inner_solve",
    "optimal_unconstrained",
    "risk_functional",
    "solve",
    "solve_kelly",
    "solve_unconstrained_crra",
    "sort_market",
    "sweep",
    "validate",
]
