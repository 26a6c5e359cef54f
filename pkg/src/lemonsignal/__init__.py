"""Optimal public disclosure in competitive lemons markets."""

from .matching import MatchingCurve, solve_g1, solve_g2
from .model import (
    DiscreteMarket,
    MarketInstance,
    Posterior,
    ScalarFn,
    auxiliary_cost,
    check_assumptions,
    equilibrium_price,
    find_crossings,
)
from .oracle import build_lp, nam_swap_check, solve_lp
from .signals import (
    SignalPlan,
    build_full_reveal,
    build_nam,
    build_pool_reveal_pool,
    build_price_surplus_plan,
    build_volume_plan,
    classify_ratio,
    greedy_multicross,
)
from .verification import (
    Objective,
    build_dual_volume,
    check_feasibility,
    discretize,
    dual_value,
    plan_value,
    verify_zp,
)

__all__ = [
    "DiscreteMarket",
    "MarketInstance",
    "MatchingCurve",
    "Objective",
    "Posterior",
    "ScalarFn",
    "SignalPlan",
    "auxiliary_cost",
    "build_dual_volume",
    "build_full_reveal",
    "build_lp",
    "build_nam",
    "build_pool_reveal_pool",
    "build_price_surplus_plan",
    "build_volume_plan",
    "check_assumptions",
    "check_feasibility",
    "classify_ratio",
    "discretize",
    "dual_value",
    "equilibrium_price",
    "find_crossings",
    "greedy_multicross",
    "nam_swap_check",
    "plan_value",
    "solve_g1",
    "solve_g2",
    "solve_lp",
    "verify_zp",
]
__version__ = "0.1.0"
