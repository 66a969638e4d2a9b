"""American option pricing by early-exercise premium expansion.

The American price is decomposed into the matching European price plus an
early-exercise premium, expanded order by order, and estimated with a
branching interacting-particle Monte Carlo method.  Independent binomial-tree
and quadrature oracles validate the estimators.
"""

from .european import (EuropeanPricer, FourierConfig, FourierConvergenceError,
                       bs_price, heston_price, heston_value)
from .mollifier import (MollifierConfig, default_scan_grid, delta_gauss,
                        delta_prime_gauss, delta_second_gauss,
                        select_bandwidth, theta_step)
from .models import (BlackScholesParams, HestonParams, OptionSpec, PathState,
                     payoff, premium_rate, step_bs, step_heston)
from .oracle import (QuadratureConfig, TreeConfig, exercise_boundary,
                     quadrature_v1, quadrature_v2, tree_american,
                     tree_european)
from .particle import (ExpansionResult, JumpSchedule, SimConfig,
                       build_jump_schedule, chat_weight, draw_next_jump,
                       estimate_order1, estimate_order2, estimate_order3,
                       estimate_order4, price_american)

__all__ = [
    "BlackScholesParams", "HestonParams", "OptionSpec", "PathState",
    "payoff", "premium_rate", "step_bs", "step_heston",
    "EuropeanPricer", "FourierConfig", "FourierConvergenceError",
    "bs_price", "heston_price", "heston_value",
    "MollifierConfig", "theta_step", "delta_gauss", "delta_prime_gauss",
    "delta_second_gauss", "select_bandwidth", "default_scan_grid",
    "TreeConfig", "QuadratureConfig", "tree_american", "tree_european",
    "exercise_boundary", "quadrature_v1", "quadrature_v2",
    "SimConfig", "JumpSchedule", "ExpansionResult", "draw_next_jump",
    "chat_weight", "build_jump_schedule", "price_american",
    "estimate_order1", "estimate_order2", "estimate_order3", "estimate_order4",
]

__version__ = "0.1.0"
