"""Value solver for zero-sum games with one-sided incomplete information.

The informed player knows which of finitely many payoff types is active; the
uninformed player only tracks a belief over them. The library computes the
game value by a backward convexification scheme on a belief-simplex grid,
builds the optimal belief martingale that attains it, synthesizes the
informed player's splitting strategy, and verifies the lot.
"""

from ._kernels import NUMBA_ENABLED, backend_name
from .cli import (ConfigError, RunConfig, Tolerances, export_martingale,
                  export_value_csv, import_martingale, load_spec, main, run)
from .game import (Belief, GameSpec, GameValueError, HamiltonianResult,
                   MixedAction, belief_measure, best_response_v, hamiltonian,
                   hamiltonian_profile, isaacs_gap, matrix_game_value,
                   matrix_isaacs_gap, payoff_bounds, payoff_matrix,
                   payoff_tensor, solve_matrix_game)
from .martingale import (OPPONENT_MODES, BeliefMartingale, InformedStrategy,
                         MartingaleReport, SimulationResult,
                         brute_force_value, check_martingale,
                         extract_optimal_martingale, martingale_cost,
                         martingale_from_dict, martingale_to_dict,
                         one_step_dpp, simulate_play, synthesize_strategy)
from .measures import (Coupling, DiscreteMeasure, TransportError,
                       optimal_coupling, second_moment, wasserstein1)
from .payoff import (EvaluationError, LipschitzEstimate, ParseError,
                     PayoffExpr, evaluate, evaluate_broadcast,
                     lipschitz_bound, parse)
from .solver import (GRID_NODE_CAP, CheckReport, EnvelopeError,
                     EnvelopeResult, GridSizeError, OffGridError,
                     RegularityReport, SimplexGrid, ValueField, build_grid,
                     convex_envelope, regularity_report, solve_backward,
                     verify_dual_supersolution, verify_subsolution)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "NUMBA_ENABLED",
    "backend_name",
    # measures
    "TransportError",
    "DiscreteMeasure",
    "Coupling",
    "wasserstein1",
    "optimal_coupling",
    "second_moment",
    # payoff expressions
    "ParseError",
    "EvaluationError",
    "PayoffExpr",
    "LipschitzEstimate",
    "parse",
    "evaluate",
    "evaluate_broadcast",
    "lipschitz_bound",
    # matrix games
    "GameValueError",
    "Belief",
    "MixedAction",
    "GameSpec",
    "HamiltonianResult",
    "payoff_tensor",
    "payoff_matrix",
    "solve_matrix_game",
    "matrix_game_value",
    "matrix_isaacs_gap",
    "hamiltonian",
    "hamiltonian_profile",
    "isaacs_gap",
    "best_response_v",
    "belief_measure",
    "payoff_bounds",
    # grid solver
    "GRID_NODE_CAP",
    "GridSizeError",
    "OffGridError",
    "EnvelopeError",
    "SimplexGrid",
    "build_grid",
    "EnvelopeResult",
    "convex_envelope",
    "ValueField",
    "solve_backward",
    "CheckReport",
    "verify_subsolution",
    "verify_dual_supersolution",
    "RegularityReport",
    "regularity_report",
    # martingales
    "OPPONENT_MODES",
    "BeliefMartingale",
    "extract_optimal_martingale",
    "martingale_cost",
    "brute_force_value",
    "one_step_dpp",
    "MartingaleReport",
    "check_martingale",
    "InformedStrategy",
    "synthesize_strategy",
    "SimulationResult",
    "simulate_play",
    "martingale_to_dict",
    "martingale_from_dict",
    # cli
    "ConfigError",
    "Tolerances",
    "RunConfig",
    "load_spec",
    "export_value_csv",
    "export_martingale",
    "import_martingale",
    "run",
    "main",
]
