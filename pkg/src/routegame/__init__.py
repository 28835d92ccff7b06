"""Interference-minimizing routing games for multi-hop cognitive radio.

Secondary nodes route traffic to base stations through a corridor
around the interference-minimal axis between primary-user footprints,
choosing next hops in per-level stage games whose costs are queueing
delays plus discounted continuation values over the joint channel
state.  The package ships the solver, two baseline routers, comparison
metrics, and a seeded command-line experiment driver.
"""

__version__ = "0.1.0"

from .baselines import WeightedGraph, build_graph, dijkstra_route, ma_route
from .dynprog import (
    AuditRecord,
    RoutePath,
    SolveResult,
    StrategyTable,
    ValueTable,
    backward_induction,
    realize_route,
    solve_markov_values,
)
from .errors import (
    ConfigError,
    DeadEndError,
    InstabilityError,
    InvalidActionError,
    MissingContinuationError,
    NoAxisError,
    NonSimplexError,
    ReducibleChainError,
    RouteGameError,
    UnreachableError,
)
from .estimator import RoutePlanner
from .geometry import (
    Corridor,
    HierarchyAssignment,
    LevelAssignment,
    MedialAxis,
    assign_levels,
    build_corridor,
    build_hierarchy,
    compute_medial_axis,
    corridor_members,
)
from .metrics import (
    ComparisonReport,
    ensemble_compare,
    ensemble_loads,
    route_delay,
    route_interference,
)
from .queueing import (
    LevelLoadProfile,
    QueueParams,
    aggregate_loads,
    pk_delay,
    stage_payoff,
)
from .scenario import (
    NodeSet,
    PrimaryUser,
    Region,
    Scenario,
    StateModel,
    build_state_model,
    generate_deployment,
    load_scenario,
    materialize_nodes,
    save_scenario,
    scenario_hash,
    update_map,
)
from .stagegame import (
    FictitiousPlayTrace,
    StageGame,
    build_stage_game,
    equilibrium_value,
    fictitious_play,
    nash_gap,
)

__all__ = [
    "AuditRecord",
    "ComparisonReport",
    "ConfigError",
    "Corridor",
    "DeadEndError",
    "FictitiousPlayTrace",
    "HierarchyAssignment",
    "InstabilityError",
    "InvalidActionError",
    "LevelAssignment",
    "LevelLoadProfile",
    "MedialAxis",
    "MissingContinuationError",
    "NoAxisError",
    "NodeSet",
    "NonSimplexError",
    "PrimaryUser",
    "QueueParams",
    "ReducibleChainError",
    "Region",
    "RouteGameError",
    "RoutePath",
    "RoutePlanner",
    "Scenario",
    "SolveResult",
    "StageGame",
    "StateModel",
    "StrategyTable",
    "UnreachableError",
    "ValueTable",
    "WeightedGraph",
    "aggregate_loads",
    "assign_levels",
    "backward_induction",
    "build_corridor",
    "build_graph",
    "build_hierarchy",
    "build_stage_game",
    "build_state_model",
    "compute_medial_axis",
    "corridor_members",
    "dijkstra_route",
    "ensemble_compare",
    "ensemble_loads",
    "equilibrium_value",
    "fictitious_play",
    "generate_deployment",
    "load_scenario",
    "ma_route",
    "materialize_nodes",
    "nash_gap",
    "pk_delay",
    "realize_route",
    "route_delay",
    "route_interference",
    "save_scenario",
    "scenario_hash",
    "solve_markov_values",
    "stage_payoff",
    "update_map",
]
