"""Backward induction over hierarchy levels and discounted Markov values.

Levels are solved from the base-station side down to the sources.  The
stage value r of a node at state s is its expected cost from that level
to a base station (own hop delay plus the chosen node's stage value),
taken at the stage game's fictitious-play equilibrium.  The discounted
value over the evolving channel state is then v = (I - beta P)^{-1} r,
so v satisfies the Bellman identity v = r + beta P v exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DeadEndError
from .geometry import HierarchyAssignment
from .queueing import pk_delay_capped
from .scenario import Scenario, StateModel, as_seed_sequence
from .stagegame import (
    FictitiousPlayTrace,
    build_stage_game,
    equilibrium_value,
    fictitious_play,
)

VALUE_ITERATION_TOL = 1e-10
DIRECT_SOLVE_MAX_STATES = 1024


def solve_markov_values(r, transition, beta: float) -> np.ndarray:
    """Solve (I - beta P) v = r for the discounted stationary value.

    Uses a direct linear solve up to 1024 states and value iteration
    (sup-norm change below 1e-10) beyond that.  beta = 0 returns r
    itself, the undiscounted single-stage case.
    """
    r = np.asarray(r, dtype=float)
    p = np.asarray(transition, dtype=float)
    if r.ndim != 1:
        raise ValueError(f"stage values must be a vector, got shape {r.shape}")
    if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] != r.shape[0]:
        raise ValueError(
            f"transition shape {p.shape} does not match {r.shape[0]} stage values"
        )
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {beta!r}")
    if beta == 0.0:
        return r.copy()
    n = r.shape[0]
    if n <= DIRECT_SOLVE_MAX_STATES:
        return np.linalg.solve(np.eye(n) - beta * p, r)
    v = np.zeros(n)
    while True:
        nxt = r + beta * (p @ v)
        if float(np.max(np.abs(nxt - v))) < VALUE_ITERATION_TOL:
            return nxt
        v = nxt


@dataclass(frozen=True)
class ValueTable:
    """Discounted values v and stage values r for every forwarding node.

    values[n][s] is node n's expected discounted cost-to-go starting in
    state s; stage_values[(n, level)][s] the per-period expected path
    cost of n at its level.  With beta = 0 the two coincide.
    """

    n_states: int
    beta: float
    values: Mapping[str, np.ndarray]
    stage_values: Mapping[tuple[str, int], np.ndarray]

    def stage_vector(self, node: str) -> np.ndarray:
        """Stage values of a node merged across the levels it occupies."""
        out = np.zeros(self.n_states)
        for (n, _level), vec in self.stage_values.items():
            if n == node:
                out = out + vec
        return out

    def local_value(self, node: str, transition) -> np.ndarray:
        """Discounted value recomputed from the node's own stage values.

        Exposed for tests; equals values[node] by construction.
        """
        return solve_markov_values(self.stage_vector(node), transition, self.beta)


@dataclass(frozen=True)
class StrategyTable:
    """Stationary behavioral profile: one mixed strategy per (node, state)."""

    strategies: Mapping[tuple[str, int], np.ndarray]
    actions: Mapping[tuple[str, int], tuple[str, ...]]

    def probability(self, node: str, state: int, action_id: str) -> float:
        key = (node, state)
        acts = self.actions[key]
        return float(self.strategies[key][acts.index(action_id)])

    def keys(self):
        return self.strategies.keys()


@dataclass(frozen=True)
class AuditRecord:
    """One stage game whose fictitious play hit max_iters unconverged."""

    state: int
    level: int
    iterations: int
    players: tuple[str, ...]


@dataclass(frozen=True)
class SolveResult:
    """Everything backward induction produces in one pass."""

    strategies: StrategyTable
    values: ValueTable
    audit: tuple[AuditRecord, ...]
    traces: Mapping[tuple[int, int], FictitiousPlayTrace] = field(default_factory=dict)


def backward_induction(
    scenario: Scenario,
    hierarchy: HierarchyAssignment,
    state_model: StateModel | None = None,
    record_traces: bool = False,
) -> SolveResult:
    """Solve every stage game from the last level down to the first.

    For each state, the terminal level plays against the base stations
    with zero continuation; each earlier level uses the next level's
    stage values at the same state as continuations.  Fictitious play
    that fails to stabilize within the configured iteration budget is
    recorded in the audit (the run keeps its final profile and
    continues).  Finally each node's discounted value is solved against
    the joint channel chain.
    """
    if state_model is None:
        state_model = scenario.state_model()
    n_states = state_model.n_states
    node_r: dict[str, np.ndarray] = {}
    stage_values: dict[tuple[str, int], np.ndarray] = {}
    strategies: dict[tuple[str, int], np.ndarray] = {}
    actions: dict[tuple[str, int], tuple[str, ...]] = {}
    audit: list[AuditRecord] = []
    traces: dict[tuple[int, int], FictitiousPlayTrace] = {}

    for level in range(hierarchy.level_count, 0, -1):
        for state in range(n_states):
            assignment = hierarchy.for_state(state)
            players = assignment.players_at(level)
            if not players:
                continue
            if level == assignment.level_count:
                continuation = None
            else:
                continuation = {}
                for p in players:
                    for c in assignment.candidates[p]:
                        if c in node_r:
                            continuation[c] = float(node_r[c][state])
            game = build_stage_game(scenario, hierarchy, state, level, continuation)
            profile, trace = fictitious_play(
                game, scenario.game.fp_max_iters, scenario.game.fp_stop_tol
            )
            if record_traces:
                traces[(state, level)] = trace
            if not trace.converged:
                audit.append(
                    AuditRecord(
                        state=state,
                        level=level,
                        iterations=trace.iterations,
                        players=players,
                    )
                )
            values_here = equilibrium_value(game, profile)
            for i, p in enumerate(players):
                node_r.setdefault(p, np.zeros(n_states))[state] = values_here[i]
                stage_values.setdefault((p, level), np.zeros(n_states))[state] = (
                    values_here[i]
                )
                strategies[(p, state)] = profile[i]
                actions[(p, state)] = game.actions[i]

    beta = scenario.game.beta
    values = {
        node: solve_markov_values(vec, state_model.transition, beta)
        for node, vec in sorted(node_r.items())
    }
    return SolveResult(
        strategies=StrategyTable(strategies=strategies, actions=actions),
        values=ValueTable(
            n_states=n_states,
            beta=beta,
            values=values,
            stage_values=stage_values,
        ),
        audit=tuple(audit),
        traces=traces,
    )


# ---------------------------------------------------------------------------
# route realization


@dataclass(frozen=True)
class RoutePath:
    """A realized source-to-base-station path.

    states holds the system state at each hop (constant within one
    realization); hop_delays the single-flow delay estimate at each
    receiving node (the route's own flow plus that node's external
    arrivals; congestion from other routes is applied by the metrics
    layer, which recomputes delays under ensemble loads).
    """

    nodes: tuple[str, ...]
    states: tuple[int, ...]
    hop_delays: tuple[float, ...]
    algorithm: str = "game"

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ValueError("a route needs at least a source and a destination")
        if len(self.hop_delays) != len(self.nodes) - 1:
            raise ValueError("one delay per hop required")
        if len(self.states) != len(self.nodes) - 1:
            raise ValueError("one state per hop required")

    @property
    def source(self) -> str:
        return self.nodes[0]

    @property
    def destination(self) -> str:
        return self.nodes[-1]

    @property
    def total_delay(self) -> float:
        return float(sum(self.hop_delays))


def route_from_nodes(
    scenario: Scenario, nodes: Sequence[str], state: int, algorithm: str
) -> RoutePath:
    """Attach single-flow hop delays to an ordered node list.

    Each receiving node serves its own external arrivals plus the
    source's flow; the delay saturates at the configured cap.
    """
    nodes = tuple(nodes)
    carried = scenario.queue_params(nodes[0]).arrival_rate
    delays = []
    for node_id in nodes[1:]:
        q = scenario.queue_params(node_id)
        delays.append(
            float(
                pk_delay_capped(
                    q.arrival_rate + carried,
                    q.mean_service,
                    q.second_moment_service,
                    cap=scenario.game.delay_cap,
                )
            )
        )
    return RoutePath(
        nodes=nodes,
        states=(state,) * (len(nodes) - 1),
        hop_delays=tuple(delays),
        algorithm=algorithm,
    )


def realize_route(
    strategies: StrategyTable,
    scenario: Scenario,
    state: int,
    source: str,
    seed,
) -> RoutePath:
    """Sample one path hop by hop from the stored mixed strategies.

    Deterministic for a given seed (PCG64 via SeedSequence).  The walk
    ends when it reaches a base station; a node with no stored strategy
    that is not a base station raises DeadEndError.
    """
    rng = np.random.default_rng(as_seed_sequence(seed))
    cpc_ids = {n.id for n in scenario.nodes.cpc_stations}
    nodes = [source]
    current = source
    while current not in cpc_ids:
        key = (current, state)
        if key not in strategies.strategies:
            raise DeadEndError(
                f"node {current} has no strategy at state {state}; route so far {nodes}"
            )
        probs = strategies.strategies[key]
        acts = strategies.actions[key]
        choice = int(rng.choice(len(acts), p=probs))
        current = acts[choice]
        nodes.append(current)
        if len(nodes) > len(strategies.strategies) + 2:
            raise DeadEndError(f"route failed to terminate: {nodes}")
    return route_from_nodes(scenario, nodes, state, "game")
