"""Interference and delay metrics over realized routes, plus ensembles.

The comparison harness replays the same seeded deployments and channel
states through all three routing algorithms (game, shortest-path,
along-axis), computes each route's aggregate interference at the
primary users and its end-to-end delay under that algorithm's own
realized loads, and bins both metrics by straight-line source-to-
destination distance after normalizing by the cross-algorithm maximum.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .baselines import build_graph, dijkstra_route, ma_route
from .dynprog import RoutePath, backward_induction, realize_route
from .errors import UnreachableError
from .geometry import (
    MedialAxis,
    OCCUPIED_LABEL,
    build_corridor,
    build_hierarchy,
    compute_medial_axis,
    level_count_for,
)
from .queueing import pk_delay_capped
from .scenario import (
    Node,
    NodeSet,
    PrimaryUser,
    RadioParams,
    Scenario,
    StateModel,
    as_seed_sequence,
    generate_deployment,
)

ALGORITHMS = ("game", "dijkstra", "ma")
N_BINS = 10

# spawn-key namespace separating ensemble streams from other consumers
# of the scenario seed
COMPARE_STREAM = 17


def occupied_weight(pu: PrimaryUser) -> float:
    """Stationary probability that this user's channel is occupied.

    Falls back to 1.0 when no channel state is labeled 'occupied'.
    """
    if OCCUPIED_LABEL not in pu.channel_states:
        return 1.0
    return float(pu.stationary()[pu.channel_states.index(OCCUPIED_LABEL)])


def route_interference(
    route: RoutePath,
    pus: Sequence[PrimaryUser],
    radio: RadioParams,
    positions: Mapping[str, tuple[float, float]],
    d_min: float,
    occupied: Sequence[bool] | None = None,
) -> np.ndarray:
    """Aggregate received power at each primary user from a route's hops.

    Every transmitting hop (all nodes except the destination) within
    the coupling cutoff footprint_radius + interference_range of a user
    contributes tx_power * max(d, d_min)^-alpha, d taken to the user's
    center.  With `occupied` given, user k counts fully when occupied[k]
    and not at all otherwise; without it, contributions are weighted by
    each user's stationary occupied probability.
    """
    out = np.zeros(len(pus))
    for k, pu in enumerate(pus):
        if occupied is None:
            weight = occupied_weight(pu)
        else:
            weight = 1.0 if occupied[k] else 0.0
        if weight == 0.0:
            continue
        cutoff = pu.footprint_radius + radio.interference_range
        total = 0.0
        for node_id in route.nodes[:-1]:
            x, y = positions[node_id]
            d = math.hypot(x - pu.center[0], y - pu.center[1])
            if d <= cutoff:
                total += radio.tx_power * max(d, d_min) ** (-radio.path_loss_alpha)
        out[k] = weight * total
    return out


def ensemble_loads(routes: Sequence[RoutePath], scenario: Scenario) -> dict[str, float]:
    """Total arrival rate per node when all given routes run at once.

    Each receiving node serves its own external arrivals plus the
    source flow of every route passing through it; this is where the
    shared-spine baseline pays for funneling all sources together.
    """
    loads: dict[str, float] = {}
    for route in routes:
        flow = scenario.queue_params(route.source).arrival_rate
        for node_id in route.nodes[1:]:
            if node_id not in loads:
                loads[node_id] = scenario.queue_params(node_id).arrival_rate
            loads[node_id] += flow
    return loads


def route_delay(
    route: RoutePath, scenario: Scenario, loads: Mapping[str, float]
) -> float:
    """End-to-end expected delay of a route under given node loads."""
    total = 0.0
    for node_id in route.nodes[1:]:
        q = scenario.queue_params(node_id)
        lam = loads.get(node_id, q.arrival_rate)
        total += float(
            pk_delay_capped(
                lam, q.mean_service, q.second_moment_service, cap=scenario.game.delay_cap
            )
        )
    return total


# ---------------------------------------------------------------------------
# ensemble comparison


@dataclass(frozen=True)
class MetricSample:
    seed: int
    algorithm: str
    source: str
    distance: float
    raw: float
    normalized: float


@dataclass(frozen=True)
class RouteRecord:
    seed: int
    algorithm: str
    source: str
    state: int
    nodes: tuple[str, ...]
    points: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class SkipRecord:
    seed: int
    source: str
    reason: str


@dataclass(frozen=True)
class BinRow:
    center: float
    value: float
    n: int


@dataclass(frozen=True)
class ComparisonReport:
    """Paired interference and delay samples plus shared distance bins."""

    algorithms: tuple[str, ...]
    n_seeds: int
    interference: tuple[MetricSample, ...]
    delay: tuple[MetricSample, ...]
    routes: tuple[RouteRecord, ...]
    skipped: tuple[SkipRecord, ...]
    bin_edges: np.ndarray

    def binned(self, metric: str, algorithm: str, stat: str = "mean") -> list[BinRow]:
        """Per-bin aggregate of the normalized metric for one algorithm."""
        samples = {"interference": self.interference, "delay": self.delay}[metric]
        values = [s for s in samples if s.algorithm == algorithm]
        agg = {"mean": np.mean, "median": np.median}[stat]
        rows = []
        edges = self.bin_edges
        for b in range(len(edges) - 1):
            centre = 0.5 * (edges[b] + edges[b + 1])
            hits = [
                s.normalized
                for s in values
                if _bin_of(s.distance, edges) == b
            ]
            rows.append(
                BinRow(center=float(centre), value=float(agg(hits)) if hits else float("nan"), n=len(hits))
            )
        return rows


def _bin_of(distance: float, edges: np.ndarray) -> int:
    b = int(np.digitize(distance, edges[1:-1], right=False))
    return min(max(b, 0), len(edges) - 2)


def _sample_sources(scenario: Scenario, axis: MedialAxis, rng) -> tuple[Node, ...]:
    """Redraw source positions inside the first-level corridor tube.

    Keeps each source's id but places it at a uniform arc position in
    the first band with an area-uniform lateral offset, rejecting spots
    outside the region or inside a footprint (50 tries, then the axis
    point itself).  This spreads source-to-destination distances across
    replications while keeping every source able to reach level 2.
    """
    level_count = level_count_for(axis, scenario.radio.interference_range)
    band_end = axis.total_length / level_count
    out = []
    for src in scenario.nodes.sources:
        xy = None
        for _ in range(50):
            t = rng.uniform(0.0, band_end)
            i = min(
                int(np.searchsorted(axis.arc_length, t)), len(axis.arc_length) - 1
            )
            base = axis.points[i]
            r_max = 0.9 * (1.0 + scenario.game.omega) * axis.clearance[i]
            rho = r_max * math.sqrt(rng.uniform())
            phi = rng.uniform(0.0, 2.0 * math.pi)
            cand = (float(base[0] + rho * math.cos(phi)), float(base[1] + rho * math.sin(phi)))
            if scenario.region.contains(cand) and all(
                pu.footprint_distance(cand) > 0.0 for pu in scenario.pus
            ):
                xy = cand
                break
        if xy is None:
            i = min(
                int(np.searchsorted(axis.arc_length, band_end / 2)),
                len(axis.arc_length) - 1,
            )
            xy = (float(axis.points[i][0]), float(axis.points[i][1]))
        out.append(Node(id=src.id, xy=xy))
    return tuple(out)


@dataclass
class _SeedOutcome:
    seed: int
    samples: list  # (algorithm, source, distance, interference_raw, delay_raw)
    routes: list[RouteRecord]
    skipped: list[SkipRecord]


def _run_seed(
    scenario: Scenario,
    axis: MedialAxis,
    state_model: StateModel,
    index: int,
    algorithms: Sequence[str],
) -> _SeedOutcome:
    ss = np.random.SeedSequence(entropy=scenario.seed, spawn_key=(COMPARE_STREAM, index))
    deploy_ss, source_ss, state_ss, route_ss = ss.spawn(4)

    base = scenario.nodes
    relays = base.relays
    if base.n_random_relays:
        relays = relays + generate_deployment(
            scenario.region, base.n_random_relays, deploy_ss
        )
    sources = _sample_sources(scenario, axis, np.random.default_rng(source_ss))
    skipped: list[SkipRecord] = []

    scn = None
    corridor = None
    hierarchy = None
    while sources:
        nodes = NodeSet(
            sources=sources, relays=relays, cpc_stations=base.cpc_stations,
            n_random_relays=0,
        )
        # dropping an unreachable source must also drop its queue override,
        # or the rebuilt scenario fails validation
        known = nodes.by_id()
        overrides = {
            k: v for k, v in scenario.queue_overrides.items() if k in known
        }
        scn = replace(scenario, nodes=nodes, queue_overrides=overrides)
        corridor = build_corridor(axis, nodes, scn.pus, scn.game.omega)
        try:
            hierarchy = build_hierarchy(scn, corridor, state_model)
            break
        except UnreachableError as exc:
            bad = getattr(exc, "node", None)
            if bad is None or all(s.id != bad for s in sources):
                raise
            skipped.append(SkipRecord(seed=index, source=bad, reason=str(exc)))
            sources = tuple(s for s in sources if s.id != bad)
    if not sources:
        return _SeedOutcome(seed=index, samples=[], routes=[], skipped=skipped)

    nodes = scn.nodes
    solve = backward_induction(scn, hierarchy, state_model)
    rng_state = np.random.default_rng(state_ss)
    state = int(rng_state.choice(state_model.n_states, p=state_model.stationary))
    occupied = [
        label == OCCUPIED_LABEL for label in state_model.states[state]
    ]

    positions = {n.id: n.xy for n in nodes.all_nodes()}
    source_ids = {n.id for n in nodes.sources}
    cpc_ids = sorted(n.id for n in nodes.cpc_stations)
    graph_positions = {
        m: corridor.positions[m] for m in corridor.members
    }
    for n in nodes.sources + nodes.cpc_stations:
        graph_positions[n.id] = n.xy
    graph = build_graph(graph_positions, scn.radio.interference_range)

    route_children = route_ss.spawn(len(nodes.sources))
    routes: dict[str, list[RoutePath]] = {a: [] for a in algorithms}
    per_source: list[tuple[str, dict[str, RoutePath]]] = []
    for src, child in zip(nodes.sources, route_children):
        found: dict[str, RoutePath] = {}
        try:
            if "game" in algorithms:
                found["game"] = realize_route(solve.strategies, scn, state, src.id, child)
            if "dijkstra" in algorithms:
                found["dijkstra"] = dijkstra_route(graph, src.id, cpc_ids, scn, state)
            if "ma" in algorithms:
                found["ma"] = ma_route(
                    axis, corridor, nodes, src.id,
                    spacing=scn.radio.interference_range, scenario=scn, state=state,
                )
        except UnreachableError as exc:
            skipped.append(SkipRecord(seed=index, source=src.id, reason=str(exc)))
            continue  # paired skip: drop the source for every algorithm
        per_source.append((src.id, found))
        for algo, route in found.items():
            routes[algo].append(route)

    loads = {a: ensemble_loads(routes[a], scn) for a in algorithms}
    samples = []
    records = []
    for src_id, found in per_source:
        for algo in algorithms:
            route = found[algo]
            sx, sy = positions[src_id]
            dx, dy = positions[route.destination]
            distance = math.hypot(sx - dx, sy - dy)
            interf = float(
                route_interference(
                    route, scn.pus, scn.radio, positions,
                    d_min=scn.game.grid_resolution, occupied=occupied,
                ).sum()
            )
            delay = route_delay(route, scn, loads[algo])
            samples.append((algo, src_id, distance, interf, delay))
            records.append(
                RouteRecord(
                    seed=index, algorithm=algo, source=src_id, state=state,
                    nodes=route.nodes,
                    points=tuple(positions[n] for n in route.nodes),
                )
            )
    return _SeedOutcome(seed=index, samples=samples, routes=records, skipped=skipped)


def ensemble_compare(
    scenario: Scenario,
    algorithms: Sequence[str] = ALGORITHMS,
    n_seeds: int = 20,
    threads: int = 1,
) -> ComparisonReport:
    """Run the paired algorithm comparison over seeded replications.

    Every replication draws its own relay deployment, source positions,
    and channel state, shared verbatim by all algorithms; unreachable
    sources are skipped for all algorithms alike so samples stay paired.
    Results are merged in seed order, making the report (and any files
    derived from it) independent of the thread count.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    unknown = set(algorithms) - set(ALGORITHMS)
    if unknown:
        raise ValueError(f"unknown algorithms: {sorted(unknown)}")
    axis = compute_medial_axis(scenario)
    state_model = scenario.state_model()

    if threads <= 1:
        outcomes = [
            _run_seed(scenario, axis, state_model, i, algorithms)
            for i in range(n_seeds)
        ]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(
                pool.map(
                    lambda i: _run_seed(scenario, axis, state_model, i, algorithms),
                    range(n_seeds),
                )
            )

    flat = [(o.seed, *s) for o in outcomes for s in o.samples]
    routes = tuple(r for o in outcomes for r in o.routes)
    skipped = tuple(s for o in outcomes for s in o.skipped)
    if not flat:
        raise UnreachableError("no source produced a route in any replication")

    distances = np.array([s[3] for s in flat])
    lo, hi = float(distances.min()), float(distances.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, N_BINS + 1)
    interf_max = max(s[4] for s in flat)
    delay_max = max(s[5] for s in flat)

    interference = []
    delay = []
    for seed, algo, src, dist, interf_raw, delay_raw in flat:
        interference.append(
            MetricSample(
                seed=seed, algorithm=algo, source=src, distance=dist,
                raw=interf_raw,
                normalized=interf_raw / interf_max if interf_max > 0 else 0.0,
            )
        )
        delay.append(
            MetricSample(
                seed=seed, algorithm=algo, source=src, distance=dist,
                raw=delay_raw,
                normalized=delay_raw / delay_max if delay_max > 0 else 0.0,
            )
        )
    return ComparisonReport(
        algorithms=tuple(algorithms),
        n_seeds=n_seeds,
        interference=tuple(interference),
        delay=tuple(delay),
        routes=routes,
        skipped=skipped,
        bin_edges=edges,
    )
