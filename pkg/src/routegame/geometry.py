"""Safe-area geometry: interference-minimal axis, corridor, hop levels.

The axis is the valley of the worst-case primary interference field,
extracted on a regular grid.  Every primary user emits power that decays
with distance to its footprint edge; the region boundary acts as one
more pseudo-emitter (at the strongest primary's power) so that the
valley stays clear of the border as well.  Grid cells that are local
minima of the field along a row or a column form the ridge set, and the
axis is the shortest ridge path from the cell nearest the sources to the
cell nearest the base stations.

A node belongs to the relaxed corridor when its distance to the axis is
at most (1 + omega) times the axis clearance at the nearest axis point
and it does not sit strictly inside any footprint.  Corridor nodes are
then banded into consecutive levels along the axis, one interference
range per level, which defines the stage games that the solver plays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import NoAxisError, UnreachableError
from .scenario import NodeSet, PrimaryUser, Scenario, StateModel

OCCUPIED_LABEL = "occupied"


@dataclass(frozen=True)
class MedialAxis:
    """Ordered axis polyline with per-point field data.

    points runs from the source side to the base-station side.
    received_power is the weakest single-primary power at each point
    (the best channel an SU could perceive there), clearance the
    distance to the nearest footprint edge, arc_length the cumulative
    polyline length from the first point.
    """

    points: np.ndarray
    received_power: np.ndarray
    clearance: np.ndarray
    arc_length: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise NoAxisError(f"axis polyline has invalid shape {pts.shape}")
        if pts.shape[0] > 1:
            steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            if np.any(steps <= 0.0):
                raise NoAxisError("axis polyline repeats a point")

    @property
    def total_length(self) -> float:
        return float(self.arc_length[-1])

    def nearest_index(self, xy) -> int:
        d2 = (self.points[:, 0] - xy[0]) ** 2 + (self.points[:, 1] - xy[1]) ** 2
        return int(np.argmin(d2))


def received_power(pus: Sequence[PrimaryUser], xy, alpha: float, d_min: float) -> float:
    """Weakest single-primary power at a point (what an SU perceives at best).

    Distances are taken to footprint edges and clipped below at d_min.
    The axis stores this per point; ridge extraction itself uses the
    max-over-emitters field, which is the binding constraint.
    """
    per_pu = []
    for pu in pus:
        d = max(pu.footprint_distance(xy), d_min)
        per_pu.append(pu.tx_power * d ** (-alpha))
    return min(per_pu)


def _field_grid(scenario: Scenario):
    """Grid coordinates and the pseudo-power field used for ridge extraction."""
    region = scenario.region
    res = scenario.game.grid_resolution
    alpha = scenario.radio.path_loss_alpha
    nx = int(math.floor(region.width / res + 1e-9)) + 1
    ny = int(math.floor(region.height / res + 1e-9)) + 1
    if nx < 3 or ny < 3:
        raise NoAxisError(
            f"grid_resolution {res} leaves a {nx}x{ny} grid; need at least 3x3"
        )
    xs = region.x_min + res * np.arange(nx)
    ys = region.y_min + res * np.arange(ny)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")

    edge_dist = np.empty((len(scenario.pus), nx, ny))
    for k, pu in enumerate(scenario.pus):
        edge_dist[k] = np.hypot(xx - pu.center[0], yy - pu.center[1]) - pu.footprint_radius
    powers = [
        pu.tx_power * np.maximum(edge_dist[k], res) ** (-alpha)
        for k, pu in enumerate(scenario.pus)
    ]
    boundary = np.minimum.reduce(
        [xx - region.x_min, region.x_max - xx, yy - region.y_min, region.y_max - yy]
    )
    tx_max = max(pu.tx_power for pu in scenario.pus)
    powers.append(tx_max * np.maximum(boundary, res) ** (-alpha))
    field = np.maximum.reduce(powers)
    return xs, ys, field, edge_dist, boundary


def _ridge_mask(field, edge_dist, boundary):
    """Cells that are one-sided-strict local minima along a row or column."""
    ridge = np.zeros(field.shape, dtype=bool)
    c, lo, hi = field[1:-1, :], field[:-2, :], field[2:, :]
    ridge[1:-1, :] |= (c <= lo) & (c <= hi) & ((c < lo) | (c < hi))
    c, lo, hi = field[:, 1:-1], field[:, :-2], field[:, 2:]
    ridge[:, 1:-1] |= (c <= lo) & (c <= hi) & ((c < lo) | (c < hi))
    ridge &= np.min(edge_dist, axis=0) > 0.0  # never inside a footprint
    ridge &= boundary > 0.0  # strictly interior
    return ridge


def compute_medial_axis(scenario: Scenario) -> MedialAxis:
    """Extract the interference-minimal axis for a scenario.

    Deterministic: the grid, the field, the ridge set, and the shortest
    ridge path depend only on the scenario document.  Raises NoAxisError
    when the footprints leave no admissible valley.
    """
    xs, ys, field, edge_dist, boundary = _field_grid(scenario)
    res = scenario.game.grid_resolution
    ridge = _ridge_mask(field, edge_dist, boundary)
    idx = np.argwhere(ridge)
    if idx.shape[0] == 0:
        raise NoAxisError("no interference valley found; footprints cover the region")

    cell_of = {(int(i), int(j)): n for n, (i, j) in enumerate(idx)}
    rows, cols, weights = [], [], []
    for di, dj in ((0, 1), (1, 0), (1, 1), (1, -1)):
        for n, (i, j) in enumerate(idx):
            m = cell_of.get((int(i) + di, int(j) + dj))
            if m is not None:
                rows.append(n)
                cols.append(m)
                weights.append(res * math.hypot(di, dj))
    graph = coo_matrix(
        (weights, (rows, cols)), shape=(idx.shape[0], idx.shape[0])
    ).tocsr()

    pts = np.column_stack([xs[idx[:, 0]], ys[idx[:, 1]]])
    src_centroid = np.mean([n.xy for n in scenario.nodes.sources], axis=0)
    cpc_centroid = np.mean([n.xy for n in scenario.nodes.cpc_stations], axis=0)
    d_src = np.einsum("ij,ij->i", pts - src_centroid, pts - src_centroid)
    d_cpc = np.einsum("ij,ij->i", pts - cpc_centroid, pts - cpc_centroid)

    # endpoints must share a connected ridge component; pick the component
    # that approaches both the sources and the base stations best
    n_comp, labels = connected_components(graph, directed=False)
    best = min(
        range(n_comp),
        key=lambda c: (float(d_src[labels == c].min() + d_cpc[labels == c].min()), c),
    )
    members = np.nonzero(labels == best)[0]
    start = members[int(np.argmin(d_src[members]))]
    end = members[int(np.argmin(d_cpc[members]))]

    if start == end:
        order = [int(start)]
    else:
        _, predecessors = dijkstra(
            graph, directed=False, indices=start, return_predecessors=True
        )
        if predecessors[end] < 0:
            raise NoAxisError("ridge endpoints are disconnected")
        order = [int(end)]
        while order[-1] != start:
            order.append(int(predecessors[order[-1]]))
        order.reverse()

    path = pts[order]
    alpha = scenario.radio.path_loss_alpha
    clear = np.min(edge_dist, axis=0)[idx[order, 0], idx[order, 1]]
    power = np.array([received_power(scenario.pus, p, alpha, res) for p in path])
    if path.shape[0] > 1:
        seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
    else:
        arc = np.zeros(1)
    return MedialAxis(
        points=path,
        received_power=power,
        clearance=np.asarray(clear, dtype=float),
        arc_length=arc,
    )


# ---------------------------------------------------------------------------
# corridor


@dataclass(frozen=True)
class Corridor:
    """Axis plus the nodes admitted within its relaxed radius.

    radius[i] = (1 + omega) * clearance[i] is the admissible distance
    from axis point i.  members is sorted by node id; nearest_index and
    positions are keyed by member id.
    """

    axis: MedialAxis
    omega: float
    members: tuple[str, ...]
    nearest_index: Mapping[str, int]
    positions: Mapping[str, tuple[float, float]]

    @property
    def radius(self) -> np.ndarray:
        return (1.0 + self.omega) * self.axis.clearance


def corridor_members(
    axis: MedialAxis,
    nodes: NodeSet,
    pus: Sequence[PrimaryUser],
    omega: float,
) -> frozenset[str]:
    """Ids of nodes inside the relaxed corridor.

    A node qualifies when its distance to the nearest axis point is at
    most (1 + omega) times that point's clearance, and it is not
    strictly inside any primary footprint.  Membership grows
    monotonically with omega.
    """
    members = set()
    for node in nodes.all_nodes():
        if any(pu.footprint_distance(node.xy) < 0.0 for pu in pus):
            continue
        i = axis.nearest_index(node.xy)
        d = math.hypot(node.xy[0] - axis.points[i, 0], node.xy[1] - axis.points[i, 1])
        if d <= (1.0 + omega) * axis.clearance[i]:
            members.add(node.id)
    return frozenset(members)


def build_corridor(
    axis: MedialAxis,
    nodes: NodeSet,
    pus: Sequence[PrimaryUser],
    omega: float,
) -> Corridor:
    members = sorted(corridor_members(axis, nodes, pus, omega))
    by_id = nodes.by_id()
    nearest = {m: axis.nearest_index(by_id[m].xy) for m in members}
    positions = {m: by_id[m].xy for m in members}
    return Corridor(
        axis=axis,
        omega=omega,
        members=tuple(members),
        nearest_index=nearest,
        positions=positions,
    )


# ---------------------------------------------------------------------------
# hierarchy


def axis_band(arc: float, total_length: float, level_count: int) -> int:
    """Level (1-based) of an arc-length position: equal-width bands."""
    if total_length <= 0.0:
        return 1
    band = int(arc / (total_length / level_count))
    return min(band, level_count - 1) + 1


def level_count_for(axis: MedialAxis, interference_range: float) -> int:
    return max(1, math.ceil(axis.total_length / interference_range))


@dataclass(frozen=True)
class LevelAssignment:
    """Hierarchy for one system state.

    level_of covers every admitted forwarding node (all sources at
    level 1, corridor relays banded by axis arc length).  candidates
    maps each forwarding node to its ordered next-hop set: nodes of the
    next level within radio range, except that the last level always
    targets the full base-station set.  excluded lists relay ids that
    occupied footprints removed from candidate sets in this state.
    """

    state: int
    level_count: int
    level_of: Mapping[str, int]
    candidates: Mapping[str, tuple[str, ...]]
    excluded: frozenset[str]

    @property
    def admitted(self) -> frozenset[str]:
        return frozenset(self.level_of)

    def players_at(self, level: int) -> tuple[str, ...]:
        return tuple(sorted(n for n, l in self.level_of.items() if l == level))


@dataclass(frozen=True)
class HierarchyAssignment:
    """Level assignments for every system state."""

    by_state: tuple[LevelAssignment, ...]
    level_count: int

    def for_state(self, state: int) -> LevelAssignment:
        return self.by_state[state]


def _state_excluded(
    scenario: Scenario, corridor: Corridor, state: int, state_model: StateModel
) -> frozenset[str]:
    """Relays whose closest primary user covers them and is occupied."""
    labels = state_model.states[state]
    excluded = set()
    source_ids = {n.id for n in scenario.nodes.sources}
    cpc_ids = {n.id for n in scenario.nodes.cpc_stations}
    for node_id in corridor.members:
        if node_id in source_ids or node_id in cpc_ids:
            continue
        xy = corridor.positions[node_id]
        dists = [pu.footprint_distance(xy) for pu in scenario.pus]
        k = int(np.argmin(dists))
        if dists[k] <= 0.0 and labels[k] == OCCUPIED_LABEL:
            excluded.add(node_id)
    return frozenset(excluded)


def assign_levels(
    scenario: Scenario,
    corridor: Corridor,
    state: int,
    state_model: StateModel | None = None,
) -> LevelAssignment:
    """Band corridor nodes into levels and derive candidate sets.

    Sources always sit at level 1; corridor relays take the band of
    their nearest axis point, one interference range of arc per band.
    Candidates of a level-l node are the next level's nodes within
    radio range (minus occupied-footprint exclusions); level-L nodes
    target the full base-station set.  Relays whose candidate set comes
    up empty are pruned bottom-up; if a source ends up with no
    candidates the hierarchy is infeasible and UnreachableError names it.
    """
    if state_model is None:
        state_model = scenario.state_model()
    if not 0 <= state < state_model.n_states:
        raise ValueError(f"state index {state} out of range")
    axis = corridor.axis
    rng_km = scenario.radio.interference_range
    level_count = level_count_for(axis, rng_km)

    source_ids = {n.id for n in scenario.nodes.sources}
    cpc_ids = {n.id for n in scenario.nodes.cpc_stations}
    level_of: dict[str, int] = {s: 1 for s in sorted(source_ids)}
    for node_id in corridor.members:
        if node_id in source_ids or node_id in cpc_ids:
            continue
        arc = float(axis.arc_length[corridor.nearest_index[node_id]])
        level_of[node_id] = axis_band(arc, axis.total_length, level_count)

    excluded = _state_excluded(scenario, corridor, state, state_model)
    positions = dict(corridor.positions)
    for node in scenario.nodes.sources + scenario.nodes.cpc_stations:
        positions.setdefault(node.id, node.xy)

    cpc_tuple = tuple(sorted(cpc_ids))
    admitted = dict(level_of)
    candidates: dict[str, tuple[str, ...]] = {}
    for level in range(level_count, 0, -1):
        at_level = sorted(n for n, l in admitted.items() if l == level)
        for node_id in at_level:
            if level == level_count:
                candidates[node_id] = cpc_tuple  # terminal rule: full CPC set
                continue
            xy = positions[node_id]
            cands = tuple(
                c
                for c in sorted(admitted)
                if admitted[c] == level + 1
                and c not in excluded
                and math.hypot(xy[0] - positions[c][0], xy[1] - positions[c][1])
                <= rng_km
            )
            if cands:
                candidates[node_id] = cands
            elif node_id in source_ids:
                err = UnreachableError(
                    f"source {node_id} has no reachable level-{level + 1} node "
                    f"in state {state}"
                )
                err.node = node_id
                raise err
            else:
                del admitted[node_id]  # dead-end relay: prune and re-derive below

    # pruning may have emptied candidate sets that referenced pruned relays
    changed = True
    while changed:
        changed = False
        for node_id in sorted(candidates):
            if node_id not in admitted:
                del candidates[node_id]
                continue
            if admitted[node_id] == level_count:
                continue
            kept = tuple(c for c in candidates[node_id] if c in admitted)
            if kept != candidates[node_id]:
                if kept:
                    candidates[node_id] = kept
                elif node_id in source_ids:
                    err = UnreachableError(
                        f"source {node_id} lost all candidates to pruning "
                        f"in state {state}"
                    )
                    err.node = node_id
                    raise err
                else:
                    del admitted[node_id]
                    del candidates[node_id]
                changed = True

    return LevelAssignment(
        state=state,
        level_count=level_count,
        level_of={n: admitted[n] for n in sorted(admitted)},
        candidates={n: candidates[n] for n in sorted(candidates)},
        excluded=excluded,
    )


def build_hierarchy(
    scenario: Scenario,
    corridor: Corridor,
    state_model: StateModel | None = None,
) -> HierarchyAssignment:
    """Level assignments for all system states (constant level count)."""
    if state_model is None:
        state_model = scenario.state_model()
    by_state = tuple(
        assign_levels(scenario, corridor, s, state_model)
        for s in range(state_model.n_states)
    )
    return HierarchyAssignment(by_state=by_state, level_count=by_state[0].level_count)
