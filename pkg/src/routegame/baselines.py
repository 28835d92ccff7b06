"""Reference routing algorithms: shortest path and along-axis hopping.

Both baselines are state-blind: they ignore channel occupancy and queue
state entirely, which is exactly what makes them useful comparison
points for the game solution.  The graph baseline minimizes total
Euclidean hop distance via Dijkstra; the axis baseline walks the relay
nodes nearest to evenly spaced points along the interference-minimal
axis, so all sources funnel through the same spine.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dynprog import RoutePath, route_from_nodes
from .errors import UnreachableError
from .geometry import Corridor, MedialAxis
from .scenario import NodeSet, Scenario

WEIGHT_TIE_EPS = 1e-12


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph over node ids with positive Euclidean weights."""

    vertices: tuple[str, ...]
    edges: Mapping[str, tuple[tuple[str, float], ...]]

    def neighbors(self, node: str) -> tuple[tuple[str, float], ...]:
        return self.edges.get(node, ())


def build_graph(positions: Mapping[str, tuple[float, float]], max_range: float) -> WeightedGraph:
    """Connect every pair of nodes within max_range of each other.

    Weights are Euclidean distances; self-loops and coincident nodes
    (zero distance) are dropped to keep all weights positive.
    """
    ids = tuple(sorted(positions))
    edges: dict[str, list[tuple[str, float]]] = {i: [] for i in ids}
    for a_pos, a in enumerate(ids):
        ax, ay = positions[a]
        for b in ids[a_pos + 1 :]:
            bx, by = positions[b]
            d = math.hypot(ax - bx, ay - by)
            if 0.0 < d <= max_range:
                edges[a].append((b, d))
                edges[b].append((a, d))
    return WeightedGraph(
        vertices=ids, edges={i: tuple(sorted(edges[i])) for i in ids}
    )


def dijkstra_route(
    graph: WeightedGraph,
    source: str,
    dests: Sequence[str],
    scenario: Scenario | None = None,
    state: int = 0,
) -> RoutePath | tuple[str, ...]:
    """Minimum-total-distance path from source to the closest destination.

    Distance ties (within 1e-12) are broken toward the lexicographically
    smaller node id, both for predecessors and for the final destination
    choice, so results are deterministic.  Returns a RoutePath when a
    scenario is supplied for delay annotation, else the bare node tuple.
    """
    if source not in graph.edges:
        raise UnreachableError(f"source {source} is not in the graph")
    dest_set = set(dests)
    if not dest_set:
        raise UnreachableError("no destinations given")
    dist: dict[str, float] = {source: 0.0}
    pred: dict[str, str | None] = {source: None}
    done: set[str] = set()
    heap: list[tuple[float, str]] = [(0.0, source)]
    while heap:
        d, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        for nbr, w in graph.neighbors(node):
            nd = d + w
            old = dist.get(nbr)
            if old is None or nd < old - WEIGHT_TIE_EPS:
                dist[nbr] = nd
                pred[nbr] = node
                heapq.heappush(heap, (nd, nbr))
            elif abs(nd - old) <= WEIGHT_TIE_EPS and node < pred[nbr]:
                pred[nbr] = node

    reachable = sorted(
        (dist[d], d) for d in dest_set if d in dist
    )
    if not reachable:
        raise UnreachableError(f"no destination reachable from {source}")
    target = reachable[0][1]
    path = [target]
    while path[-1] != source:
        path.append(pred[path[-1]])
    path.reverse()
    if scenario is None:
        return tuple(path)
    return route_from_nodes(scenario, path, state, "dijkstra")


def ma_route(
    axis: MedialAxis,
    corridor: Corridor,
    nodes: NodeSet,
    source: str,
    dests: Sequence[str] | None = None,
    spacing: float | None = None,
    scenario: Scenario | None = None,
    state: int = 0,
) -> RoutePath | tuple[str, ...]:
    """Hop along the axis spine: nearest relays to evenly spaced anchors.

    Anchors sit at fixed arc positions (every `spacing` km from the
    axis origin), so every source walks the same spine nodes from its
    entry point onward.  The source first connects to the corridor
    relay nearest to it, then visits the anchor relays in increasing
    arc order, and finally the destination nearest the axis end.  The
    shared spine is the congestion this baseline is known for.
    """
    by_id = nodes.by_id()
    if source not in by_id:
        raise UnreachableError(f"source {source} is unknown")
    source_ids = {n.id for n in nodes.sources}
    cpc_ids = {n.id for n in nodes.cpc_stations}
    relay_ids = [
        m for m in corridor.members if m not in source_ids and m not in cpc_ids
    ]
    if not relay_ids:
        raise UnreachableError("no corridor relays to hop along")
    if spacing is None or spacing <= 0.0:
        raise ValueError("anchor spacing must be positive")

    def nearest_relay(xy) -> str:
        best = min(
            relay_ids,
            key=lambda m: (
                math.hypot(xy[0] - corridor.positions[m][0], xy[1] - corridor.positions[m][1]),
                m,
            ),
        )
        return best

    def arc_of(member: str) -> float:
        return float(axis.arc_length[corridor.nearest_index[member]])

    entry = nearest_relay(by_id[source].xy)
    hops = {entry}
    arc = spacing
    while arc < axis.total_length:
        i = int(np.searchsorted(axis.arc_length, arc))
        i = min(i, len(axis.arc_length) - 1)
        hops.add(nearest_relay(axis.points[i]))
        arc += spacing
    ordered = sorted(hops, key=lambda m: (arc_of(m), m))
    # keep only the spine from the entry point onward
    ordered = [m for m in ordered if arc_of(m) >= arc_of(entry)]

    if dests is None:
        dests = sorted(cpc_ids)
    if not dests:
        raise UnreachableError("no destinations given")
    end_xy = axis.points[-1]
    dest = min(
        dests,
        key=lambda d: (math.hypot(by_id[d].xy[0] - end_xy[0], by_id[d].xy[1] - end_xy[1]), d),
    )
    path = [source] + ordered + [dest]
    if scenario is None:
        return tuple(path)
    return route_from_nodes(scenario, path, state, "ma")
