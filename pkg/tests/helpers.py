"""Shared builders for synthetic test scenarios."""

from __future__ import annotations

import numpy as np

from routegame.geometry import HierarchyAssignment, LevelAssignment
from routegame.scenario import (
    GameParams,
    Node,
    NodeSet,
    PrimaryUser,
    RadioParams,
    Region,
    Scenario,
)
from routegame.queueing import QueueParams


def make_pu(
    pu_id=0,
    center=(0.0, 0.0),
    radius=0.3,
    tx_power=1.0,
    p_occ_stay=0.9,
    p_un_stay=0.7,
):
    """Two-state PU with labels (occupied, unoccupied)."""
    transition = np.array(
        [
            [p_occ_stay, 1.0 - p_occ_stay],
            [1.0 - p_un_stay, p_un_stay],
        ]
    )
    return PrimaryUser(
        id=pu_id,
        center=np.asarray(center, dtype=float),
        footprint_radius=radius,
        tx_power=tx_power,
        channel_states=("occupied", "unoccupied"),
        transition=transition,
    )


def make_scenario(
    sources,
    relays,
    cpcs,
    pus=None,
    region=((-2.0, 2.0), (-2.0, 2.0)),
    queue_default=(0.1, 0.5, 0.5),
    queue_overrides=None,
    beta=0.5,
    omega=0.5,
    interference_range=1.0,
    grid_resolution=0.05,
    path_loss_alpha=3.0,
    tx_power=0.5,
    seed=7,
    fp_max_iters=1000,
    fp_stop_tol=0.01,
    delay_cap=1.0e4,
    n_random_relays=0,
):
    """Scenario from (id, x, y) node triples with sensible defaults."""
    if pus is None:
        pus = (make_pu(),)
    lam, m1, m2 = queue_default
    overrides = {}
    for node_id, params in (queue_overrides or {}).items():
        overrides[node_id] = QueueParams(*params)
    (x_min, x_max), (y_min, y_max) = region
    return Scenario(
        region=Region(x_min=x_min, x_max=x_max, y_min=y_min, y_max=y_max),
        pus=tuple(pus),
        nodes=NodeSet(
            sources=tuple(Node(i, np.array([x, y])) for i, x, y in sources),
            relays=tuple(Node(i, np.array([x, y])) for i, x, y in relays),
            cpc_stations=tuple(Node(i, np.array([x, y])) for i, x, y in cpcs),
            n_random_relays=n_random_relays,
        ),
        queue_default=QueueParams(lam, m1, m2),
        queue_overrides=overrides,
        radio=RadioParams(
            tx_power=tx_power,
            path_loss_alpha=path_loss_alpha,
            interference_range=interference_range,
        ),
        game=GameParams(
            beta=beta,
            omega=omega,
            grid_resolution=grid_resolution,
            delay_cap=delay_cap,
            fp_max_iters=fp_max_iters,
            fp_stop_tol=fp_stop_tol,
        ),
        seed=seed,
    )


def manual_hierarchy(level_of, candidates, n_states, level_count,
                     per_state=None):
    """HierarchyAssignment with an identical assignment in every state.

    per_state: optional {state: (level_of, candidates)} replacing the
    shared assignment for specific states.
    """
    by_state = []
    for s in range(n_states):
        lo, cand = level_of, candidates
        if per_state and s in per_state:
            lo, cand = per_state[s]
        by_state.append(
            LevelAssignment(
                state=s,
                level_count=level_count,
                level_of=dict(lo),
                candidates={k: tuple(v) for k, v in cand.items()},
                excluded=frozenset(),
            )
        )
    return HierarchyAssignment(by_state=tuple(by_state), level_count=level_count)


def minimal_dict(seed=3):
    """Smallest complete configuration document."""
    return {
        "region": {"x_min": -1.0, "x_max": 1.0, "y_min": -1.0, "y_max": 1.0},
        "primary_users": [
            {
                "id": 0,
                "center": [0.0, 0.0],
                "footprint_radius": 0.3,
                "tx_power": 1.0,
                "channel_states": ["occupied", "unoccupied"],
                "transition": [[0.9, 0.1], [0.3, 0.7]],
            }
        ],
        "nodes": {
            "sources": [{"id": "s0", "xy": [-0.9, -0.9]}],
            "relays": [{"id": "r0", "xy": [0.0, -0.85]}],
            "cpc_stations": [{"id": "c0", "xy": [0.9, -0.9]}],
            "n_random_relays": 0,
        },
        "queueing": {
            "default": {
                "arrival_rate": 0.1,
                "mean_service": 0.5,
                "second_moment_service": 0.5,
            },
            "overrides": {},
        },
        "radio": {
            "tx_power": 0.5,
            "path_loss_alpha": 3.0,
            "interference_range": 1.2,
        },
        "game": {
            "beta": 0.5,
            "omega": 0.5,
            "grid_resolution": 0.05,
        },
        "seed": seed,
    }
