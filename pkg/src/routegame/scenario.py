"""Scenario documents: geometry, primary users, nodes, and channel states.

A scenario is a JSON document describing the deployment region, the
primary users (each with a Markov on/off channel), the secondary nodes
(traffic sources, relay candidates, base stations), per-node queue
moments, radio constants, and game parameters.  Loading validates every
invariant eagerly; saving always emits the canonical form (sorted keys,
two-space indent, defaults materialized) so that save(load(x)) is a
fixpoint and documents can be hashed for provenance.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import os
from dataclasses import dataclass, field, replace
from typing import IO, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, ReducibleChainError
from .queueing import DEFAULT_DELAY_CAP, QueueParams
from .validation import (
    as_point,
    check_nonnegative,
    check_positive,
    check_row_stochastic,
    check_unit_interval,
    readonly,
)

STATIONARY_TOL = 1e-10

DEFAULT_FP_MAX_ITERS = 1000
DEFAULT_FP_STOP_TOL = 0.01


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangular deployment region, coordinates in km."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ConfigError(
            f"degenerate region [{self.x_min}, {self.x_max}] x [{self.y_min}, {self.y_max}]"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def contains(self, xy) -> bool:
        x, y = xy
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def boundary_distance(self, xy) -> float:
        """Distance to the nearest region edge; positive inside."""
        x, y = xy
        return min(x - self.x_min, self.x_max - x, y - self.y_min, self.y_max - y)


@dataclass(frozen=True)
class PrimaryUser:
    """Licensed transmitter with a circular footprint and a Markov channel."""

    id: int
    center: tuple[float, float]
    footprint_radius: float
    tx_power: float
    channel_states: tuple[str, ...]
    transition: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center, f"pu[{self.id}].center"))
        check_positive(self.footprint_radius, f"pu[{self.id}].footprint_radius")
        check_positive(self.tx_power, f"pu[{self.id}].tx_power")
        labels = tuple(str(s) for s in self.channel_states)
        if len(labels) < 2 or len(set(labels)) != len(labels):
            raise ConfigError(
                f"pu[{self.id}].channel_states must be >= 2 distinct labels, got {labels}"
            )
        object.__setattr__(self, "channel_states", labels)
        mat = check_row_stochastic(self.transition, f"pu[{self.id}].transition")
        if mat.shape[0] != len(labels):
            raise ConfigError(
                f"pu[{self.id}].transition is {mat.shape[0]}x{mat.shape[0]} "
                f"but there are {len(labels)} channel states"
            )
        object.__setattr__(self, "transition", mat)

    def footprint_distance(self, xy) -> float:
        """Distance from a point to the footprint edge; negative inside."""
        dx = xy[0] - self.center[0]
        dy = xy[1] - self.center[1]
        return float(np.hypot(dx, dy)) - self.footprint_radius

    def stationary(self) -> np.ndarray:
        """Stationary distribution of this user's own channel chain."""
        return chain_stationary(self.transition, name=f"pu[{self.id}].transition")


@dataclass(frozen=True)
class Node:
    """A secondary node: traffic source, relay candidate, or base station."""

    id: str
    xy: tuple[float, float]

    def __post_init__(self):
        if not self.id or not isinstance(self.id, str):
            raise ConfigError(f"node id must be a non-empty string, got {self.id!r}")
        object.__setattr__(self, "xy", as_point(self.xy, f"node {self.id}"))


@dataclass(frozen=True)
class NodeSet:
    """All secondary nodes of a scenario, grouped by role.

    n_random_relays > 0 asks for that many additional uniform relay
    positions to be drawn at solve time with the scenario seed; they are
    never written back into the document, which keeps serialization a
    pure function of the input.
    """

    sources: tuple[Node, ...]
    relays: tuple[Node, ...]
    cpc_stations: tuple[Node, ...]
    n_random_relays: int = 0

    def __post_init__(self):
        if not self.sources:
            raise ConfigError("scenario needs at least one source")
        if not self.cpc_stations:
            raise ConfigError("scenario needs at least one base station")
        if self.n_random_relays < 0:
            raise ConfigError("n_random_relays must be >= 0")
        ids = [n.id for n in self.all_nodes()]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ConfigError(f"duplicate node ids: {dupes}")

    def all_nodes(self) -> tuple[Node, ...]:
        return self.sources + self.relays + self.cpc_stations

    def by_id(self) -> dict[str, Node]:
        return {n.id: n for n in self.all_nodes()}


@dataclass(frozen=True)
class RadioParams:
    """Secondary transmit power (W), path-loss exponent, and hop range (km)."""

    tx_power: float
    path_loss_alpha: float
    interference_range: float

    def __post_init__(self):
        check_positive(self.tx_power, "radio.tx_power")
        check_positive(self.path_loss_alpha, "radio.path_loss_alpha")
        check_positive(self.interference_range, "radio.interference_range")


@dataclass(frozen=True)
class GameParams:
    """Discount, corridor relaxation, grid pitch, and solver knobs."""

    beta: float
    omega: float
    grid_resolution: float
    delay_cap: float = DEFAULT_DELAY_CAP
    fp_max_iters: int = DEFAULT_FP_MAX_ITERS
    fp_stop_tol: float = DEFAULT_FP_STOP_TOL

    def __post_init__(self):
        check_unit_interval(self.beta, "game.beta", open_right=True)
        check_unit_interval(self.omega, "game.omega", open_left=True)
        check_positive(self.grid_resolution, "game.grid_resolution")
        check_positive(self.delay_cap, "game.delay_cap")
        if self.fp_max_iters < 1:
            raise ConfigError("game.fp_max_iters must be >= 1")
        check_positive(self.fp_stop_tol, "game.fp_stop_tol")


def chain_stationary(transition, name="transition") -> np.ndarray:
    """Unique stationary distribution of an irreducible chain.

    Solved directly as the left null space of (P - I) with the
    normalization row appended; raises ReducibleChainError when the
    chain has more than one closed communicating class.
    """
    mat = np.asarray(transition, dtype=float)
    n = mat.shape[0]
    n_comp, _ = connected_components(csr_matrix(mat > 0.0), connection="strong")
    if n_comp != 1:
        raise ReducibleChainError(
            f"{name} is reducible ({n_comp} strongly connected components); "
            "the stationary distribution is not unique"
        )
    a = mat.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(a, b)
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    resid = float(np.max(np.abs(pi @ mat - pi)))
    if resid > STATIONARY_TOL:
        raise ReducibleChainError(
            f"{name} stationary solve residual {resid:.3g} exceeds {STATIONARY_TOL}"
        )
    pi.setflags(write=False)
    return pi


@dataclass(frozen=True)
class StateModel:
    """Joint channel state space of all primary users.

    System state j enumerates the Cartesian product of per-user labels
    with the first listed user varying slowest, matching the Kronecker
    product order of the transition matrices.
    """

    pu_ids: tuple[int, ...]
    states: tuple[tuple[str, ...], ...]
    transition: np.ndarray = field(repr=False)
    stationary: np.ndarray = field(repr=False)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index_of(self, labels: Sequence[str]) -> int:
        return self.states.index(tuple(labels))

    def label_of(self, state_index: int, pu_id: int) -> str:
        return self.states[state_index][self.pu_ids.index(pu_id)]


def build_state_model(pus: Sequence[PrimaryUser]) -> StateModel:
    """Kronecker-product chain over all primary users' channels.

    Each factor chain must be irreducible, and so must the product
    (independent periodic factors can still split the product into
    several closed classes, e.g. two deterministic two-cycles).
    """
    if not pus:
        raise ConfigError("at least one primary user is required")
    for pu in pus:
        # raises ReducibleChainError with the offending PU named
        chain_stationary(pu.transition, name=f"pu[{pu.id}].transition")
    product = np.array([[1.0]])
    for pu in pus:
        product = np.kron(product, pu.transition)
    states = tuple(itertools.product(*(pu.channel_states for pu in pus)))
    pi = chain_stationary(product, name="product chain")
    return StateModel(
        pu_ids=tuple(pu.id for pu in pus),
        states=states,
        transition=readonly(product),
        stationary=pi,
    )


@dataclass(frozen=True)
class Scenario:
    """Validated, immutable description of one problem instance."""

    region: Region
    pus: tuple[PrimaryUser, ...]
    nodes: NodeSet
    queue_default: QueueParams | None
    queue_overrides: Mapping[str, QueueParams]
    radio: RadioParams
    game: GameParams
    seed: int

    def __post_init__(self):
        if not self.pus:
            raise ConfigError("scenario needs at least one primary user")
        pu_ids = [pu.id for pu in self.pus]
        if len(set(pu_ids)) != len(pu_ids):
            raise ConfigError(f"duplicate primary user ids: {pu_ids}")
        for node in self.nodes.all_nodes():
            if not self.region.contains(node.xy):
                raise ConfigError(f"node {node.id} lies outside the region")
            if self.queue_default is None and node.id not in self.queue_overrides:
                raise ConfigError(
                    f"node {node.id} has no queue parameters and no default is set"
                )
        for node_id in self.queue_overrides:
            if node_id not in self.nodes.by_id():
                raise ConfigError(f"queue override for unknown node {node_id!r}")

    def queue_params(self, node_id: str) -> QueueParams:
        if node_id in self.queue_overrides:
            return self.queue_overrides[node_id]
        if self.queue_default is None:
            raise ConfigError(f"no queue parameters for node {node_id!r}")
        return self.queue_default

    def state_model(self) -> StateModel:
        return build_state_model(self.pus)


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """Wrap ints (or pass through SeedSequence objects) for PCG64 streams."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def generate_deployment(region: Region, n_relays: int, seed, prefix="g") -> tuple[Node, ...]:
    """Draw relay positions i.i.d. uniform over the region.

    Deterministic for a given seed: positions come from a PCG64 stream
    seeded with numpy's SeedSequence, drawn as one (n, 2) uniform block
    in (x, y) order.  Ids are prefix + zero-padded index.
    """
    if n_relays < 0:
        raise ConfigError("n_relays must be >= 0")
    rng = np.random.default_rng(as_seed_sequence(seed))
    pts = rng.uniform(
        low=(region.x_min, region.y_min),
        high=(region.x_max, region.y_max),
        size=(int(n_relays), 2),
    )
    return tuple(
        Node(id=f"{prefix}{i:04d}", xy=(float(x), float(y)))
        for i, (x, y) in enumerate(pts)
    )


def materialize_nodes(scenario: Scenario, seed=None) -> NodeSet:
    """Node set with any requested random relays drawn and appended.

    `seed` defaults to the scenario seed; ensemble runs pass per-seed
    children so deployments differ across replications but never across
    thread counts.
    """
    n = scenario.nodes.n_random_relays
    if n == 0:
        return scenario.nodes
    if seed is None:
        seed = scenario.seed
    generated = generate_deployment(scenario.region, n, seed)
    return replace(
        scenario.nodes,
        relays=scenario.nodes.relays + generated,
        n_random_relays=0,
    )


def update_map(scenario: Scenario, new_pus: Sequence[PrimaryUser]) -> Scenario:
    """Scenario with revised primary-user information merged in by id.

    Users with matching ids are replaced, unseen ids are appended.  The
    result is a fresh scenario; axis, corridor, hierarchy, and solved
    tables derived from the old one must be recomputed.
    """
    merged = {pu.id: pu for pu in scenario.pus}
    for pu in new_pus:
        merged[pu.id] = pu
    return replace(scenario, pus=tuple(merged.values()))


# ---------------------------------------------------------------------------
# serialization


def _queue_params_from_dict(doc, where) -> QueueParams:
    try:
        return QueueParams(
            arrival_rate=float(doc["arrival_rate"]),
            mean_service=float(doc["mean_service"]),
            second_moment_service=float(doc["second_moment_service"]),
        )
    except KeyError as exc:
        raise ConfigError(f"{where}: missing queue field {exc}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}")


def _nodes_from_dict(doc) -> NodeSet:
    def group(key):
        return tuple(
            Node(id=str(item["id"]), xy=item["xy"]) for item in doc.get(key, [])
        )

    return NodeSet(
        sources=group("sources"),
        relays=group("relays"),
        cpc_stations=group("cpc_stations"),
        n_random_relays=int(doc.get("n_random_relays", 0)),
    )


def scenario_from_dict(doc: Mapping) -> Scenario:
    """Build and validate a Scenario from a parsed JSON document."""
    if not isinstance(doc, Mapping):
        raise ConfigError(f"scenario document must be an object, got {type(doc).__name__}")
    required = {"region", "primary_users", "nodes", "queueing", "radio", "game", "seed"}
    missing = sorted(required - set(doc))
    if missing:
        raise ConfigError(f"scenario document is missing sections: {missing}")
    try:
        region = Region(**{k: float(doc["region"][k]) for k in ("x_min", "x_max", "y_min", "y_max")})
    except KeyError as exc:
        raise ConfigError(f"region: missing field {exc}")
    pus = []
    for item in doc["primary_users"]:
        try:
            pus.append(
                PrimaryUser(
                    id=int(item["id"]),
                    center=item["center"],
                    footprint_radius=float(item["footprint_radius"]),
                    tx_power=float(item["tx_power"]),
                    channel_states=tuple(item["channel_states"]),
                    transition=np.asarray(item["transition"], dtype=float),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"primary_users: missing field {exc}")
    q = doc["queueing"]
    default = None
    if q.get("default") is not None:
        default = _queue_params_from_dict(q["default"], "queueing.default")
    overrides = {
        str(node_id): _queue_params_from_dict(params, f"queueing.overrides[{node_id}]")
        for node_id, params in q.get("overrides", {}).items()
    }
    try:
        radio = RadioParams(
            tx_power=float(doc["radio"]["tx_power"]),
            path_loss_alpha=float(doc["radio"]["path_loss_alpha"]),
            interference_range=float(doc["radio"]["interference_range"]),
        )
    except KeyError as exc:
        raise ConfigError(f"radio: missing field {exc}")
    g = doc["game"]
    try:
        game = GameParams(
            beta=float(g["beta"]),
            omega=float(g["omega"]),
            grid_resolution=float(g["grid_resolution"]),
            delay_cap=float(g.get("delay_cap", DEFAULT_DELAY_CAP)),
            fp_max_iters=int(g.get("fp_max_iters", DEFAULT_FP_MAX_ITERS)),
            fp_stop_tol=float(g.get("fp_stop_tol", DEFAULT_FP_STOP_TOL)),
        )
    except KeyError as exc:
        raise ConfigError(f"game: missing field {exc}")
    return Scenario(
        region=region,
        pus=tuple(pus),
        nodes=_nodes_from_dict(doc["nodes"]),
        queue_default=default,
        queue_overrides=overrides,
        radio=radio,
        game=game,
        seed=int(doc["seed"]),
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    """Plain-dict form with every field, including defaults, materialized."""

    def qp(params: QueueParams) -> dict:
        return {
            "arrival_rate": params.arrival_rate,
            "mean_service": params.mean_service,
            "second_moment_service": params.second_moment_service,
        }

    def node(n: Node) -> dict:
        return {"id": n.id, "xy": [n.xy[0], n.xy[1]]}

    return {
        "region": {
            "x_min": scenario.region.x_min,
            "x_max": scenario.region.x_max,
            "y_min": scenario.region.y_min,
            "y_max": scenario.region.y_max,
        },
        "primary_users": [
            {
                "id": pu.id,
                "center": [pu.center[0], pu.center[1]],
                "footprint_radius": pu.footprint_radius,
                "tx_power": pu.tx_power,
                "channel_states": list(pu.channel_states),
                "transition": pu.transition.tolist(),
            }
            for pu in scenario.pus
        ],
        "nodes": {
            "sources": [node(n) for n in scenario.nodes.sources],
            "relays": [node(n) for n in scenario.nodes.relays],
            "cpc_stations": [node(n) for n in scenario.nodes.cpc_stations],
            "n_random_relays": scenario.nodes.n_random_relays,
        },
        "queueing": {
            "default": None if scenario.queue_default is None else qp(scenario.queue_default),
            "overrides": {
                node_id: qp(params)
                for node_id, params in sorted(scenario.queue_overrides.items())
            },
        },
        "radio": {
            "tx_power": scenario.radio.tx_power,
            "path_loss_alpha": scenario.radio.path_loss_alpha,
            "interference_range": scenario.radio.interference_range,
        },
        "game": {
            "beta": scenario.game.beta,
            "omega": scenario.game.omega,
            "grid_resolution": scenario.game.grid_resolution,
            "delay_cap": scenario.game.delay_cap,
            "fp_max_iters": scenario.game.fp_max_iters,
            "fp_stop_tol": scenario.game.fp_stop_tol,
        },
        "seed": scenario.seed,
    }


def scenario_to_json(scenario: Scenario) -> str:
    """Canonical serialization: sorted keys, two-space indent, trailing newline."""
    return json.dumps(scenario_to_dict(scenario), sort_keys=True, indent=2) + "\n"


def scenario_hash(scenario: Scenario) -> str:
    """SHA-256 of the canonical serialization; stable provenance id."""
    return hashlib.sha256(scenario_to_json(scenario).encode("utf-8")).hexdigest()


def load_scenario(source) -> Scenario:
    """Load a scenario from a path, an open file, a JSON string, or a dict."""
    if isinstance(source, Mapping):
        return scenario_from_dict(source)
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    elif isinstance(source, str):
        text = source
    else:
        raise ConfigError(f"cannot load a scenario from {source!r}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario document is not valid JSON: {exc}")
    return scenario_from_dict(doc)


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scenario_to_json(scenario))
