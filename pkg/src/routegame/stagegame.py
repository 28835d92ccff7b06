"""Per-level stage games and fictitious-play equilibrium search.

At each system state and hierarchy level, the level's nodes
simultaneously pick a next hop among their candidates.  A player's cost
is the mean sojourn time at its chosen node, which rises with every
same-level player that picks the same node, plus the chosen node's
continuation value (its own expected cost to reach a base station).
These congestion games are solved by fictitious play: each player best
responds to the empirical distribution of the joint plays seen so far,
ties broken deterministically toward the lowest action index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import MissingContinuationError
from .geometry import HierarchyAssignment
from .queueing import pk_delay_capped
from .scenario import Scenario
from .validation import check_simplex

# exact expected-value enumeration is used up to this many joint actions;
# beyond it the congestion structure allows an exact-per-atom convolution.
# The crossover is kept small: convolution is exact too, and enumeration
# cost grows with the joint support while convolution stays polynomial.
ENUM_LIMIT = 4096

# probability atoms below this mass are dropped (unrenormalized) during
# load convolution; the induced error is bounded by mass * delay_cap
ATOM_EPS = 1e-15

CONVERGENCE_WINDOW = 20


@dataclass(frozen=True)
class StageGame:
    """One simultaneous-move next-hop game.

    Players are node ids, each with an ordered tuple of candidate node
    ids as actions.  Costs either come from the congestion structure
    (queue moments per candidate node, forwarded rate per player,
    continuation per candidate) or from an explicit cost_fn used by
    tests for games without congestion form.
    """

    state: int
    level: int
    players: tuple[str, ...]
    actions: tuple[tuple[str, ...], ...]
    node_ids: tuple[str, ...] = ()
    action_node: tuple[np.ndarray, ...] = ()
    rates: np.ndarray | None = None
    node_external: np.ndarray | None = None
    node_mean_service: np.ndarray | None = None
    node_second_moment: np.ndarray | None = None
    node_continuation: np.ndarray | None = None
    delay_cap: float = 1.0e4
    cost_fn: Callable[[int, tuple[int, ...]], float] | None = field(
        default=None, repr=False
    )

    @classmethod
    def from_cost(cls, players, actions, cost_fn, state=0, level=1):
        """Build a test game from an explicit (player, joint) -> cost map."""
        return cls(
            state=state,
            level=level,
            players=tuple(players),
            actions=tuple(tuple(a) for a in actions),
            cost_fn=cost_fn,
        )

    @property
    def n_players(self) -> int:
        return len(self.players)

    @property
    def n_joint(self) -> int:
        out = 1
        for a in self.actions:
            out *= len(a)
        return out

    @property
    def has_congestion_form(self) -> bool:
        return self.cost_fn is None

    def continuation_of(self, player: int) -> np.ndarray:
        """Continuation value per action of one player (zeros for cost_fn games)."""
        if not self.has_congestion_form:
            return np.zeros(len(self.actions[player]))
        return self.node_continuation[self.action_node[player]]

    def stage_cost_vector(self, player: int, node_load: np.ndarray) -> np.ndarray:
        """Queue delay of each action given total forwarded load per node.

        node_load[c] must already include this player's own rate if it
        currently sits on node c; the own-rate correction is applied here.
        """
        nodes = self.action_node[player]
        lam = self.node_external[nodes] + node_load[nodes]
        return pk_delay_capped(
            lam,
            self.node_mean_service[nodes],
            self.node_second_moment[nodes],
            cap=self.delay_cap,
        )

    def cost(self, player: int, joint: Sequence[int]) -> float:
        """Full cost (stage delay + continuation) of one joint pure action."""
        if self.cost_fn is not None:
            return float(self.cost_fn(player, tuple(joint)))
        node = int(self.action_node[player][joint[player]])
        lam = self.node_external[node] + self.rates[player]
        for j in range(self.n_players):
            if j != player and int(self.action_node[j][joint[j]]) == node:
                lam += self.rates[j]
        stage = pk_delay_capped(
            lam,
            float(self.node_mean_service[node]),
            float(self.node_second_moment[node]),
            cap=self.delay_cap,
        )
        return float(stage) + float(self.node_continuation[node])


def build_stage_game(
    scenario: Scenario,
    hierarchy: HierarchyAssignment,
    state: int,
    level: int,
    continuation: Mapping[str, float] | None,
) -> StageGame:
    """Assemble the congestion game of one (state, level) pair.

    `continuation` maps candidate node id to its expected cost-to-go at
    this state; it may be None only at the terminal level, where
    candidates are base stations with zero continuation.  A candidate
    without a continuation entry raises MissingContinuationError.
    """
    assignment = hierarchy.for_state(state)
    players = assignment.players_at(level)
    if not players:
        raise ValueError(f"no players at level {level} in state {state}")
    terminal = level == assignment.level_count
    actions = tuple(assignment.candidates[p] for p in players)

    node_ids = tuple(sorted({c for acts in actions for c in acts}))
    node_pos = {c: i for i, c in enumerate(node_ids)}
    cont = np.zeros(len(node_ids))
    if not terminal:
        if continuation is None:
            raise MissingContinuationError(
                f"level {level} of {assignment.level_count} needs continuation values"
            )
        for c in node_ids:
            if c not in continuation:
                raise MissingContinuationError(
                    f"candidate {c} has no continuation value at state {state}"
                )
            cont[node_pos[c]] = float(continuation[c])
    elif continuation:
        for c in node_ids:
            cont[node_pos[c]] = float(continuation.get(c, 0.0))

    params = [scenario.queue_params(c) for c in node_ids]
    return StageGame(
        state=state,
        level=level,
        players=players,
        actions=actions,
        node_ids=node_ids,
        action_node=tuple(
            np.array([node_pos[c] for c in acts], dtype=np.int64) for acts in actions
        ),
        rates=np.array([scenario.queue_params(p).arrival_rate for p in players]),
        node_external=np.array([q.arrival_rate for q in params]),
        node_mean_service=np.array([q.mean_service for q in params]),
        node_second_moment=np.array([q.second_moment_service for q in params]),
        node_continuation=cont,
        delay_cap=scenario.game.delay_cap,
    )


# ---------------------------------------------------------------------------
# fictitious play


@dataclass(frozen=True)
class FictitiousPlayTrace:
    """Play-by-play record of one fictitious-play run.

    best_responses[k, i] is the action player i played at iteration k
    (0-based).  Frequencies at any iteration are recomputed from this
    array on demand, so the trace stays small even for long runs.
    """

    players: tuple[str, ...]
    actions: tuple[tuple[str, ...], ...]
    best_responses: np.ndarray
    iterations: int
    converged: bool
    stop_tol: float
    window: int = CONVERGENCE_WINDOW

    def frequencies(self, upto: int | None = None) -> tuple[np.ndarray, ...]:
        """Empirical action frequencies after `upto` iterations (default all)."""
        k = self.iterations if upto is None else upto
        if not 1 <= k <= self.iterations:
            raise ValueError(f"iteration count {k} out of range")
        out = []
        for i in range(len(self.players)):
            counts = np.bincount(
                self.best_responses[:k, i], minlength=len(self.actions[i])
            )
            out.append(counts / k)
        return tuple(out)

    def frequency_series(self, player: int) -> np.ndarray:
        """(iterations, actions) matrix of running empirical frequencies."""
        n_a = len(self.actions[player])
        onehot = np.zeros((self.iterations, n_a))
        onehot[np.arange(self.iterations), self.best_responses[:, player]] = 1.0
        running = np.cumsum(onehot, axis=0)
        return running / np.arange(1, self.iterations + 1)[:, None]


def _initial_actions(game: StageGame) -> np.ndarray:
    """Deterministic first plays: greedy vs. an empty network.

    Congestion games best-respond to zero opponent load (each player
    assumes it is alone); explicit-cost games best-respond to a uniform
    belief over every opponent's actions, enumerated exactly.
    """
    n = game.n_players
    out = np.zeros(n, dtype=np.int64)
    if game.has_congestion_form:
        for i in range(n):
            solo = game.stage_cost_vector(i, _own_load(game, i)) + game.continuation_of(i)
            out[i] = int(np.argmin(solo))
        return out
    sizes = [len(a) for a in game.actions]
    for i in range(n):
        costs = np.zeros(sizes[i])
        others = [j for j in range(n) if j != i]
        weight = 1.0
        for j in others:
            weight /= sizes[j]
        for opp_joint in itertools.product(*(range(sizes[j]) for j in others)):
            joint = [0] * n
            for j, a in zip(others, opp_joint):
                joint[j] = a
            for a in range(sizes[i]):
                joint[i] = a
                costs[a] += weight * game.cost(i, joint)
        out[i] = int(np.argmin(costs))
    return out


def _own_load(game: StageGame, player: int) -> np.ndarray:
    """Load vector containing only the player's own rate on each of its nodes."""
    load = np.zeros(len(game.node_ids))
    load[game.action_node[player]] = game.rates[player]
    return load


def fictitious_play(
    game: StageGame,
    max_iters: int,
    stop_tol: float,
) -> tuple[tuple[np.ndarray, ...], FictitiousPlayTrace]:
    """Simultaneous fictitious play against the joint empirical history.

    Every player tracks the average cost each of its actions would have
    earned against the opponents' past joint plays, and plays the
    minimizer (lowest index on ties).  The run stops once every player's
    empirical frequency vector moved less than stop_tol in L-infinity
    over a 20-iteration window, or at max_iters with converged=False.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    n = game.n_players
    sizes = [len(a) for a in game.actions]
    cost_sums = [np.zeros(s) for s in sizes]
    counts = [np.zeros(s) for s in sizes]
    cont = [game.continuation_of(i) for i in range(n)]
    br = np.empty((max_iters, n), dtype=np.int64)
    snapshots: list[tuple[np.ndarray, ...]] = []
    converged = False
    iterations = max_iters

    current = _initial_actions(game)
    for k in range(1, max_iters + 1):
        if k > 1:
            for i in range(n):
                avg = cost_sums[i] / (k - 1) + cont[i]
                current[i] = int(np.argmin(avg))
        br[k - 1] = current

        # append this joint play to every player's cost history
        if game.has_congestion_form:
            chosen_nodes = np.array(
                [game.action_node[i][current[i]] for i in range(n)], dtype=np.int64
            )
            load = np.bincount(
                chosen_nodes, weights=game.rates, minlength=len(game.node_ids)
            )
            for i in range(n):
                # replace i's contribution at its chosen node with its rate on
                # every hypothetical action
                nodes = game.action_node[i]
                others = load[nodes] - game.rates[i] * (nodes == chosen_nodes[i])
                lam = game.node_external[nodes] + game.rates[i] + others
                cost_sums[i] += pk_delay_capped(
                    lam,
                    game.node_mean_service[nodes],
                    game.node_second_moment[nodes],
                    cap=game.delay_cap,
                )
        else:
            joint = list(current)
            for i in range(n):
                saved = joint[i]
                for a in range(sizes[i]):
                    joint[i] = a
                    cost_sums[i][a] += game.cost(i, joint)
                joint[i] = saved

        for i in range(n):
            counts[i][current[i]] += 1.0
        freqs = tuple(counts[i] / k for i in range(n))
        snapshots.append(freqs)
        if k > CONVERGENCE_WINDOW:
            old = snapshots[k - 1 - CONVERGENCE_WINDOW]
            resid = max(
                float(np.max(np.abs(freqs[i] - old[i]))) for i in range(n)
            )
            if resid < stop_tol:
                converged = True
                iterations = k
                break

    trace = FictitiousPlayTrace(
        players=game.players,
        actions=game.actions,
        best_responses=br[:iterations].copy(),
        iterations=iterations,
        converged=converged,
        stop_tol=stop_tol,
    )
    profile = tuple(check_simplex(f, name=f"fp frequencies[{i}]")
                    for i, f in enumerate(trace.frequencies()))
    return profile, trace


# ---------------------------------------------------------------------------
# expected values under a mixed profile


def _support(profile: np.ndarray) -> np.ndarray:
    return np.nonzero(profile > 0.0)[0]


def _enumerate_value(game: StageGame, profiles) -> np.ndarray:
    """Exact expectation by summation over the joint support."""
    n = game.n_players
    supports = [_support(p) for p in profiles]
    values = np.zeros(n)
    for joint in itertools.product(*supports):
        prob = 1.0
        for i, a in enumerate(joint):
            prob *= profiles[i][a]
        if prob == 0.0:
            continue
        for i in range(n):
            values[i] += prob * game.cost(i, joint)
    return values


def _node_choice_probs(game: StageGame, profiles) -> np.ndarray:
    """(player, node) matrix of probabilities of choosing each node."""
    n_nodes = len(game.node_ids)
    probs = np.zeros((game.n_players, n_nodes))
    for i, profile in enumerate(profiles):
        np.add.at(probs[i], game.action_node[i], profile)
    return probs


def _convolve_load(rates, probs) -> list[tuple[float, float]]:
    """Distribution of the total load from independent Bernoulli senders.

    rates[j] is added with probability probs[j].  Returns (load, mass)
    atoms sorted by load; atoms merge at 12 decimals and masses below
    ATOM_EPS are dropped without renormalizing (error <= dropped mass
    times the largest cost, i.e. delay_cap plus max continuation).
    """
    atoms = {0.0: 1.0}
    for rate, p in zip(rates, probs):
        if p <= 0.0:
            continue
        nxt: dict[float, float] = {}
        for load, mass in atoms.items():
            stay = mass * (1.0 - p)
            if stay > ATOM_EPS:
                nxt[load] = nxt.get(load, 0.0) + stay
            add = mass * p
            if add > ATOM_EPS:
                key = round(load + rate, 12)
                nxt[key] = nxt.get(key, 0.0) + add
        atoms = nxt
    return sorted(atoms.items())


def _expected_action_costs(game: StageGame, profiles, player: int) -> np.ndarray:
    """E[cost of each action of `player`] via per-node load convolution."""
    probs = _node_choice_probs(game, profiles)
    out = np.empty(len(game.actions[player]))
    for a, node in enumerate(game.action_node[player]):
        node = int(node)
        senders = [
            (float(game.rates[j]), float(probs[j, node]))
            for j in range(game.n_players)
            if j != player and probs[j, node] > 0.0
        ]
        dist = _convolve_load([s[0] for s in senders], [s[1] for s in senders])
        exp_stage = 0.0
        for load, mass in dist:
            lam = game.node_external[node] + game.rates[player] + load
            exp_stage += mass * pk_delay_capped(
                lam,
                float(game.node_mean_service[node]),
                float(game.node_second_moment[node]),
                cap=game.delay_cap,
            )
        out[a] = exp_stage + float(game.node_continuation[node])
    return out


def equilibrium_value(game: StageGame, profiles) -> np.ndarray:
    """Expected cost per player under an independent mixed profile.

    Computed by exact enumeration over the joint support when small
    enough, otherwise (congestion games only) by exact convolution of
    the independent per-node loads, which avoids the exponential joint
    space without sampling.
    """
    profiles = tuple(
        check_simplex(p, name=f"profile[{i}]") for i, p in enumerate(profiles)
    )
    if len(profiles) != game.n_players:
        raise ValueError("one mixed strategy per player required")
    for i, p in enumerate(profiles):
        if p.shape[0] != len(game.actions[i]):
            raise ValueError(f"profile[{i}] has {p.shape[0]} entries, "
                             f"expected {len(game.actions[i])}")
    support_joint = 1
    for p in profiles:
        support_joint *= max(1, int(np.count_nonzero(p)))
    if not game.has_congestion_form or support_joint <= ENUM_LIMIT:
        return _enumerate_value(game, profiles)
    values = np.empty(game.n_players)
    for i in range(game.n_players):
        values[i] = float(np.dot(profiles[i], _expected_action_costs(game, profiles, i)))
    return values


def deviation_values(game: StageGame, profiles, player: int) -> np.ndarray:
    """Expected cost of each pure action of `player`, others at `profiles`."""
    profiles = tuple(
        check_simplex(p, name=f"profile[{i}]") for i, p in enumerate(profiles)
    )
    support_joint = 1
    for j, p in enumerate(profiles):
        if j != player:
            support_joint *= max(1, int(np.count_nonzero(p)))
    if not game.has_congestion_form or support_joint <= ENUM_LIMIT:
        n = game.n_players
        supports = [_support(p) for p in profiles]
        out = np.zeros(len(game.actions[player]))
        others = [j for j in range(n) if j != player]
        for opp_joint in itertools.product(*(supports[j] for j in others)):
            prob = 1.0
            joint = [0] * n
            for j, a in zip(others, opp_joint):
                joint[j] = a
                prob *= profiles[j][a]
            if prob == 0.0:
                continue
            for a in range(len(game.actions[player])):
                joint[player] = a
                out[a] += prob * game.cost(player, joint)
        return out
    return _expected_action_costs(game, profiles, player)


def nash_gap(game: StageGame, profiles) -> np.ndarray:
    """Per-player gain from the best unilateral pure deviation.

    Zero (up to numerical noise) certifies the profile as a Nash
    equilibrium; a positive entry bounds how far that player is from
    best responding.
    """
    values = equilibrium_value(game, profiles)
    gaps = np.empty(game.n_players)
    for i in range(game.n_players):
        best = float(np.min(deviation_values(game, profiles, i)))
        gaps[i] = max(0.0, values[i] - best)
    return gaps
