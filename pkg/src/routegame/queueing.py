"""Single-server queue delay model and per-level load aggregation.

Every node runs one FIFO queue with Poisson arrivals and a general
service distribution summarized by its first two moments.  The mean
sojourn time (waiting plus service) follows the classical
Pollaczek-Khinchine mean-value formula.  Superposed flows are treated
as Poisson again, which is the standard approximation for this model
and is what makes per-level load aggregation a simple sum of rates.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .errors import InstabilityError, InvalidActionError
from .validation import check_nonnegative, check_positive

# Saturation value (seconds) standing in for an unstable queue when a
# stage payoff must stay finite.  Large enough to dominate any stable
# delay in the shipped scenarios, small enough to keep the arithmetic
# in backward induction well conditioned.
DEFAULT_DELAY_CAP = 1.0e4


@dataclass(frozen=True)
class QueueParams:
    """Arrival and service moments of one node's queue.

    arrival_rate is the node's own (external) packet rate in packets/s;
    mean_service and second_moment_service are E[X] and E[X^2] of the
    service time in seconds and seconds^2.
    """

    arrival_rate: float
    mean_service: float
    second_moment_service: float

    def __post_init__(self):
        check_nonnegative(self.arrival_rate, "arrival_rate")
        check_positive(self.mean_service, "mean_service")
        check_positive(self.second_moment_service, "second_moment_service")
        # Jensen: E[X^2] >= (E[X])^2 for any real service distribution
        if self.second_moment_service < self.mean_service**2 - 1e-12:
            raise ValueError(
                "second_moment_service is below mean_service**2, "
                "which no distribution can realize"
            )

    @property
    def utilization(self) -> float:
        return self.arrival_rate * self.mean_service

    def with_arrival_rate(self, arrival_rate: float) -> "QueueParams":
        return replace(self, arrival_rate=float(arrival_rate))


def pk_delay(params: QueueParams) -> float:
    """Mean sojourn time of an M/G/1 queue.

    Returns lam * E[X^2] / (2 * (1 - rho)) + E[X] with rho = lam * E[X].
    Raises InstabilityError when rho >= 1.
    """
    rho = params.utilization
    if rho >= 1.0:
        raise InstabilityError(
            f"utilization {rho:.6g} >= 1, mean delay diverges"
        )
    lam = params.arrival_rate
    return lam * params.second_moment_service / (2.0 * (1.0 - rho)) + params.mean_service


def pk_delay_capped(arrival_rate, mean_service, second_moment, cap=DEFAULT_DELAY_CAP):
    """Vectorized sojourn time, saturating at `cap` when rho >= 1.

    Used inside stage payoffs where a finite (if punishing) value is
    required for overloaded candidates.  Accepts scalars or arrays.
    """
    lam = np.asarray(arrival_rate, dtype=float)
    rho = lam * mean_service
    stable = rho < 1.0
    denom = np.where(stable, 1.0 - rho, 1.0)
    delay = lam * second_moment / (2.0 * denom) + mean_service
    out = np.where(stable, np.minimum(delay, cap), cap)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class LevelLoadProfile:
    """Total arrival rate seen by each candidate node of one stage game.

    rates maps candidate node id to the sum of its own external rate and
    the forwarded rates of every chooser that picked it.
    """

    level: int
    state: int
    rates: Mapping[str, float]

    def __post_init__(self):
        for node, rate in self.rates.items():
            if rate < 0.0:
                raise ValueError(f"negative aggregate rate {rate!r} at node {node}")

    def rate(self, node_id: str) -> float:
        return self.rates.get(node_id, 0.0)


def aggregate_loads(
    level: int,
    state: int,
    actions: Mapping[str, str],
    upstream_rates: Mapping[str, float],
    external_rates: Mapping[str, float],
    candidates: Mapping[str, tuple] | None = None,
) -> LevelLoadProfile:
    """Aggregate arrivals at each chosen candidate of one level.

    actions maps chooser id -> chosen candidate id, upstream_rates maps
    chooser id -> forwarded rate, external_rates maps candidate id -> its
    own arrival rate.  When `candidates` is given, each chooser's action
    must lie in its candidate set, otherwise InvalidActionError.
    """
    rates: dict[str, float] = {c: float(r) for c, r in external_rates.items()}
    for chooser, target in actions.items():
        if candidates is not None and target not in candidates.get(chooser, ()):
            raise InvalidActionError(
                f"node {chooser} chose {target}, not in its candidate set"
            )
        if target not in rates:
            rates[target] = 0.0
        rates[target] += float(upstream_rates[chooser])
    return LevelLoadProfile(level=level, state=state, rates=rates)


def stage_payoff(
    state: int,
    chooser: str,
    action: str,
    coactions: Mapping[str, str],
    upstream_rates: Mapping[str, float],
    queue_params: Mapping[str, QueueParams],
    delay_cap: float = DEFAULT_DELAY_CAP,
) -> float:
    """Instantaneous cost of `chooser` forwarding to `action`.

    The cost is the mean sojourn time at the chosen node given its own
    external arrivals plus the forwarded rates of the chooser and of
    every same-level node in `coactions` that picked the same target.
    Saturates at delay_cap instead of diverging when the queue would be
    unstable.
    """
    q = queue_params[action]
    lam = q.arrival_rate + upstream_rates[chooser]
    for other, target in coactions.items():
        if other != chooser and target == action:
            lam += upstream_rates[other]
    return float(
        pk_delay_capped(lam, q.mean_service, q.second_moment_service, cap=delay_cap)
    )
