"""Estimator-style facade over the full solve pipeline.

RoutePlanner wires geometry, hierarchy, and backward induction behind
the familiar fit/predict surface: fit(scenario) runs the global
procedure (axis, corridor, levels) and the local one (stage games via
fictitious play, discounted values), predict() realizes routes from the
solved strategies.  Construction parameters override the scenario's own
game settings, which makes parameter sweeps a get_params/set_params
loop like any other estimator.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .dynprog import RoutePath, backward_induction, realize_route
from .geometry import build_corridor, build_hierarchy, compute_medial_axis
from .scenario import Scenario, as_seed_sequence, load_scenario, materialize_nodes


class RoutePlanner(BaseEstimator):
    """Interference-aware multi-hop route planner.

    Parameters override the scenario document when not None: omega
    (corridor relaxation), beta (state discount), fp_max_iters and
    fp_stop_tol (fictitious-play budget), seed (scenario seed).  With
    record_traces=True the per-game fictitious-play traces are kept on
    the fitted object for convergence inspection.
    """

    def __init__(
        self,
        omega=None,
        beta=None,
        fp_max_iters=None,
        fp_stop_tol=None,
        seed=None,
        record_traces=False,
    ):
        self.omega = omega
        self.beta = beta
        self.fp_max_iters = fp_max_iters
        self.fp_stop_tol = fp_stop_tol
        self.seed = seed
        self.record_traces = record_traces

    def _effective_scenario(self, scenario: Scenario) -> Scenario:
        game = scenario.game
        updates = {}
        if self.omega is not None:
            updates["omega"] = float(self.omega)
        if self.beta is not None:
            updates["beta"] = float(self.beta)
        if self.fp_max_iters is not None:
            updates["fp_max_iters"] = int(self.fp_max_iters)
        if self.fp_stop_tol is not None:
            updates["fp_stop_tol"] = float(self.fp_stop_tol)
        if updates:
            scenario = replace(scenario, game=replace(game, **updates))
        if self.seed is not None:
            scenario = replace(scenario, seed=int(self.seed))
        return scenario

    def fit(self, X, y=None):
        """Solve the routing game for a scenario (object, path, or dict)."""
        scenario = X if isinstance(X, Scenario) else load_scenario(X)
        scenario = self._effective_scenario(scenario)
        nodes = materialize_nodes(scenario)
        scenario = replace(scenario, nodes=nodes)
        self.scenario_ = scenario
        self.state_model_ = scenario.state_model()
        self.axis_ = compute_medial_axis(scenario)
        self.corridor_ = build_corridor(
            self.axis_, nodes, scenario.pus, scenario.game.omega
        )
        self.hierarchy_ = build_hierarchy(scenario, self.corridor_, self.state_model_)
        result = backward_induction(
            scenario,
            self.hierarchy_,
            state_model=self.state_model_,
            record_traces=self.record_traces,
        )
        self.strategies_ = result.strategies
        self.values_ = result.values
        self.audit_ = result.audit
        self.traces_ = result.traces
        return self

    def _check_fitted(self):
        if not hasattr(self, "strategies_"):
            raise NotFittedError("call fit(scenario) before using this planner")

    def default_state(self) -> int:
        """Most likely channel state (stationary mode, lowest index on ties)."""
        self._check_fitted()
        return int(np.argmax(self.state_model_.stationary))

    def predict(self, X=None, state=None, seed=None) -> list[RoutePath]:
        """Realize one route per source (or per id in X) at a fixed state."""
        self._check_fitted()
        scenario = self.scenario_
        if X is None:
            sources = [n.id for n in scenario.nodes.sources]
        else:
            sources = list(X)
        if state is None:
            state = self.default_state()
        if seed is None:
            seed = scenario.seed
        children = as_seed_sequence(seed).spawn(len(sources))
        return [
            realize_route(self.strategies_, scenario, state, src, child)
            for src, child in zip(sources, children)
        ]

    def score(self, X=None, y=None) -> float:
        """Negative mean discounted source value at the most likely state.

        Higher is better, per estimator convention; useful for crude
        parameter sweeps over omega or beta.
        """
        self._check_fitted()
        state = self.default_state()
        values = [
            float(self.values_.values[n.id][state])
            for n in self.scenario_.nodes.sources
            if n.id in self.values_.values
        ]
        if not values:
            raise NotFittedError("no source values available")
        return -float(np.mean(values))
