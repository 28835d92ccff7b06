import numpy as np
import pytest

import helpers
import oracles
from routegame.errors import MissingContinuationError, NonSimplexError
from routegame.geometry import build_corridor, build_hierarchy, compute_medial_axis
from routegame.queueing import QueueParams, pk_delay
from routegame.stagegame import (
    StageGame,
    _expected_action_costs,
    build_stage_game,
    deviation_values,
    equilibrium_value,
    fictitious_play,
    nash_gap,
)


def matching_pennies():
    def cost(player, joint):
        match = joint[0] == joint[1]
        if player == 0:
            return 0.0 if match else 1.0
        return 1.0 if match else 0.0

    return StageGame.from_cost(["A", "B"], [("h", "t"), ("h", "t")], cost)


def dominant_game():
    def cost(player, joint):
        return 1.0 if joint[player] == 0 else 2.0

    return StageGame.from_cost(["A", "B"], [("u", "v"), ("u", "v")], cost)


def congestion_game(n_players=2, rates=None, ext=(0.1, 0.1), mean=0.5, m2=0.5,
                    cont=(0.0, 0.0), cap=1e4, n_nodes=2):
    """Identical players choosing between shared queue nodes."""
    if rates is None:
        rates = [0.4] * n_players
    node_ids = tuple(f"n{k}" for k in range(n_nodes))
    return StageGame(
        state=0,
        level=1,
        players=tuple(f"p{i}" for i in range(n_players)),
        actions=tuple(node_ids for _ in range(n_players)),
        node_ids=node_ids,
        action_node=tuple(np.arange(n_nodes) for _ in range(n_players)),
        rates=np.asarray(rates, dtype=float),
        node_external=np.asarray(ext, dtype=float),
        node_mean_service=np.full(n_nodes, mean),
        node_second_moment=np.full(n_nodes, m2),
        node_continuation=np.asarray(cont, dtype=float),
        delay_cap=cap,
    )


class TestBuildStageGame:
    @pytest.fixture()
    def fixture(self):
        sc = helpers.make_scenario(
            sources=[("s0", 0.05, -0.45)],
            relays=[
                ("r1", 0.0, -0.3),
                ("r2", 0.0, -0.1),
                ("r3", 0.0, 0.3),
                ("redge", -0.25, 0.0),
            ],
            cpcs=[("c0", 0.0, 0.9)],
            pus=[
                helpers.make_pu(0, center=(-0.5, 0.0), radius=0.25),
                helpers.make_pu(1, center=(0.5, 0.0), radius=0.25),
            ],
            region=((-1.0, 1.0), (-1.0, 1.0)),
            interference_range=0.4,
            omega=0.9,
            grid_resolution=0.05,
            queue_overrides={"r2": (0.2, 0.4, 0.32), "redge": (0.05, 0.6, 0.72)},
        )
        axis = compute_medial_axis(sc)
        cor = build_corridor(axis, sc.nodes, sc.pus, sc.game.omega)
        hier = build_hierarchy(sc, cor)
        return sc, hier

    def test_terminal_level_game(self, fixture):
        sc, hier = fixture
        game = build_stage_game(sc, hier, state=3, level=3, continuation=None)
        assert game.players == ("r3",)
        assert game.actions == (("c0",),)
        # no continuation: cost is the station's sojourn under r3's rate
        lam = sc.queue_params("c0").arrival_rate + sc.queue_params("r3").arrival_rate
        expected = pk_delay(sc.queue_params("c0").with_arrival_rate(lam))
        assert game.cost(0, (0,)) == pytest.approx(expected)

    def test_continuation_required_below_terminal(self, fixture):
        sc, hier = fixture
        with pytest.raises(MissingContinuationError):
            build_stage_game(sc, hier, state=3, level=2, continuation=None)
        # the only level-3 candidate is r3; omitting it must raise
        with pytest.raises(MissingContinuationError):
            build_stage_game(sc, hier, state=3, level=2, continuation={"r9": 1.0})

    def test_level_two_game_costs(self, fixture):
        sc, hier = fixture
        cont = {"r3": 2.5}
        game = build_stage_game(sc, hier, state=3, level=2, continuation=cont)
        assert set(game.players) == {"r2", "redge"}
        i = game.players.index("r2")
        # both forward to r3: its queue sees both rates plus its own
        joint = tuple(game.actions[j].index("r3") for j in range(2))
        lam = (
            sc.queue_params("r3").arrival_rate
            + sc.queue_params("r2").arrival_rate
            + sc.queue_params("redge").arrival_rate
        )
        expected = pk_delay(sc.queue_params("r3").with_arrival_rate(lam)) + 2.5
        assert game.cost(i, joint) == pytest.approx(expected)

    def test_continuation_of_matches_actions(self, fixture):
        sc, hier = fixture
        cont = {"r2": 1.5, "redge": 0.75}
        game = build_stage_game(sc, hier, state=3, level=1, continuation=cont)
        i = game.players.index("r1")
        acts = game.actions[i]
        vec = game.continuation_of(i)
        for a, node in enumerate(acts):
            assert vec[a] == pytest.approx(cont[node])


class TestCostAgainstOracle:
    def test_four_player_tensor(self):
        # four choosers over four shared nodes, mixed moments; compare the
        # game's cost function against a longhand tensor on all 4^4 joints
        players = ("s1", "s2", "s3", "s4")
        node_ids = ("r5", "r6", "r7", "r8")
        rates = [0.3, 0.25, 0.2, 0.35]
        external = {"r5": 0.1, "r6": 0.05, "r7": 0.2, "r8": 0.0}
        mean = {"r5": 0.5, "r6": 0.6, "r7": 0.4, "r8": 0.55}
        m2 = {"r5": 0.5, "r6": 0.72, "r7": 0.32, "r8": 0.605}
        cont = {"r5": 1.0, "r6": 0.8, "r7": 1.3, "r8": 0.9}
        game = StageGame(
            state=0,
            level=1,
            players=players,
            actions=tuple(node_ids for _ in players),
            node_ids=node_ids,
            action_node=tuple(np.arange(4) for _ in players),
            rates=np.array(rates),
            node_external=np.array([external[c] for c in node_ids]),
            node_mean_service=np.array([mean[c] for c in node_ids]),
            node_second_moment=np.array([m2[c] for c in node_ids]),
            node_continuation=np.array([cont[c] for c in node_ids]),
            delay_cap=1e4,
        )
        table = oracles.stage_cost_tensor(
            players,
            tuple(node_ids for _ in players),
            rates,
            external,
            mean,
            m2,
            cont,
            cap=1e4,
        )
        for joint, costs in table.items():
            for i in range(4):
                assert game.cost(i, joint) == pytest.approx(costs[i], abs=1e-12)


class TestFictitiousPlay:
    def test_dominant_action_converges_in_window_plus_one(self):
        profile, trace = fictitious_play(dominant_game(), max_iters=500, stop_tol=0.01)
        assert trace.converged
        assert trace.iterations == 21
        assert profile[0] == pytest.approx([1.0, 0.0])
        assert profile[1] == pytest.approx([1.0, 0.0])

    def test_matching_pennies_frequencies_near_half(self):
        profile, trace = fictitious_play(
            matching_pennies(), max_iters=10_000, stop_tol=1e-12
        )
        assert not trace.converged
        assert trace.iterations == 10_000
        for p in profile:
            assert abs(p[0] - 0.5) < 1e-2

    def test_two_identical_players_split_evenly(self):
        profile, trace = fictitious_play(congestion_game(), max_iters=2000, stop_tol=0.001)
        assert trace.converged
        for p in profile:
            assert p == pytest.approx([0.5, 0.5], abs=0.01)

    def test_deterministic_repeat(self):
        a_prof, a_tr = fictitious_play(congestion_game(), max_iters=300, stop_tol=0.001)
        b_prof, b_tr = fictitious_play(congestion_game(), max_iters=300, stop_tol=0.001)
        assert a_tr.iterations == b_tr.iterations
        assert np.array_equal(a_tr.best_responses, b_tr.best_responses)
        for pa, pb in zip(a_prof, b_prof):
            assert np.array_equal(pa, pb)

    def test_trace_frequencies_consistent(self):
        _, trace = fictitious_play(congestion_game(), max_iters=100, stop_tol=1e-9)
        freqs = trace.frequencies()
        for i, f in enumerate(freqs):
            assert f.sum() == pytest.approx(1.0)
            series = trace.frequency_series(i)
            assert series.shape == (trace.iterations, 2)
            assert series[-1] == pytest.approx(f)
        partial = trace.frequencies(upto=10)
        counts = np.bincount(trace.best_responses[:10, 0], minlength=2)
        assert partial[0] == pytest.approx(counts / 10)

    def test_invalid_iteration_bounds(self):
        _, trace = fictitious_play(congestion_game(), max_iters=50, stop_tol=1e-9)
        with pytest.raises(ValueError):
            trace.frequencies(upto=0)
        with pytest.raises(ValueError):
            trace.frequencies(upto=trace.iterations + 1)

    def test_max_iters_validated(self):
        with pytest.raises(ValueError):
            fictitious_play(congestion_game(), max_iters=0, stop_tol=0.01)


class TestEquilibriumValue:
    def test_pure_profile_is_cost(self):
        game = matching_pennies()
        pure = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        vals = equilibrium_value(game, pure)
        assert vals[0] == pytest.approx(game.cost(0, (0, 1)))
        assert vals[1] == pytest.approx(game.cost(1, (0, 1)))

    def test_uniform_two_by_two_is_mean(self):
        game = matching_pennies()
        uniform = (np.array([0.5, 0.5]), np.array([0.5, 0.5]))
        vals = equilibrium_value(game, uniform)
        mean0 = np.mean([game.cost(0, j) for j in [(0, 0), (0, 1), (1, 0), (1, 1)]])
        assert vals[0] == pytest.approx(mean0)
        assert vals == pytest.approx([0.5, 0.5])

    def test_convolution_matches_enumeration(self):
        # small 6-player game: the default path enumerates the joint
        # support; the congestion-form convolution must agree exactly
        rng = np.random.default_rng(21)
        game = congestion_game(
            n_players=6,
            rates=rng.uniform(0.05, 0.2, size=6).tolist(),
            ext=(0.1, 0.15),
            cont=(0.7, 0.3),
        )
        profiles = []
        for _ in range(6):
            p = rng.uniform(0.1, 1.0, size=2)
            profiles.append(p / p.sum())
        enum_vals = equilibrium_value(game, profiles)
        conv_vals = np.array(
            [
                float(np.dot(profiles[i], _expected_action_costs(game, profiles, i)))
                for i in range(6)
            ]
        )
        assert conv_vals == pytest.approx(enum_vals, abs=1e-10)
        for i in range(6):
            enum_dev = deviation_values(game, profiles, i)
            conv_dev = _expected_action_costs(game, profiles, i)
            assert conv_dev == pytest.approx(enum_dev, abs=1e-10)

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(5)
        game = congestion_game(
            n_players=3,
            rates=[0.3, 0.25, 0.2],
            ext=(0.1, 0.05),
            cont=(0.9, 1.1),
        )
        profiles = (
            np.array([0.3, 0.7]),
            np.array([0.5, 0.5]),
            np.array([0.2, 0.8]),
        )
        exact = equilibrium_value(game, profiles)
        n = 200_000
        draws = np.column_stack(
            [rng.choice(2, size=n, p=profiles[i]) for i in range(3)]
        )
        for i in range(3):
            samples = np.array(
                [game.cost(i, tuple(draws[k])) for k in range(0, n, 40)]
            )
            mc = samples.mean()
            sigma = samples.std(ddof=1) / np.sqrt(samples.size)
            assert abs(exact[i] - mc) < 3.0 * sigma + 1e-9

    def test_bad_profile_rejected(self):
        game = matching_pennies()
        with pytest.raises(NonSimplexError):
            equilibrium_value(game, (np.array([0.7, 0.7]), np.array([0.5, 0.5])))
        with pytest.raises(NonSimplexError):
            equilibrium_value(game, (np.array([-0.1, 1.1]), np.array([0.5, 0.5])))

    def test_wrong_profile_count_rejected(self):
        game = matching_pennies()
        with pytest.raises(ValueError):
            equilibrium_value(game, (np.array([0.5, 0.5]),))


class TestNashGap:
    def test_dominant_equilibrium_has_zero_gap(self):
        game = dominant_game()
        pure = (np.array([1.0, 0.0]), np.array([1.0, 0.0]))
        assert nash_gap(game, pure) == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_dominated_profile_has_positive_gap(self):
        game = dominant_game()
        bad = (np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        gaps = nash_gap(game, bad)
        assert np.all(gaps > 0.9)

    def test_mixed_equilibria(self):
        # matching pennies at (.5,.5) and the symmetric congestion split
        mp = matching_pennies()
        uniform = (np.array([0.5, 0.5]), np.array([0.5, 0.5]))
        assert nash_gap(mp, uniform) == pytest.approx([0.0, 0.0], abs=1e-12)
        cg = congestion_game()
        assert nash_gap(cg, uniform) == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_fp_output_is_approximate_equilibrium(self):
        game = congestion_game(
            n_players=3, rates=[0.3, 0.25, 0.2], ext=(0.1, 0.05), cont=(0.4, 0.6)
        )
        profile, trace = fictitious_play(game, max_iters=5000, stop_tol=1e-3)
        gaps = nash_gap(game, profile)
        scale = max(abs(game.cost(i, j)) for i in range(3)
                    for j in [(0, 0, 0), (1, 1, 1)])
        assert np.all(gaps <= 0.05 * scale)
