"""Command-line experiment driver.

Subcommands mirror the experiment lifecycle: `solve` writes strategy
and value tables, `route` realizes sampled paths, `compare` runs the
seeded three-algorithm ensemble, `trace-fp` dumps one game's
fictitious-play convergence, and `sweep` re-solves across a parameter
range.  Every run ends by writing manifest.txt with the config hash,
the seed, library versions, and a content hash of every emitted file,
so identical (config, seed) pairs can be byte-verified.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import RouteGameError
from .estimator import RoutePlanner
from .geometry import axis_band
from .metrics import ALGORITHMS, ensemble_compare
from .scenario import load_scenario, scenario_hash

_FLOAT_DIGITS = 12


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, f".{_FLOAT_DIGITS}g")
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(outdir: Path, scenario, files) -> Path:
    manifest = outdir / "manifest.txt"
    lines = [
        f"config_hash={scenario_hash(scenario)}",
        f"seed={scenario.seed}",
        f"routegame_version={__version__}",
        f"numpy_version={np.__version__}",
        f"scipy_version={scipy.__version__}",
        f"python_version={platform.python_version()}",
    ]
    for f in sorted(files):
        lines.append(f"file={f.relative_to(outdir).as_posix()} sha256={_sha256(f)}")
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def _load(args):
    scenario = load_scenario(args.config)
    game_updates = {}
    if args.omega is not None:
        game_updates["omega"] = args.omega
    if args.beta is not None:
        game_updates["beta"] = args.beta
    if game_updates:
        scenario = replace(scenario, game=replace(scenario.game, **game_updates))
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    return scenario


def _fit(scenario, record_traces=False) -> RoutePlanner:
    return RoutePlanner(record_traces=record_traces).fit(scenario)


def _solve_outputs(planner: RoutePlanner, outdir: Path) -> list[Path]:
    strategies = planner.strategies_
    rows = []
    for node, state in sorted(strategies.strategies):
        probs = strategies.strategies[(node, state)]
        acts = strategies.actions[(node, state)]
        for action, prob in zip(acts, probs):
            rows.append((node, state, action, float(prob)))
    strategy_file = outdir / "strategies.csv"
    _write_csv(strategy_file, ("node", "state", "action", "probability"), rows)

    values = planner.values_
    value_rows = []
    for node in sorted(values.values):
        for state, value in enumerate(values.values[node]):
            value_rows.append((node, state, float(value)))
    value_file = outdir / "values.csv"
    _write_csv(value_file, ("node", "state", "value"), value_rows)

    axis = planner.axis_
    level_count = planner.hierarchy_.level_count
    axis_rows = [
        (
            float(x),
            float(y),
            axis_band(float(arc), axis.total_length, level_count),
        )
        for (x, y), arc in zip(axis.points, axis.arc_length)
    ]
    axis_file = outdir / "axis.csv"
    _write_csv(axis_file, ("x", "y", "level"), axis_rows)

    audit_rows = [
        (rec.state, rec.level, rec.iterations, " ".join(rec.players))
        for rec in planner.audit_
    ]
    audit_file = outdir / "fp_audit.csv"
    _write_csv(audit_file, ("state", "level", "iterations", "players"), audit_rows)
    return [strategy_file, value_file, axis_file, audit_file]


def cmd_solve(args) -> int:
    scenario = _load(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    planner = _fit(scenario)
    files = _solve_outputs(planner, outdir)
    _write_manifest(outdir, planner.scenario_, files)
    unresolved = len(planner.audit_)
    print(f"solved {len(planner.values_.values)} nodes over "
          f"{planner.state_model_.n_states} states; "
          f"{unresolved} unconverged stage games")
    return 0


def cmd_route(args) -> int:
    scenario = _load(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    planner = _fit(scenario)
    sources = args.source or None
    state = args.state if args.state is not None else planner.default_state()
    seed = scenario.seed
    routes = planner.predict(sources, state=state, seed=seed)
    positions = {n.id: n.xy for n in planner.scenario_.nodes.all_nodes()}
    rows = []
    for route in routes:
        for hop, node in enumerate(route.nodes):
            x, y = positions[node]
            rows.append((seed, route.algorithm, route.source, hop, float(x), float(y)))
    route_file = outdir / "routes.csv"
    _write_csv(route_file, ("seed", "algorithm", "source", "hop_index", "x", "y"), rows)
    _write_manifest(outdir, planner.scenario_, [route_file])
    print(f"realized {len(routes)} routes at state {state}")
    return 0


def cmd_compare(args) -> int:
    scenario = _load(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    report = ensemble_compare(
        scenario, algorithms=ALGORITHMS, n_seeds=args.seeds, threads=args.threads
    )
    files = []
    for metric in ("interference", "delay"):
        rows = []
        for algo in report.algorithms:
            for row in report.binned(metric, algo, stat="mean"):
                rows.append((algo, row.center, row.value, row.n))
        path = outdir / f"{metric}.csv"
        _write_csv(path, ("algorithm", "bin_center_km", "normalized_mean", "n"), rows)
        files.append(path)
    route_rows = []
    for rec in report.routes:
        for hop, (node, (x, y)) in enumerate(zip(rec.nodes, rec.points)):
            route_rows.append(
                (rec.seed, rec.algorithm, rec.source, hop, float(x), float(y))
            )
    route_file = outdir / "routes.csv"
    _write_csv(
        route_file, ("seed", "algorithm", "source", "hop_index", "x", "y"), route_rows
    )
    files.append(route_file)
    skip_file = outdir / "skipped.csv"
    _write_csv(
        skip_file,
        ("seed", "source", "reason"),
        [(s.seed, s.source, s.reason) for s in report.skipped],
    )
    files.append(skip_file)
    _write_manifest(outdir, scenario, files)
    print(
        f"compared {len(report.algorithms)} algorithms over {report.n_seeds} seeds: "
        f"{len(report.routes)} routes, {len(report.skipped)} skipped sources"
    )
    return 0


def cmd_trace_fp(args) -> int:
    scenario = _load(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    planner = _fit(scenario, record_traces=True)
    key = (args.state, args.level)
    if key not in planner.traces_:
        raise RouteGameError(
            f"no stage game at state {args.state}, level {args.level}"
        )
    trace = planner.traces_[key]
    if args.node not in trace.players:
        raise RouteGameError(
            f"node {args.node} is not a player of the level-{args.level} game "
            f"(players: {', '.join(trace.players)})"
        )
    player = trace.players.index(args.node)
    series = trace.frequency_series(player)
    rows = []
    for k in range(trace.iterations):
        for a, action in enumerate(trace.actions[player]):
            rows.append((k + 1, args.node, action, float(series[k, a])))
    trace_file = outdir / "fp_trace.csv"
    _write_csv(
        trace_file, ("iteration", "player", "action", "empirical_frequency"), rows
    )
    _write_manifest(outdir, planner.scenario_, [trace_file])
    outcome = "converged" if trace.converged else "did not converge"
    print(f"game at state {args.state} level {args.level} {outcome} "
          f"after {trace.iterations} iterations")
    return 0


def cmd_sweep(args) -> int:
    scenario = _load(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    values = [v for v in args.values.split(",") if v]
    files = []
    summary = []
    for raw in values:
        if args.param == "n_relays":
            value = int(raw)
            swept = replace(
                scenario, nodes=replace(scenario.nodes, n_random_relays=value)
            )
        else:
            value = float(raw)
            swept = replace(
                scenario, game=replace(scenario.game, **{args.param: value})
            )
        subdir = outdir / f"{args.param}_{raw}"
        subdir.mkdir(parents=True, exist_ok=True)
        planner = _fit(swept)
        files.extend(_solve_outputs(planner, subdir))
        source_values = [
            float(planner.values_.values[n.id][planner.default_state()])
            for n in planner.scenario_.nodes.sources
            if n.id in planner.values_.values
        ]
        summary.append(
            (
                args.param,
                value,
                float(np.mean(source_values)),
                float(np.max(source_values)),
                len(planner.audit_),
            )
        )
    sweep_file = outdir / "sweep.csv"
    _write_csv(
        sweep_file,
        ("param", "value", "mean_source_value", "max_source_value", "unconverged"),
        summary,
    )
    files.append(sweep_file)
    _write_manifest(outdir, scenario, files)
    print(f"swept {args.param} over {len(values)} values")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="routegame",
        description="Interference-minimizing routing-game solver and experiment driver",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario JSON document")
    common.add_argument("--seed", type=int, default=None, help="override scenario seed")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--omega", type=float, default=None, help="override corridor relaxation")
    common.add_argument("--beta", type=float, default=None, help="override discount factor")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="solve and dump strategy/value tables")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("route", parents=[common], help="realize routes from solved strategies")
    p.add_argument("--source", action="append", help="source id (repeatable; default all)")
    p.add_argument("--state", type=int, default=None, help="system state index")
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("compare", parents=[common], help="seeded three-algorithm comparison")
    p.add_argument("--seeds", type=int, default=20, help="number of replications")
    p.add_argument("--threads", type=int, default=1, help="worker threads")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("trace-fp", parents=[common], help="dump one game's FP frequencies")
    p.add_argument("--node", required=True, help="player node id")
    p.add_argument("--level", type=int, required=True, help="hierarchy level")
    p.add_argument("--state", type=int, default=0, help="system state index")
    p.set_defaults(func=cmd_trace_fp)

    p = sub.add_parser("sweep", parents=[common], help="re-solve across a parameter range")
    p.add_argument("--param", choices=("omega", "beta", "n_relays"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (RouteGameError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
