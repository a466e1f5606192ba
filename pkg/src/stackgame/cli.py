"""Batch command-line interface.

Subcommands::

    stackgame solve-exact --game security --out runs/exact
    stackgame solve-rl    --game security --seed 7 --out runs/rl
    stackgame compare     runs/exact/strategy_exact.csv runs/rl/strategy_rl.csv --tolerance 0.1
    stackgame simulate    --strategy runs/exact/strategy_exact.csv --game security \
                          --episodes 10000 --deviations pure --out runs/sim

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
The seed comes from --seed, else the STACKGAME_SEED environment variable,
else 0; every command is deterministic under a fixed seed.
"""

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import exact, game, sarsa, simulate
from .errors import ConfigError
from .policy import strategy_from_csv, strategy_to_csv

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("STACKGAME_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as err:
            raise ConfigError(f"STACKGAME_SEED must be an integer, got {env!r}") from err
    return 0


def _load_spec(args) -> game.GameSpec:
    if args.game == "security":
        spec = game.security_game(horizon=args.horizon or 5)
    else:
        path = Path(args.game)
        if not path.exists():
            raise ConfigError(f"game file not found: {path}")
        spec = game.load_game(path)
        if args.horizon:
            spec = dataclasses.replace(spec, horizon=args.horizon)
    if args.discount is not None:
        if not 0.0 <= args.discount <= 1.0:
            raise ConfigError(f"--discount must lie in [0, 1], got {args.discount}")
        spec = dataclasses.replace(spec, discount=args.discount)
    violations = game.validate(spec)
    if violations:
        raise ConfigError("invalid game: " + "; ".join(violations))
    return spec


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _add_common(p):
    p.add_argument("--game", required=True,
                   help="'security' or a path to a GameSpec JSON file")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--discount", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=".")


def cmd_solve_exact(args) -> int:
    spec = _load_spec(args)
    cfg = exact.SolveConfig(
        belief_resolution=args.belief_res,
        leader_resolution=args.leader_res,
        threads=args.threads,
    ).validate()
    table, report = exact.timed_backward_recursion(spec, cfg)
    out = _out_dir(args)
    strategy_to_csv(table, out / "strategy_exact.csv")
    report["seed"] = _resolve_seed(args)
    _write_json(out / "report_exact.json", report)
    nonconverged = report["convergence"]["nonconverged_total"]
    if args.strict and nonconverged:
        print(f"solve-exact: {nonconverged} grid points did not converge",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_solve_rl(args) -> int:
    spec = _load_spec(args)
    cfg = sarsa.RLConfig(
        alpha=args.alpha,
        sweeps=args.sweeps,
        particle_count=args.particles,
        belief_resolution=args.belief_res,
        leader_resolution=args.leader_res,
        follower_resolution=args.follower_res,
        pg_step=args.pg_step,
        pg_iters=args.pg_iters,
        seed=_resolve_seed(args),
        threads=args.threads,
    ).validate()
    table, report = sarsa.timed_solve(spec, cfg)
    out = _out_dir(args)
    strategy_to_csv(table, out / "strategy_rl.csv")
    _write_json(out / "report_rl.json", report)
    skipped = report["training"]["skipped_updates_total"]
    if args.strict and skipped:
        print(f"solve-rl: {skipped} updates skipped on impossible observations",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_compare(args) -> int:
    a = strategy_from_csv(args.path_a)
    b = strategy_from_csv(args.path_b)
    if a.horizon != b.horizon or len(a.grid) != len(b.grid) \
            or a.grid.num_states != b.grid.num_states:
        print("compare: tables have different (t, grid) keys", file=sys.stderr)
        return EXIT_CONFIG
    if not np.allclose(a.grid.points, b.grid.points, atol=1e-12):
        print("compare: tables use different belief grids", file=sys.stderr)
        return EXIT_CONFIG

    prob_cols = {
        "leader": (a.leader_policy, b.leader_policy),
        "follower": (a.follower_policy, b.follower_policy),
    }
    value_cols = {
        "V_l": (a.value_leader, b.value_leader),
        "V_f": (a.value_follower, b.value_follower),
    }
    worst_prob = 0.0
    worst_value = 0.0
    for name, (x, y) in {**prob_cols, **value_cols}.items():
        diff = np.abs(x - y)
        linf = float(diff.max())
        mad = float(diff.mean())
        print(f"{name}: linf={linf:.6g} mean_abs={mad:.6g}")
        if name in prob_cols:
            worst_prob = max(worst_prob, linf)
        else:
            worst_value = max(worst_value, linf)
    ok = worst_prob <= args.tolerance
    if args.value_tolerance is not None:
        ok = ok and worst_value <= args.value_tolerance
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_simulate(args) -> int:
    table = strategy_from_csv(args.strategy)
    if args.horizon is None:
        args.horizon = table.horizon
    spec = _load_spec(args)
    if spec.horizon != table.horizon:
        raise ConfigError(
            f"strategy horizon {table.horizon} != game horizon {spec.horizon}"
        )
    if table.grid.num_states != spec.num_states:
        raise ConfigError("strategy table and game disagree on state count")
    seed = _resolve_seed(args)
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    batch = simulate.run_episodes(table, spec, args.episodes, rng.spawn(1)[0],
                                  record=True)
    est_l = batch.estimate("leader")
    est_f = batch.estimate("follower")
    doc = {
        "config": {
            "episodes": args.episodes,
            "deviations": args.deviations,
            "seed": seed,
            "game": args.game,
            "horizon": spec.horizon,
            "discount": spec.discount,
        },
        "returns": {
            "leader": {"mean": est_l.mean, "std_error": est_l.std_error,
                       "episodes": est_l.episodes},
            "follower": {"mean": est_f.mean, "std_error": est_f.std_error,
                         "episodes": est_f.episodes},
        },
        "failed_episodes": batch.failed,
    }
    if args.deviations == "pure":
        fdetails, ldetails = {}, {}
        doc["deviation_gap_follower"] = simulate.deviation_gap_follower(
            table, spec, episodes=args.episodes, rng=rng.spawn(1)[0],
            details=fdetails,
        )
        doc["deviation_gap_leader"] = simulate.deviation_gap_leader(
            table, spec, episodes=args.episodes, rng=rng.spawn(1)[0],
            cfg=exact.SolveConfig(belief_resolution=table.grid.resolution,
                                  leader_resolution=args.leader_res),
            details=ldetails,
        )
        doc["deviation_details"] = {"follower": fdetails, "leader": ldetails}
    doc["wall_time_seconds"] = time.perf_counter() - t0
    out = _out_dir(args)
    _write_json(out / "returns.json", doc)
    simulate.write_episode_log(out / "episodes.jsonl", batch, spec, seed)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stackgame",
        description="Solvers and simulators for stochastic Stackelberg games "
                    "with a privately informed follower.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-exact", help="known-model backward recursion")
    _add_common(p)
    p.add_argument("--belief-res", type=int, default=101)
    p.add_argument("--leader-res", type=int, default=31)
    p.add_argument("--strict", action="store_true",
                   help="exit nonzero on any non-converged grid point")
    p.set_defaults(func=cmd_solve_exact)

    p = sub.add_parser("solve-rl", help="model-free Expected-Sarsa solver")
    _add_common(p)
    p.add_argument("--belief-res", type=int, default=101)
    p.add_argument("--leader-res", type=int, default=31)
    p.add_argument("--follower-res", type=int, default=3)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--sweeps", type=int, default=500)
    p.add_argument("--particles", type=int, default=10_000)
    p.add_argument("--pg-step", type=float, default=0.1)
    p.add_argument("--pg-iters", type=int, default=200)
    p.add_argument("--strict", action="store_true",
                   help="exit nonzero if any update was skipped")
    p.set_defaults(func=cmd_solve_rl)

    p = sub.add_parser("compare", help="diff two strategy CSV files")
    p.add_argument("path_a")
    p.add_argument("path_b")
    p.add_argument("--tolerance", type=float, default=0.0,
                   help="max allowed L-infinity difference on probability columns")
    p.add_argument("--value-tolerance", type=float, default=None,
                   help="optional bound on value columns")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="roll out a strategy CSV and measure returns")
    _add_common(p)
    p.add_argument("--strategy", required=True, help="strategy CSV to deploy")
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--deviations", choices=["none", "pure"], default="none")
    p.add_argument("--leader-res", type=int, default=31)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"stackgame: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"stackgame: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as err:  # runtime failure
        print(f"stackgame: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
