"""Command-line entry point: ``banditgames {run,solve,gap,validate}``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from banditgames import metrics
from banditgames.config import ConfigError, _read_yaml, load_config, load_game
from banditgames.experiment import run_experiment
from banditgames.games import MatrixGame, check_policy
from banditgames.oracles import OracleError, shapley_q_star, solve_matrix_minimax

OUT_DIR_ENV = "BANDITGAMES_OUT_DIR"

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _parse_seeds(text: str) -> tuple:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"--seeds must be comma-separated integers, got {text!r}") from None


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(type(obj))


def cmd_run(args) -> int:
    config = load_config(args.config)
    changes = {}
    if args.seeds:
        changes["seeds"] = _parse_seeds(args.seeds)
    if args.tol is not None:
        changes["tol"] = args.tol
    if changes:
        config = dataclasses.replace(config, **changes)
    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV, "runs")
    result = run_experiment(config, out_dir, jobs=args.jobs)
    print(f"wrote {result.out_dir} ({len(result.results) - len(result.failed)}/{len(result.results)} seeds ok)")
    for seed, err in sorted(result.failed.items()):
        print(f"seed {seed} failed: {err}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_RUNTIME


def cmd_solve(args) -> int:
    game = load_game(args.game)
    if isinstance(game, MatrixGame):
        sol = solve_matrix_minimax(game, tol=args.tol or 1e-6)
        out = dataclasses.asdict(sol)
    else:
        out = dataclasses.asdict(shapley_q_star(game, tol=args.tol or 1e-4))
    print(json.dumps(out, default=_jsonable, indent=2))
    return EXIT_OK


def cmd_gap(args) -> int:
    game = load_game(args.game)
    pol = _read_yaml(args.policy)
    if not isinstance(pol, dict) or "x" not in pol or "y" not in pol:
        raise ConfigError(f"{args.policy}: policy file needs keys x and y")
    if isinstance(game, MatrixGame):
        x = np.asarray(pol["x"], dtype=float).reshape(-1)
        y = np.asarray(pol["y"], dtype=float).reshape(-1)
        out = {"duality_gap": metrics.matrix_duality_gap(game, x, y)}
    else:
        try:
            x = check_policy(pol["x"], game.num_states, game.num_actions_x)
            y = check_policy(pol["y"], game.num_states, game.num_actions_y)
        except ValueError as exc:
            raise ConfigError(f"{args.policy}: {exc}") from None
        tol = args.tol or 1e-6
        star = shapley_q_star(game, tol=tol)
        out = {
            "lastiterate_gap": metrics.markov_lastiterate_gap(game, x, y, tol),
            "state_gaps": [metrics.path_gap(star, s, x[s], y[s]) for s in range(game.num_states)],
        }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_validate(args) -> int:
    config = load_config(args.config)
    print(f"ok {config.name} algorithm={config.algorithm} hash={config.config_hash()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="banditgames", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--seeds", help="comma-separated seeds overriding the config")
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./runs)")
    p.add_argument("--tol", type=float, help="oracle tolerance")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("solve", help="print the equilibrium of a game file")
    p.add_argument("game")
    p.add_argument("--tol", type=float)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("gap", help="audit a policy pair against a game file")
    p.add_argument("game")
    p.add_argument("policy")
    p.add_argument("--tol", type=float)
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OracleError, RuntimeError, FloatingPointError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
