"""Experiment orchestration: per-seed runs, trace files and cross-seed summaries."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from banditgames import metrics
from banditgames.config import RunConfig
from banditgames.env import Environment, FixedPolicy, run_selfplay
from banditgames.games import ClippedSimplex, MarkovGame, MatrixGame, schedule_at
from banditgames.markov_learner import GeneralLearner, GeneralParams, IrreducibleLearner
from banditgames.matrix_learner import MatrixLearner
from banditgames.oracles import StarTables, shapley_q_star, solve_regularized_ne

logger = logging.getLogger(__name__)

# Every metric name that can appear in a trace or summary.
METRICS = {
    "duality_gap": "matrix duality gap of the current policy pair",
    "best_iterate_gap": "running mean of the last-iterate gap over checkpoints so far",
    "rationality_gap": "excess loss of the x-player over its best response to a fixed opponent",
    "reg_ne_kl": "KL from the regularized-game equilibrium to the current policy pair",
    "lastiterate_gap": "Markov-game duality gap of the current stationary policies",
    "value_error": "max_s |V^s - V*^s| of the x-player's value table",
    "path_gap_avg": "running average over visited states of the duality gap against Q*",
    "value_spread": "max_s (upper value - lower value) of the general learners",
    "order_violations": "steps so far with upper value < lower value or a value outside [0, 1/(1-gamma)]",
    "episodic_deviation": "|mean per-step loss - (1-gamma) E_rho[V*]| in episodic mode",
    "u": "target accuracy of the current doubling epoch",
    "epoch": "index of the doubling epoch starting at this step",
}

TRACE_HEADER = ("run_id", "seed", "t", "metric", "state", "value", "config_hash")
SUMMARY_HEADER = ("metric", "t", "state", "n", "median", "q10", "q25", "q75", "q90", "min", "max")

_STAR_CACHE: dict = {}


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def star_tables(config: RunConfig, game: MarkovGame) -> StarTables:
    key = (json.dumps(config.game, sort_keys=True), config.tol)
    if key not in _STAR_CACHE:
        _STAR_CACHE[key] = shapley_q_star(game, tol=config.tol)
    return _STAR_CACHE[key]


@dataclass
class SeedResult:
    seed: int
    rows: list = field(default_factory=list)
    error: Optional[str] = None


def _streams(seed: int, epoch: int = 0):
    env_ss, x_ss, y_ss = np.random.SeedSequence(seed).spawn(3)
    if epoch:
        x_ss = np.random.SeedSequence([seed, 1, epoch])
        y_ss = np.random.SeedSequence([seed, 2, epoch])
    return env_ss, np.random.default_rng(x_ss), np.random.default_rng(y_ss)


def _matrix_run(config: RunConfig, seed: int, game: MatrixGame) -> list:
    env_ss, rng_x, rng_y = _streams(seed)
    env = Environment(game, np.random.default_rng(env_ss), noise=config.noise)
    variant = "high-probability" if config.algorithm == "matrix-hp" else "expected"
    params = config.schedule_params()
    lx = MatrixLearner(game.num_actions_x, variant, params, rng_x, role="x")
    if config.opponent is not None:
        ly = FixedPolicy(config.opponent, 1, rng_y)
    else:
        ly = MatrixLearner(game.num_actions_y, variant, params, rng_y, role="y")
    M = game.loss
    gaps = []

    def probe(t):
        x, y = lx.x, ly.policy.reshape(-1) if isinstance(ly, FixedPolicy) else ly.x
        gap = metrics.matrix_duality_gap(M, x, y)
        gaps.append(gap)
        yield "duality_gap", gap, None
        yield "best_iterate_gap", sum(gaps) / len(gaps), None
        if config.opponent is not None:
            yield "rationality_gap", metrics.best_response_regret(M, x, y), None
        if "reg_ne_kl" in config.diagnostics and isinstance(ly, MatrixLearner):
            # the policy after t updates lives in Omega_{t+1} and pairs with eps_{t+1}
            eps = schedule_at(params, t + 1).epsilon
            if M.shape[0] == M.shape[1]:
                sol = solve_regularized_ne(M, eps, ClippedSimplex.at_step(M.shape[0], t + 1), tol=1e-8)
                yield "reg_ne_kl", metrics.joint_kl(sol.x, sol.y, x, y), None

    trace = run_selfplay(env, lx, ly, config.horizon, checkpoints=_checkpoints(config), probes=[probe])
    return trace.rows


def _checkpoints(config: RunConfig) -> list:
    c = config.checkpoints
    return metrics.geometric_checkpoints(config.horizon, c["start"], c["ratio"], c["extra"])


def _episodic_env(config: RunConfig, game: MarkovGame, rng) -> Environment:
    reset = 1.0 - game.discount if config.episodic else 0.0
    return Environment(game, rng, noise=config.noise, reset_prob=reset, rho=config.rho)


def _irreducible_run(config: RunConfig, seed: int, game: MarkovGame) -> list:
    env_ss, rng_x, rng_y = _streams(seed)
    env = _episodic_env(config, game, np.random.default_rng(env_ss))
    params = config.schedule_params()
    S, gamma = game.num_states, game.discount
    lx = IrreducibleLearner(S, game.num_actions_x, gamma, params, rng_x, role="x")
    if config.opponent is not None:
        ly = FixedPolicy(config.opponent, S, rng_y)
    else:
        ly = IrreducibleLearner(S, game.num_actions_y, gamma, params, rng_y, role="y")
    star = star_tables(config, game)
    tol = config.tol
    gaps = []
    losses = [0.0]

    def hook(t, out):
        losses[0] += out.sigma

    def probe(t):
        gap = metrics.markov_lastiterate_gap(game, lx.x, ly.policy, tol)
        gaps.append(gap)
        yield "lastiterate_gap", gap, None
        yield "best_iterate_gap", sum(gaps) / len(gaps), None
        yield "value_error", metrics.value_error(lx.values, star), None
        if config.opponent is not None:
            yield "rationality_gap", metrics.markov_rationality_gap(game, lx.x, ly.policy, tol), None
        if config.episodic:
            rho = np.full(S, 1.0 / S) if config.rho is None else np.array(config.rho)
            yield "episodic_deviation", abs(losses[0] / t - (1 - gamma) * float(rho @ star.v_star)), None

    hooks = [hook] if config.episodic else []
    trace = run_selfplay(env, lx, ly, config.horizon, hooks=hooks, checkpoints=_checkpoints(config), probes=[probe])
    return trace.rows


def doubling_epochs(horizon: int, epoch0: int, u0: float) -> list:
    """(start_step, length, u_k) per epoch: length 2^k T0 and u_k = u0 (2^k T0)^(-1/10)."""
    epochs = []
    start = 0
    k = 0
    while start < horizon:
        length = (2**k) * epoch0
        epochs.append((start, min(length, horizon - start), u0 * length ** -0.1))
        start += length
        k += 1
    return epochs


def _general_run(config: RunConfig, seed: int, game: MarkovGame) -> list:
    env_ss, _, _ = _streams(seed)
    env = _episodic_env(config, game, np.random.default_rng(env_ss))
    S, A, gamma = game.num_states, game.num_actions_x, game.discount
    star = star_tables(config, game)
    q = star.q_star
    g = config.general
    vmax = 1.0 / (1.0 - gamma)
    acc = {"path": 0.0, "violations": 0, "loss": 0.0}
    marks = _checkpoints(config)
    rows = []

    if g["doubling"]:
        epochs = doubling_epochs(config.horizon, g["epoch0"], g["u"])
    else:
        epochs = [(0, config.horizon, None)]

    for k, (offset, length, u_k) in enumerate(epochs):
        _, rng_x, rng_y = _streams(seed, k)
        if u_k is None:
            params = config.general_params()
            horizon_k = length
        else:
            horizon_k = (2**k) * g["epoch0"]
            params = GeneralParams.theoretical(u_k, S, A, horizon_k, gamma, kappa=g["kappa"], delta=config.delta)
            rows.append((offset + 1, "u", u_k, None))
            rows.append((offset + 1, "epoch", float(k), None))
        lx = GeneralLearner(S, A, gamma, horizon_k, params, "lower", rng_x)
        ly = GeneralLearner(S, game.num_actions_y, gamma, horizon_k, params, "upper", rng_y)

        def hook(t, out, lx=lx, ly=ly):
            s = out.state
            acc["path"] += metrics.matrix_duality_gap(q[s], lx.x[s], ly.x[s])
            acc["loss"] += out.sigma
            lo, hi = lx.values, ly.values
            if np.any(hi < lo) or lo.min() < 0 or hi.max() > vmax:
                acc["violations"] += 1

        def probe(t, lx=lx, ly=ly, offset=offset):
            t_global = t + offset
            yield "path_gap_avg", acc["path"] / t_global, None
            yield "value_spread", float(np.max(ly.values - lx.values)), None
            yield "order_violations", float(acc["violations"]), None
            yield "lastiterate_gap", metrics.markov_lastiterate_gap(game, lx.x, ly.x, config.tol), None
            if config.episodic:
                rho = np.full(S, 1.0 / S) if config.rho is None else np.array(config.rho)
                yield "episodic_deviation", abs(acc["loss"] / t_global - (1 - gamma) * float(rho @ star.v_star)), None

        local = [t - offset for t in marks if offset < t <= offset + length]
        trace = run_selfplay(env, lx, ly, length, hooks=[hook], checkpoints=local, probes=[probe])
        rows.extend((t + offset, m, v, s) for t, m, v, s in trace.rows)
    return rows


def run_seed(config: RunConfig, seed: int) -> SeedResult:
    """One deterministic run; failures are captured rather than raised."""
    try:
        game = config.build_game()
        if config.algorithm.startswith("matrix"):
            rows = _matrix_run(config, seed, game)
        elif config.algorithm == "markov-irreducible":
            rows = _irreducible_run(config, seed, game)
        else:
            rows = _general_run(config, seed, game)
        return SeedResult(seed, rows)
    except Exception as exc:  # noqa: BLE001 - recorded per seed in the summary
        logger.exception("seed %d failed", seed)
        return SeedResult(seed, [], f"{type(exc).__name__}: {exc}")


def trace_csv(config: RunConfig, result: SeedResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    h = config.config_hash()
    for t, metric, value, state in result.rows:
        w.writerow((config.name, result.seed, t, metric, "" if state is None else state, _fmt(value), h))
    return buf.getvalue()


def summarize(results: list) -> list:
    """Cross-seed quantiles per (metric, t, state)."""
    groups: dict = {}
    for res in results:
        for t, metric, value, state in res.rows:
            groups.setdefault((metric, t, -1 if state is None else state), []).append(value)
    out = []
    for (metric, t, state), vals in sorted(groups.items()):
        arr = np.array(vals)
        q = np.quantile(arr, [0.1, 0.25, 0.5, 0.75, 0.9])
        out.append({
            "metric": metric, "t": t, "state": None if state < 0 else state, "n": len(vals),
            "median": q[2], "q10": q[0], "q25": q[1], "q75": q[3], "q90": q[4],
            "min": arr.min(), "max": arr.max(),
        })
    return out


@dataclass
class ExperimentResult:
    config: RunConfig
    results: list
    summary: list
    out_dir: Optional[Path]

    @property
    def failed(self) -> dict:
        return {r.seed: r.error for r in self.results if r.error is not None}

    @property
    def ok(self) -> bool:
        return len(self.failed) < len(self.results)

    def value(self, metric: str, t: int, stat: str = "median", state=None) -> float:
        for row in self.summary:
            if row["metric"] == metric and row["t"] == t and row["state"] == state:
                return float(row[stat])
        raise KeyError((metric, t, state))

    def per_seed(self, metric: str, t: int) -> dict:
        return {
            r.seed: v for r in self.results for (tt, m, v, _) in r.rows if m == metric and tt == t
        }


def run_experiment(
    config: RunConfig,
    out_dir: Union[str, Path, None] = None,
    jobs: int = 1,
) -> ExperimentResult:
    """Run every seed, write per-seed traces plus summary.csv/summary.json under ``out_dir/name``."""
    seeds = list(config.seeds)
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_seed, [config] * len(seeds), seeds))
    else:
        results = [run_seed(config, s) for s in seeds]
    summary = summarize([r for r in results if r.error is None])
    run_dir = None
    if out_dir is not None:
        run_dir = Path(out_dir) / config.name
        run_dir.mkdir(parents=True, exist_ok=True)
        for res in results:
            (run_dir / f"trace_seed{res.seed}.csv").write_text(trace_csv(config, res), encoding="utf-8")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for row in summary:
            w.writerow([row["metric"], row["t"], "" if row["state"] is None else row["state"], row["n"]]
                       + [_fmt(row[k]) for k in SUMMARY_HEADER[4:]])
        (run_dir / "summary.csv").write_text(buf.getvalue(), encoding="utf-8")
        meta = {
            "name": config.name,
            "algorithm": config.algorithm,
            "config_hash": config.config_hash(),
            "horizon": config.horizon,
            "seeds": seeds,
            "failed": {str(k): v for k, v in sorted(((r.seed, r.error) for r in results if r.error))},
            "metrics": sorted({row["metric"] for row in summary}),
        }
        (run_dir / "summary.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return ExperimentResult(config, results, summary, run_dir)
