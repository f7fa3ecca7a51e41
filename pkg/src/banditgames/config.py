"""Run configuration: YAML loading, validation, defaults and canonical hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import yaml

from banditgames.games import MarkovGame, MatrixGame, ScheduleParams
from banditgames.markov_learner import GeneralParams, default_exponents_irreducible

ALGORITHMS = ("matrix-hp", "matrix-expected", "markov-irreducible", "markov-general")
DIAGNOSTICS = ("reg_ne_kl",)


class ConfigError(ValueError):
    pass


def build_game(desc: dict) -> Union[MatrixGame, MarkovGame]:
    """Construct a game from its on-disk mapping, re-raising validation failures as ConfigError."""
    if not isinstance(desc, dict):
        raise ConfigError("game table must be a mapping")
    kind = desc.get("type")
    try:
        if kind == "matrix":
            return MatrixGame(np.array(desc["loss"], dtype=float))
        if kind == "markov":
            return MarkovGame(
                np.array(desc["loss"], dtype=float),
                np.array(desc["transition"], dtype=float),
                float(desc["discount"]),
            )
    except KeyError as exc:
        raise ConfigError(f"game table missing key {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"invalid game: {exc}") from None
    raise ConfigError(f"game type must be 'matrix' or 'markov', got {kind!r}")


def game_to_dict(game: Union[MatrixGame, MarkovGame]) -> dict:
    if isinstance(game, MatrixGame):
        return {"type": "matrix", "loss": game.loss.tolist()}
    return {
        "type": "markov",
        "discount": game.discount,
        "loss": game.loss.tolist(),
        "transition": game.transition.tolist(),
    }


def _read_yaml(path: Union[str, Path]):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark is not None else str(path)
        raise ConfigError(f"{where}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_game(path: Union[str, Path]) -> Union[MatrixGame, MarkovGame]:
    data = _read_yaml(path)
    if isinstance(data, dict) and "game" in data and "type" not in data:
        data = data["game"]
    return build_game(data)


@dataclass(frozen=True)
class RunConfig:
    """One experiment. ``game`` is always the inline mapping, even when read from ``game_file``."""

    name: str
    algorithm: str
    horizon: int
    seeds: tuple
    game: dict
    game_file: Optional[str] = None
    noise: str = "bernoulli"
    episodic: bool = False
    rho: Optional[tuple] = None
    delta: float = 0.05
    varepsilon: float = 1.0
    tol: Optional[float] = None
    schedule: dict = field(default_factory=dict)
    general: dict = field(default_factory=dict)
    checkpoints: dict = field(default_factory=dict)
    diagnostics: tuple = ()
    opponent: Optional[list] = None

    def build_game(self):
        return build_game(self.game)

    def schedule_params(self) -> ScheduleParams:
        return ScheduleParams(markov=self.algorithm == "markov-irreducible", **self.schedule)

    def general_params(self) -> GeneralParams:
        g = self.general
        return GeneralParams(g["eta"], g["beta"], g["epsilon"], g["kappa"], self.delta)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        d["diagnostics"] = list(self.diagnostics)
        if self.rho is not None:
            d["rho"] = list(self.rho)
        return d

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("game_file")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_KEYS = {f.name for f in dataclasses.fields(RunConfig)}
_SCHEDULE_KEYS = ("k_eta", "k_beta", "k_epsilon", "k_alpha")
_GENERAL_KEYS = ("preset", "eta", "beta", "epsilon", "kappa", "u", "doubling", "epoch0")
_CHECKPOINT_KEYS = ("start", "ratio", "extra")


def _default_schedule(algorithm: str, varepsilon: float) -> dict:
    if algorithm == "matrix-hp":
        p = ScheduleParams.high_probability()
    elif algorithm == "matrix-expected":
        p = ScheduleParams.expected()
    else:
        p = default_exponents_irreducible(varepsilon)
    return {k: getattr(p, k) for k in _SCHEDULE_KEYS}


def _check_keys(section: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {', '.join(unknown)}")


def validate_config(raw: dict, base_dir: Optional[Path] = None) -> RunConfig:
    """Fill defaults and check every constraint; raises ConfigError naming offending keys."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    raw = dict(raw)
    _check_keys("config", raw, _KEYS)
    missing = [k for k in ("algorithm", "horizon", "seeds") if k not in raw]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    algorithm = raw["algorithm"]
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {algorithm!r}")
    horizon = raw["horizon"]
    if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 1:
        raise ConfigError(f"horizon must be an integer >= 1, got {horizon!r}")
    seeds = raw["seeds"]
    if isinstance(seeds, int):
        seeds = [seeds]
    if not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("seeds must be a nonempty list of nonnegative integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")

    game_file = raw.get("game_file")
    if game_file is not None and raw.get("game") is None:
        path = Path(game_file)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        game = load_game(path)
    elif raw.get("game") is not None:
        game = build_game(raw["game"])
    else:
        raise ConfigError("either game or game_file is required")
    is_matrix = isinstance(game, MatrixGame)
    if algorithm.startswith("matrix") and not is_matrix:
        raise ConfigError(f"{algorithm} needs a matrix game")
    if algorithm.startswith("markov") and is_matrix:
        raise ConfigError(f"{algorithm} needs a markov game")

    noise = raw.get("noise", "bernoulli")
    if noise not in ("bernoulli", "noiseless"):
        raise ConfigError(f"noise must be 'bernoulli' or 'noiseless', got {noise!r}")
    episodic = bool(raw.get("episodic", False))
    if episodic and is_matrix:
        raise ConfigError("episodic mode needs a markov game (reset probability is 1 - discount)")
    rho = raw.get("rho")
    if rho is not None:
        rho = tuple(float(v) for v in rho)
        n = 1 if is_matrix else game.num_states
        if len(rho) != n or min(rho) < 0 or abs(sum(rho) - 1) > 1e-9:
            raise ConfigError(f"rho must be a distribution over {n} states")
    delta = float(raw.get("delta", 0.05))
    if not 0 < delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    varepsilon = float(raw.get("varepsilon", 1.0))
    if varepsilon <= 0:
        raise ConfigError("varepsilon must be positive")
    tol = raw.get("tol")
    tol = float(tol) if tol is not None else (1e-6 if is_matrix else 1e-4)
    if tol <= 0:
        raise ConfigError("tol must be positive")

    schedule = dict(raw.get("schedule") or {})
    _check_keys("schedule", schedule, _SCHEDULE_KEYS)
    schedule = {**_default_schedule(algorithm, varepsilon), **{k: float(v) for k, v in schedule.items()}}
    try:
        ScheduleParams(**schedule)
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from None

    general = dict(raw.get("general") or {})
    _check_keys("general", general, _GENERAL_KEYS)
    if algorithm == "markov-general":
        general = _fill_general(general, game, horizon, delta)
    elif general:
        raise ConfigError("general section only applies to markov-general")

    checkpoints = dict(raw.get("checkpoints") or {})
    _check_keys("checkpoints", checkpoints, _CHECKPOINT_KEYS)
    checkpoints = {
        "start": int(checkpoints.get("start", 10)),
        "ratio": float(checkpoints.get("ratio", 1.25)),
        "extra": sorted({int(t) for t in checkpoints.get("extra", [])} | {max(horizon // 10, 1)}),
    }
    if checkpoints["start"] < 1 or checkpoints["ratio"] <= 1:
        raise ConfigError("checkpoints.start must be >= 1 and checkpoints.ratio > 1")

    diagnostics = tuple(raw.get("diagnostics") or ())
    bad = [d for d in diagnostics if d not in DIAGNOSTICS]
    if bad:
        raise ConfigError(f"unknown diagnostics: {', '.join(bad)}")
    if diagnostics and not is_matrix:
        raise ConfigError("diagnostics reg_ne_kl applies to matrix algorithms only")

    opponent = raw.get("opponent")
    if opponent is not None:
        opp = np.array(opponent, dtype=float)
        n_states = 1 if is_matrix else game.num_states
        if opp.ndim == 1:
            opp = np.tile(opp, (n_states, 1))
        if opp.shape != (n_states, game.num_actions_y) or np.any(opp < 0) or np.max(np.abs(opp.sum(1) - 1)) > 1e-9:
            raise ConfigError("opponent must be a stationary policy for the y-player")
        opponent = opp.tolist()
        if algorithm == "markov-general":
            raise ConfigError("fixed opponents are supported for matrix and irreducible runs")

    return RunConfig(
        name=str(raw.get("name", algorithm)),
        algorithm=algorithm,
        horizon=horizon,
        seeds=tuple(seeds),
        game=game_to_dict(game),
        game_file=None if game_file is None else str(game_file),
        noise=noise,
        episodic=episodic,
        rho=rho,
        delta=delta,
        varepsilon=varepsilon,
        tol=tol,
        schedule=schedule,
        general=general,
        checkpoints=checkpoints,
        diagnostics=diagnostics,
        opponent=opponent,
    )


def _fill_general(general: dict, game: MarkovGame, horizon: int, delta: float) -> dict:
    preset = general.get("preset", "practical")
    if preset not in ("practical", "theory"):
        raise ConfigError(f"general.preset must be 'practical' or 'theory', got {preset!r}")
    out = {
        "preset": preset,
        "kappa": float(general.get("kappa", 0.01)),
        "doubling": bool(general.get("doubling", False)),
        "epoch0": int(general.get("epoch0", 1000)),
        "u": float(general.get("u", 1.0)),
    }
    if out["doubling"] and preset != "theory":
        raise ConfigError("general.doubling requires general.preset = theory (it retunes u)")
    if preset == "practical":
        base = GeneralParams.practical()
        defaults = {"eta": base.eta, "beta": base.beta, "epsilon": base.epsilon}
    else:
        try:
            base = GeneralParams.theoretical(
                out["u"], game.num_states, game.num_actions_x, horizon, game.discount, delta=delta
            )
        except ValueError as exc:
            raise ConfigError(f"general.u: {exc}") from None
        defaults = {"eta": base.eta, "beta": base.beta, "epsilon": base.epsilon}
    for k in ("eta", "beta", "epsilon"):
        out[k] = float(general.get(k, defaults[k]))
    bad = []
    if not out["eta"] > 0:
        bad.append("general.eta")
    if out["eta"] > out["beta"]:
        bad += ["general.eta", "general.beta"]
    if out["beta"] > out["epsilon"]:
        bad += ["general.beta", "general.epsilon"]
    if bad:
        keys = ", ".join(dict.fromkeys(bad))
        raise ConfigError(f"constraint eta <= beta <= epsilon violated by {keys}")
    if out["kappa"] < 0:
        raise ConfigError("general.kappa must be >= 0")
    if out["epoch0"] < 1:
        raise ConfigError("general.epoch0 must be >= 1")
    return out


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    return validate_config(_read_yaml(path), base_dir=path.parent)


def dump_config(config: RunConfig) -> str:
    d = config.to_dict()
    if d["game_file"] is None:
        d.pop("game_file")
    for k in ("rho", "opponent"):
        if d[k] is None:
            d.pop(k)
    if not d["general"]:
        d.pop("general")
    return yaml.safe_dump(d, sort_keys=False, default_flow_style=None)


def save_config(config: RunConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(dump_config(config), encoding="utf-8")
