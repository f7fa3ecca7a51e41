"""Convergence measurements. All of these use full knowledge of the game."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from banditgames.games import MarkovGame, MatrixGame, kl_divergence


@dataclass(frozen=True)
class GapReport:
    t: int
    kind: str
    value: float
    state: Optional[int] = None

    def __post_init__(self):
        if self.value < -1e-9:
            raise ValueError(f"negative gap {self.value} for {self.kind}")


def _loss(g) -> np.ndarray:
    return g.loss if isinstance(g, MatrixGame) else np.asarray(g, dtype=float)


def matrix_duality_gap(g, x, y) -> float:
    """max_b (x^T G)_b - min_a (G y)_a, best responses taken over pure strategies."""
    M = _loss(g)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if M.shape != (x.shape[0], y.shape[0]):
        raise ValueError(f"strategy sizes {x.shape, y.shape} do not match matrix {M.shape}")
    # nonnegative in exact arithmetic; clamp rounding noise
    return max(float(np.max(x @ M) - np.min(M @ y)), 0.0)


def best_response_regret(g, x, y) -> float:
    """How much the x-player loses by playing x instead of a best response to y."""
    M = _loss(g)
    return float(np.asarray(x) @ M @ np.asarray(y) - np.min(M @ np.asarray(y)))


def markov_lastiterate_gap(game: MarkovGame, x, y, tol: float = 1e-6) -> float:
    """max_s (max_y' V^s_{x,y'} - min_x' V^s_{x',y}), accurate to 2 tol."""
    from banditgames.oracles import best_response_value

    upper = best_response_value(game, x, "y", tol)
    lower = best_response_value(game, y, "x", tol)
    return float(np.max(upper - lower))


def markov_rationality_gap(game: MarkovGame, x, y_fixed, tol: float = 1e-6) -> float:
    """max_s (V^s_{x,y} - min_x' V^s_{x',y}) against a frozen opponent y."""
    from banditgames.oracles import best_response_value, policy_value

    return float(np.max(policy_value(game, x, y_fixed) - best_response_value(game, y_fixed, "x", tol)))


def path_gap(q_star, s: int, x_s, y_s) -> float:
    """Duality gap of (x_s, y_s) in the matrix game Q*^s."""
    q = q_star.q_star if hasattr(q_star, "q_star") else np.asarray(q_star)
    return matrix_duality_gap(q[s], x_s, y_s)


def max_state_gap(q_star, x, y) -> float:
    """Largest per-state path gap over all states."""
    q = q_star.q_star if hasattr(q_star, "q_star") else np.asarray(q_star)
    return max(path_gap(q, s, x[s], y[s]) for s in range(q.shape[0]))


def value_error(v_table, star) -> float:
    """max_s |V^s - V*^s|."""
    v = np.asarray(v_table, dtype=float)
    if v.shape != star.v_star.shape:
        raise ValueError(f"value table shape {v.shape} != {star.v_star.shape}")
    return float(np.max(np.abs(v - star.v_star)))


def joint_kl(x_ref, y_ref, x, y) -> float:
    """KL(z_ref, z) for concatenated strategy pairs."""
    return kl_divergence(x_ref, x) + kl_divergence(y_ref, y)


def episodic_payoff_check(trace, rho, star, gamma: float) -> float:
    """|empirical mean per-step loss - (1 - gamma) E_rho[V*]| for an episodic run."""
    if not trace.reset_prob > 0 or not math.isclose(trace.reset_prob, 1.0 - gamma, rel_tol=1e-12):
        raise ValueError("episodic_payoff_check needs a trace from an episodic run with reset_prob = 1 - gamma")
    if trace.steps == 0:
        raise ValueError("empty trace")
    target = (1.0 - gamma) * float(np.dot(rho, star.v_star))
    return abs(trace.total_loss / trace.steps - target)


def geometric_checkpoints(horizon: int, start: int = 10, ratio: float = 1.25, extra=()) -> list:
    """Sorted steps {ceil(start * ratio^k)} up to ``horizon``, plus ``extra`` and the horizon."""
    points = set()
    k = 0
    while True:
        t = math.ceil(start * ratio**k)
        if t > horizon:
            break
        points.add(t)
        k += 1
    points.update(int(t) for t in extra if 1 <= t <= horizon)
    if horizon >= 1:
        points.add(horizon)
    return sorted(points)
