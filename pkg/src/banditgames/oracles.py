"""Ground-truth solvers used for measurement only; learners never see these."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.optimize import linprog

from banditgames.games import (
    ClippedSimplex,
    MarkovGame,
    MatrixGame,
    check_policy,
    kl_project,
    uniform,
)
from banditgames.metrics import matrix_duality_gap

logger = logging.getLogger(__name__)


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleSolution:
    value: float
    x_star: np.ndarray
    y_star: np.ndarray
    certified_gap: float
    certified: bool


@dataclass(frozen=True)
class StarTables:
    """Optimal values and Q-matrices of a Markov game, with one equilibrium policy pair."""

    v_star: np.ndarray
    q_star: np.ndarray
    x_star: np.ndarray
    y_star: np.ndarray
    discount: float


def _as_matrix(g: Union[MatrixGame, np.ndarray]) -> np.ndarray:
    return g.loss if isinstance(g, MatrixGame) else np.asarray(g, dtype=float)


def _clean(p: np.ndarray) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    return p / p.sum()


def _lp_equilibrium(M: np.ndarray):
    """Solve min_x max_b (x^T M)_b; the inequality duals give the maximizer's strategy."""
    n, m = M.shape
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([M.T, -np.ones((m, 1))])
    A_eq = np.zeros((1, n + 1))
    A_eq[0, :n] = 1.0
    bounds = [(0.0, None)] * n + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(m), A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0:
        raise OracleError(f"LP solver failed: {res.message}")
    x = _clean(res.x[:n])
    y = _clean(-res.ineqlin.marginals)
    return x, y


def _mwu_equilibrium(M: np.ndarray, tol: float, max_iter: int, check_every: int = 1000):
    """Average-iterate Hedge for both players, stopping on the exact gap of the averages."""
    n, m = M.shape
    lx = np.zeros(n)
    ly = np.zeros(m)
    sx = np.zeros(n)
    sy = np.zeros(m)
    lr = np.sqrt(8.0 * np.log(max(n, m, 2)) / max_iter)
    best = (uniform(n), uniform(m), np.inf)
    for k in range(1, max_iter + 1):
        x = np.exp(lx - lx.min())
        x /= x.sum()
        y = np.exp(ly - ly.max())
        y /= y.sum()
        sx += x
        sy += y
        lx -= lr * (M @ y)
        ly += lr * (M.T @ x)
        if k % check_every == 0 or k == max_iter:
            xa, ya = sx / k, sy / k
            gap = matrix_duality_gap(M, xa, ya)
            if gap < best[2]:
                best = (xa, ya, gap)
            if gap <= tol:
                break
    return best[0], best[1]


def solve_matrix_minimax(
    g: Union[MatrixGame, np.ndarray],
    tol: float = 1e-6,
    method: str = "lp",
    max_iter: int = 1_000_000,
) -> OracleSolution:
    """Certified minimax solution of a loss matrix (x minimizes, y maximizes).

    Args:
        g: the game or its loss matrix (any real entries are accepted, so Q
            matrices can be passed directly).
        tol: required bound on the exact duality gap of the returned pair.
        method: "lp" (HiGHS) or "mwu" (average-iterate multiplicative weights).
        max_iter: iteration budget for "mwu".

    Returns:
        OracleSolution; ``certified`` is False when the gap exceeds ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = _as_matrix(g)
    if method == "lp":
        x, y = _lp_equilibrium(M)
    elif method == "mwu":
        x, y = _mwu_equilibrium(M, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    gap = matrix_duality_gap(M, x, y)
    certified = gap <= tol
    if not certified:
        logger.warning("minimax solution uncertified: gap %.3g > tol %.3g", gap, tol)
    return OracleSolution(float(x @ M @ y), x, y, gap, certified)


def _expected_next(game: MarkovGame, v: np.ndarray) -> np.ndarray:
    return game.transition @ v


def shapley_q_star(game: MarkovGame, tol: float = 1e-4, max_sweeps: int = 100_000) -> StarTables:
    """Shapley iteration Q <- G + gamma * P val(Q) until ||Q - Q*||_inf <= tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    gamma = game.discount
    S = game.num_states
    inner_tol = tol * (1.0 - gamma) / 4.0
    stop = tol * (1.0 - gamma) / gamma
    q = np.array(game.loss, dtype=float)
    for _ in range(max_sweeps):
        sols = [solve_matrix_minimax(q[s], tol=inner_tol) for s in range(S)]
        for sol in sols:
            if not sol.certified:
                raise OracleError("inner minimax solve exceeded its tolerance")
        v = np.array([sol.value for sol in sols])
        q_next = game.loss + gamma * _expected_next(game, v)
        diff = np.max(np.abs(q_next - q))
        q = q_next
        if diff <= stop:
            break
    else:
        raise OracleError("Shapley iteration did not converge within max_sweeps")
    sols = [solve_matrix_minimax(q[s], tol=inner_tol) for s in range(S)]
    return StarTables(
        v_star=np.array([sol.value for sol in sols]),
        q_star=q,
        x_star=np.array([sol.x_star for sol in sols]),
        y_star=np.array([sol.y_star for sol in sols]),
        discount=gamma,
    )


def induced_mdp(game: MarkovGame, opponent: np.ndarray, side: str):
    """Rewards (S, A) and transitions (S, A, S) seen by one player when the other is frozen."""
    if side == "x":
        pol = check_policy(opponent, game.num_states, game.num_actions_y)
        r = np.einsum("sab,sb->sa", game.loss, pol)
        P = np.einsum("sabt,sb->sat", game.transition, pol)
    elif side == "y":
        pol = check_policy(opponent, game.num_states, game.num_actions_x)
        r = np.einsum("sab,sa->sb", game.loss, pol)
        P = np.einsum("sabt,sa->sbt", game.transition, pol)
    else:
        raise ValueError(f"side must be 'x' or 'y', got {side!r}")
    return r, P


def best_response_value(
    game: MarkovGame, opponent: np.ndarray, side: str, tol: float = 1e-6, max_iter: int = 1_000_000
) -> np.ndarray:
    """Optimal per-state value against a frozen stationary opponent.

    ``side="x"`` returns min_x V_{x,y} for the given y; ``side="y"`` returns
    max_y V_{x,y} for the given x.
    """
    r, P = induced_mdp(game, opponent, side)
    gamma = game.discount
    stop = tol * (1.0 - gamma) / gamma
    best = np.min if side == "x" else np.max
    v = np.zeros(game.num_states)
    for _ in range(max_iter):
        v_next = best(r + gamma * (P @ v), axis=1)
        diff = np.max(np.abs(v_next - v))
        v = v_next
        if diff <= stop:
            return v
    raise OracleError("best-response value iteration did not converge")


def policy_value(game: MarkovGame, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact V_{x,y} by solving (I - gamma P_xy) V = r_xy."""
    x = check_policy(x, game.num_states, game.num_actions_x)
    y = check_policy(y, game.num_states, game.num_actions_y)
    r = np.einsum("sa,sab,sb->s", x, game.loss, y)
    P = np.einsum("sa,sabt,sb->st", x, game.transition, y)
    return np.linalg.solve(np.eye(game.num_states) - game.discount * P, r)


@dataclass(frozen=True)
class RegularizedSolution:
    x: np.ndarray
    y: np.ndarray
    f_gap: float
    converged: bool
    iterations: int


def _regularized_best_responses(M, x, y, epsilon, domain):
    bx = kl_project(-(M @ y) / epsilon, domain, log_space=True)
    by = kl_project((M.T @ x) / epsilon, domain, log_space=True)
    return bx, by


def _neg_entropy(p):
    return float(np.sum(p * np.log(p)))


def regularized_gap(M, x, y, epsilon: float, domain: ClippedSimplex) -> float:
    """max_y' f(x, y') - min_x' f(x', y) for f = x^T M y - eps H(x) + eps H(y)."""
    bx, by = _regularized_best_responses(M, x, y, epsilon, domain)
    upper = x @ M @ by + epsilon * _neg_entropy(x) - epsilon * _neg_entropy(by)
    lower = bx @ M @ y + epsilon * _neg_entropy(bx) - epsilon * _neg_entropy(y)
    return float(max(upper - lower, 0.0))


def solve_regularized_ne(
    g_matrix,
    epsilon: float,
    domain: ClippedSimplex,
    tol: float = 1e-6,
    max_iter: int = 1_000_000,
) -> RegularizedSolution:
    """Saddle point of x^T G y - eps H(x) + eps H(y) over domain x domain.

    Runs entropic mirror-prox (extragradient with KL steps) and stops once the
    f-gap certifies l-infinity accuracy ``tol``: the objective is
    eps-strongly convex-concave in l1, so gap <= eps tol^2 / 4 suffices.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    M = np.asarray(g_matrix, dtype=float)
    if M.shape != (domain.num_actions, domain.num_actions):
        raise ValueError("matrix and domain sizes disagree")
    # step size keeps the KL-smoothness of the regularized operator below 1
    lr = 1.0 / (2.0 * np.max(np.abs(M)) + 2.0 * epsilon + 1e-12)
    target = epsilon * tol * tol / 4.0
    x = uniform(domain.num_actions)
    y = uniform(domain.num_actions)
    # f-gap evaluation bottoms out at rounding level
    noise = 1e-14 * (np.max(np.abs(M)) + epsilon * np.log(domain.num_actions) + 1.0)
    # once the gap is at rounding level, certify by the best-response residual
    # scaled by the Lipschitz constant of the regularized best response
    res_tol = tol * min(1.0, epsilon / (np.max(np.abs(M)) + 1e-12))
    it = 0
    converged = False
    while True:
        gap = regularized_gap(M, x, y, epsilon, domain)
        if gap <= target:
            converged = True
            break
        if gap <= noise:
            bx, by = _regularized_best_responses(M, x, y, epsilon, domain)
            if max(np.max(np.abs(bx - x)), np.max(np.abs(by - y))) <= res_tol:
                converged = True
                break
        if it >= max_iter:
            break
        for _ in range(50):
            it += 1
            lx, ly = np.log(x), np.log(y)
            xh = kl_project((1 - lr * epsilon) * lx - lr * (M @ y), domain, log_space=True)
            yh = kl_project((1 - lr * epsilon) * ly + lr * (M.T @ x), domain, log_space=True)
            x = kl_project(lx - lr * (M @ yh + epsilon * np.log(xh)), domain, log_space=True)
            y = kl_project(ly + lr * (M.T @ xh - epsilon * np.log(yh)), domain, log_space=True)
    return RegularizedSolution(x, y, gap, bool(converged), it)
