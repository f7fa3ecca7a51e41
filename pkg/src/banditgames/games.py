"""Game definitions, simplex arithmetic, step-size schedules and the OMD kernel.

Everything here is immutable or pure. Strategies are plain 1-D float arrays;
stationary policies are 2-D arrays with one row per state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from banditgames import _kernels

SIMPLEX_ATOL = 1e-12

MixedStrategy = np.ndarray
StationaryPolicy = np.ndarray


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


def check_strategy(p, num_actions: Optional[int] = None, atol: float = SIMPLEX_ATOL) -> np.ndarray:
    """Validate a mixed strategy and return it as a float array."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"strategy must be 1-D, got shape {p.shape}")
    if num_actions is not None and p.shape[0] != num_actions:
        raise ValueError(f"strategy has {p.shape[0]} entries, expected {num_actions}")
    if np.any(p < -atol) or abs(p.sum() - 1.0) > max(atol, 1e-12 * p.shape[0]):
        raise ValueError(f"not a probability vector: {p}")
    return p


def check_policy(policy, num_states: int, num_actions: int) -> np.ndarray:
    """Validate a stationary policy of shape (S, A); a 1-D strategy is broadcast to all states."""
    policy = np.asarray(policy, dtype=float)
    if policy.ndim == 1:
        policy = np.tile(policy, (num_states, 1))
    if policy.shape != (num_states, num_actions):
        raise ValueError(f"policy shape {policy.shape} != {(num_states, num_actions)}")
    for row in policy:
        check_strategy(row, atol=1e-9)
    return policy


def uniform(num_actions: int) -> np.ndarray:
    return np.full(num_actions, 1.0 / num_actions)


@dataclass(frozen=True)
class MatrixGame:
    """Two-player zero-sum matrix game; ``loss[a, b]`` is paid by the x-player."""

    loss: np.ndarray

    def __post_init__(self):
        loss = _frozen(self.loss)
        if loss.ndim != 2 or min(loss.shape) < 1:
            raise ValueError(f"loss must be a non-empty matrix, got shape {loss.shape}")
        if np.any(loss < 0.0) or np.any(loss > 1.0) or not np.all(np.isfinite(loss)):
            raise ValueError("loss entries must lie in [0, 1]")
        object.__setattr__(self, "loss", loss)

    @property
    def num_actions_x(self) -> int:
        return self.loss.shape[0]

    @property
    def num_actions_y(self) -> int:
        return self.loss.shape[1]

    def as_markov(self, discount: float = 0.5) -> "MarkovGame":
        """Single-state Markov game that repeats this matrix game."""
        return MarkovGame(self.loss[None], np.ones(self.loss.shape + (1,))[None], discount)


@dataclass(frozen=True)
class MarkovGame:
    """Discounted two-player zero-sum Markov game.

    Attributes:
        loss: array (S, A_x, A_y) of per-state losses in [0, 1].
        transition: array (S, A_x, A_y, S); ``transition[s, a, b]`` is the
            next-state distribution.
        discount: gamma in [1/2, 1).
    """

    loss: np.ndarray
    transition: np.ndarray
    discount: float

    def __post_init__(self):
        loss = _frozen(self.loss)
        trans = _frozen(self.transition)
        if loss.ndim != 3:
            raise ValueError(f"loss must have shape (S, A, A), got {loss.shape}")
        S = loss.shape[0]
        if trans.shape != loss.shape + (S,):
            raise ValueError(f"transition shape {trans.shape} != {loss.shape + (S,)}")
        if np.any(loss < 0.0) or np.any(loss > 1.0) or not np.all(np.isfinite(loss)):
            raise ValueError("loss entries must lie in [0, 1]")
        if np.any(trans < 0.0) or np.max(np.abs(trans.sum(axis=-1) - 1.0)) > 1e-12:
            raise ValueError("each transition vector must be nonnegative and sum to 1")
        if not 0.5 <= self.discount < 1.0:
            raise ValueError(f"discount must lie in [0.5, 1), got {self.discount}")
        object.__setattr__(self, "loss", loss)
        object.__setattr__(self, "transition", trans)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def num_states(self) -> int:
        return self.loss.shape[0]

    @property
    def num_actions_x(self) -> int:
        return self.loss.shape[1]

    @property
    def num_actions_y(self) -> int:
        return self.loss.shape[2]

    @property
    def max_value(self) -> float:
        return 1.0 / (1.0 - self.discount)


@dataclass(frozen=True)
class ClippedSimplex:
    """Probability vectors over ``num_actions`` actions with every entry >= ``floor``."""

    num_actions: int
    floor: float

    def __post_init__(self):
        if self.num_actions < 1:
            raise ValueError("num_actions must be >= 1")
        if not 0.0 < self.floor <= 1.0 / self.num_actions * (1 + 1e-12):
            raise ValueError(f"floor {self.floor} outside (0, 1/{self.num_actions}]")

    @classmethod
    def at_step(cls, num_actions: int, t: int) -> "ClippedSimplex":
        """The shrinking domain with floor 1/(A t^2)."""
        return cls(num_actions, 1.0 / (num_actions * t * t))

    def contains(self, x, atol: float = SIMPLEX_ATOL) -> bool:
        x = np.asarray(x)
        return x.shape == (self.num_actions,) and bool(
            np.all(x >= self.floor - atol) and abs(x.sum() - 1.0) <= atol
        )


@dataclass(frozen=True)
class ScheduleParams:
    """Polynomial decay exponents for eta, beta, epsilon and alpha.

    With ``markov=False``: eta_t = t^-k_eta, epsilon_t = t^-k_epsilon.
    With ``markov=True``: eta_t = (1-gamma) t^-k_eta, epsilon_t = t^-k_epsilon / (1-gamma).
    beta_t = t^-k_beta and alpha_t = t^-k_alpha in both cases.
    """

    k_eta: float = 5 / 8
    k_beta: float = 3 / 8
    k_epsilon: float = 1 / 8
    k_alpha: float = 1.0
    markov: bool = False

    def __post_init__(self):
        for name in ("k_eta", "k_beta", "k_epsilon", "k_alpha"):
            k = getattr(self, name)
            if not 0.0 < k <= 1.0:
                raise ValueError(f"{name}={k} outside (0, 1]")

    @classmethod
    def high_probability(cls) -> "ScheduleParams":
        return cls(5 / 8, 3 / 8, 1 / 8)

    @classmethod
    def expected(cls) -> "ScheduleParams":
        # beta is unused by the expected-rate variant; k_beta keeps its default
        return cls(k_eta=1 / 2, k_epsilon=1 / 6)


@dataclass(frozen=True)
class Schedule:
    eta: float
    beta: float
    epsilon: float
    alpha: float


def schedule_at(params: ScheduleParams, t: int, gamma: Optional[float] = None) -> Schedule:
    """Evaluate the step-size schedule at step (or visit count) ``t >= 1``."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    eta = t ** -params.k_eta
    eps = t ** -params.k_epsilon
    if params.markov:
        if gamma is None:
            raise ValueError("Markov scaling needs gamma")
        eta *= 1.0 - gamma
        eps /= 1.0 - gamma
    return Schedule(eta, t ** -params.k_beta, eps, t ** -params.k_alpha)


def kl_divergence(p, q) -> float:
    """KL(p, q) = sum_a p_a ln(p_a / q_a), with 0 ln 0 = 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    support = p > 0
    if np.any(q[support] <= 0):
        raise ValueError("KL undefined: q vanishes where p is positive")
    ps, qs = p[support], q[support]
    return max(float(np.sum(ps * (np.log(ps) - np.log(qs)))), 0.0)


def entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def ix_loss_estimator(action_taken: int, observed_loss: float, x, beta: float, epsilon: float) -> np.ndarray:
    """Implicit-exploration loss estimate plus the entropy gradient term.

    g_a = 1[a == action_taken] * loss / (x_a + beta) + epsilon * ln x_a
    """
    x = np.asarray(x, dtype=float)
    g = epsilon * np.log(x)
    g[action_taken] += observed_loss / (x[action_taken] + beta)
    return g


def kl_project(w, domain: ClippedSimplex, log_space: bool = False) -> np.ndarray:
    """KL projection of positive weights ``w`` (or log-weights) onto ``domain``."""
    logw = np.asarray(w, dtype=float) if log_space else np.log(np.asarray(w, dtype=float))
    if logw.shape != (domain.num_actions,):
        raise ValueError(f"weights shape {logw.shape} does not match domain of size {domain.num_actions}")
    if not np.all(logw < np.inf) or np.any(np.isnan(logw)) or np.all(logw == -np.inf):
        raise FloatingPointError("weights are not finite")
    return _kernels.clipped_projection_from_log(np.ascontiguousarray(logw), float(domain.floor))


def omd_step(x, g, eta: float, domain: ClippedSimplex) -> np.ndarray:
    """argmin over the clipped simplex of <x', g> + KL(x', x) / eta.

    The multiplicative update is done in log space, then projected with the
    exact water-filling rule x'_a = max(floor, w_a / Z).
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    if x.shape != g.shape or x.shape != (domain.num_actions,):
        raise ValueError("dimension mismatch between x, g and domain")
    if np.any(x <= 0):
        raise ValueError("x must be strictly positive")
    if eta <= 0:
        raise ValueError("eta must be positive")
    logw = np.log(x) - eta * g
    if not np.all(np.isfinite(logw)):
        raise FloatingPointError("non-finite multiplicative update; eta * g overflowed")
    return _kernels.clipped_projection_from_log(logw, float(domain.floor))


def sample_action(p, rng: np.random.Generator) -> int:
    """Draw one action index from the mixed strategy ``p``."""
    return int(_kernels.sample_index(np.asarray(p, dtype=float), rng.random()))
