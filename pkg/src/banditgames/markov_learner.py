"""Uncoupled learners for Markov games, keyed by the visited state."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from banditgames import _kernels
from banditgames.games import ScheduleParams, schedule_at, uniform


def default_exponents_irreducible(varepsilon: float = 1.0) -> ScheduleParams:
    """Exponents k_alpha = 9/(9+v), k_epsilon = 1/(9+v), k_beta = 3/(9+v), k_eta = 5/(9+v)."""
    if varepsilon <= 0:
        raise ValueError("varepsilon must be positive")
    d = 9.0 + varepsilon
    return ScheduleParams(k_eta=5 / d, k_beta=3 / d, k_epsilon=1 / d, k_alpha=9 / d, markov=True)


def alpha_weights(alphas) -> np.ndarray:
    """Weights alpha_i * prod_{j>i} (1 - alpha_j) of each target in the running average."""
    alphas = np.asarray(alphas, dtype=float)
    w = np.empty_like(alphas)
    if alphas.size == 0:
        return w
    # w[i] = alpha_i * prod_{j=i+1}^{tau} (1 - alpha_j), built from the right
    w[-1] = 1.0
    np.cumprod(1.0 - alphas[:0:-1], out=w[-2::-1])
    w *= alphas
    return w


class IrreducibleLearner:
    """Per-state entropy-regularized bandit learner with slowly moving value estimates.

    Policies, visit counts and values live in arrays indexed by state; a step
    touches only the row of the state just visited, and every schedule is
    evaluated at that state's visit count rather than the global clock.
    """

    def __init__(
        self,
        num_states: int,
        num_actions: int,
        discount: float,
        params: Optional[ScheduleParams] = None,
        rng: Optional[np.random.Generator] = None,
        role: str = "x",
    ):
        self.params = params if params is not None else default_exponents_irreducible(1.0)
        if not self.params.markov:
            raise ValueError("irreducible learner needs Markov schedule scaling")
        self.num_states = num_states
        self.num_actions = num_actions
        self.discount = discount
        self.role = role
        self.rng = rng if rng is not None else np.random.default_rng()
        self.x = np.tile(uniform(num_actions), (num_states, 1))
        self.visits = np.zeros(num_states, dtype=np.int64)
        self.values = np.full(num_states, 1.0 / (2.0 * (1.0 - discount)))

    @property
    def policy(self) -> np.ndarray:
        return self.x

    def act(self, state: int) -> int:
        return int(_kernels.sample_index(self.x[state], self.rng.random()))

    def step(self, s: int, action_taken: int, own_loss: float, s_next: int) -> None:
        if not 0.0 <= own_loss <= 1.0:
            raise ValueError(f"observed loss {own_loss} outside [0, 1]")
        tau = int(self.visits[s]) + 1
        sched = schedule_at(self.params, tau, self.discount)
        target = own_loss + self.discount * self.values[s_next]
        floor = 1.0 / (self.num_actions * (tau + 1) ** 2)
        self.x[s] = _kernels.ix_update(
            self.x[s], action_taken, target, sched.beta, sched.epsilon, sched.eta, floor
        )
        self.values[s] = (1.0 - sched.alpha) * self.values[s] + sched.alpha * target
        self.visits[s] = tau

    def observe(self, obs) -> None:
        self.step(obs.state, obs.action, obs.loss, obs.next_state)

    def snapshot(self) -> dict:
        return {
            "kind": "irreducible",
            "role": self.role,
            "x": self.x.tolist(),
            "visits": self.visits.tolist(),
            "values": self.values.tolist(),
        }

    def copy(self) -> "IrreducibleLearner":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class GeneralParams:
    """Constant step size, IX offset and entropy weight; must satisfy eta <= beta <= epsilon."""

    eta: float
    beta: float
    epsilon: float
    kappa: float = 0.01
    delta: float = 0.05

    def __post_init__(self):
        if not 0 < self.eta <= self.beta <= self.epsilon:
            raise ValueError(f"need 0 < eta <= beta <= epsilon, got {self.eta}, {self.beta}, {self.epsilon}")
        if self.kappa < 0 or not 0 < self.delta < 1:
            raise ValueError("kappa must be >= 0 and delta in (0, 1)")

    @classmethod
    def practical(cls, kappa: float = 0.01, delta: float = 0.05) -> "GeneralParams":
        return cls(eta=0.01, beta=0.05, epsilon=0.05, kappa=kappa, delta=delta)

    @classmethod
    def theoretical(
        cls, u: float, num_states: int, num_actions: int, horizon: int, discount: float,
        kappa: float = 0.01, delta: float = 0.05,
    ) -> "GeneralParams":
        """Theory-shaped tuning for target accuracy ``u`` with every constant set to 1."""
        if not 0 < u <= 1.0 / (1.0 - discount):
            raise ValueError(f"u must lie in (0, 1/(1-gamma)], got {u}")
        log_term = math.log(num_states * num_actions * horizon / delta)
        c = 1.0 - discount
        return cls(
            eta=u**5 * c**9 / (num_actions**2 * log_term**11),
            beta=u**3 * c**6 / (num_actions * log_term**6),
            epsilon=u * c / log_term,
            kappa=kappa,
            delta=delta,
        )


class GeneralLearner:
    """Optimistic/pessimistic Nash-V style learner with entropy regularization.

    ``side="lower"`` is the x-player: its value estimate subtracts the bonus
    and is clamped below at 0. ``side="upper"`` is the y-player's mirror: it
    keeps the x-player-frame estimate that adds the bonus and is clamped above
    at 1/(1-gamma). Both sides receive only their own loss (sigma for x,
    1 - sigma for y).
    """

    def __init__(
        self,
        num_states: int,
        num_actions: int,
        discount: float,
        horizon: int,
        params: Optional[GeneralParams] = None,
        side: str = "lower",
        rng: Optional[np.random.Generator] = None,
    ):
        if side not in ("lower", "upper"):
            raise ValueError(f"side must be 'lower' or 'upper', got {side!r}")
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.params = params if params is not None else GeneralParams.practical()
        self.num_states = num_states
        self.num_actions = num_actions
        self.discount = discount
        self.horizon = horizon
        self.side = side
        self.rng = rng if rng is not None else np.random.default_rng()
        self.vmax = 1.0 / (1.0 - discount)
        self.h = math.log(horizon) / (1.0 - discount)
        self.floor = 1.0 / (num_actions * horizon)
        p = self.params
        self._bonus_scale = (
            p.kappa * num_actions * math.log(num_states * num_actions * horizon / p.delta) ** 2
            / (1.0 - discount) ** 2
        )
        self.x = np.tile(uniform(num_actions), (num_states, 1))
        self.visits = np.zeros(num_states, dtype=np.int64)
        self.steps = 0
        init = 0.0 if side == "lower" else self.vmax
        self.raw_values = np.full(num_states, init)
        self.values = np.full(num_states, init)

    @property
    def policy(self) -> np.ndarray:
        return self.x

    def alpha(self, tau: int) -> float:
        return (self.h + 1.0) / (self.h + tau)

    def bonus(self, tau: int) -> float:
        return self._bonus_scale * (self.params.beta + self.alpha(tau) / self.params.eta)

    def act(self, state: int) -> int:
        return int(_kernels.sample_index(self.x[state], self.rng.random()))

    def step(self, s: int, action_taken: int, own_loss: float, s_next: int) -> None:
        if not 0.0 <= own_loss <= 1.0:
            raise ValueError(f"observed loss {own_loss} outside [0, 1]")
        if self.steps >= self.horizon:
            raise RuntimeError(f"horizon T={self.horizon} exhausted")
        p = self.params
        gamma = self.discount
        tau = int(self.visits[s]) + 1
        alpha = self.alpha(tau)
        bns = self.bonus(tau)
        v_next = self.values[s_next]
        if self.side == "lower":
            target = own_loss + gamma * v_next
            self.raw_values[s] = (1.0 - alpha) * self.raw_values[s] + alpha * (target - bns)
            self.values[s] = max(self.raw_values[s], 0.0)
        else:
            # own-frame estimate is vmax - V_upper; the loss it sees is 1 - sigma
            target = own_loss + gamma * (self.vmax - v_next)
            sigma = 1.0 - own_loss
            self.raw_values[s] = (1.0 - alpha) * self.raw_values[s] + alpha * (sigma + gamma * v_next + bns)
            self.values[s] = min(self.raw_values[s], self.vmax)
        self.x[s] = _kernels.ix_update(self.x[s], action_taken, target, p.beta, p.epsilon, p.eta, self.floor)
        self.visits[s] = tau
        self.steps += 1

    def observe(self, obs) -> None:
        self.step(obs.state, obs.action, obs.loss, obs.next_state)

    def snapshot(self) -> dict:
        return {
            "kind": "general",
            "side": self.side,
            "x": self.x.tolist(),
            "visits": self.visits.tolist(),
            "raw_values": self.raw_values.tolist(),
            "values": self.values.tolist(),
            "steps": self.steps,
        }

    def copy(self) -> "GeneralLearner":
        return copy.deepcopy(self)
