"""Uncoupled bandit learner for matrix games.

Each player runs its own instance; the only inputs an instance ever receives
are its own sampled action and its own scalar loss.
"""

from __future__ import annotations

import copy
from typing import Optional

import numpy as np

from banditgames import _kernels
from banditgames.games import ScheduleParams, schedule_at, uniform

VARIANTS = ("high-probability", "expected")


class MatrixLearner:
    """Entropy-regularized Exp3-IX style learner on the shrinking clipped simplex.

    ``variant="high-probability"`` uses the implicit-exploration denominator
    x_a + beta_t; ``variant="expected"`` drops beta and defaults to the
    k_eta = 1/2, k_epsilon = 1/6 schedule.
    """

    def __init__(
        self,
        num_actions: int,
        variant: str = "high-probability",
        params: Optional[ScheduleParams] = None,
        rng: Optional[np.random.Generator] = None,
        role: str = "x",
    ):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
        if params is None:
            params = ScheduleParams.high_probability() if variant == "high-probability" else ScheduleParams.expected()
        if params.markov:
            raise ValueError("matrix learner needs matrix-game schedule scaling")
        self.num_actions = num_actions
        self.variant = variant
        self.params = params
        self.role = role
        self.rng = rng if rng is not None else np.random.default_rng()
        self.t = 1
        self.x = uniform(num_actions)

    @property
    def policy(self) -> np.ndarray:
        return self.x

    def act(self, state: int = 0) -> int:
        return int(_kernels.sample_index(self.x, self.rng.random()))

    def update(self, action_taken: int, observed_loss: float) -> None:
        if not 0.0 <= observed_loss <= 1.0:
            raise ValueError(f"observed loss {observed_loss} outside [0, 1]")
        sched = schedule_at(self.params, self.t)
        beta = sched.beta if self.variant == "high-probability" else 0.0
        floor = 1.0 / (self.num_actions * (self.t + 1) ** 2)
        self.x = _kernels.ix_update(self.x, action_taken, observed_loss, beta, sched.epsilon, sched.eta, floor)
        self.t += 1

    def observe(self, obs) -> None:
        self.update(obs.action, obs.loss)

    def snapshot(self) -> dict:
        return {
            "kind": "matrix",
            "variant": self.variant,
            "role": self.role,
            "t": self.t,
            "x": self.x.tolist(),
        }

    def copy(self) -> "MatrixLearner":
        return copy.deepcopy(self)
