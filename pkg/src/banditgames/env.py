"""The uncoupled interaction protocol.

The environment draws the realized loss and next state, then hands each
player an :class:`Observation` built only from that player's own action.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Optional, Sequence, Union

import numpy as np

from banditgames import _kernels
from banditgames.games import MarkovGame, MatrixGame, check_policy, check_strategy, uniform

NOISE_MODELS = ("bernoulli", "noiseless")


class Observation(NamedTuple):
    """Everything one player learns in a round."""

    state: int
    action: int
    loss: float
    next_state: int


class StepOutcome(NamedTuple):
    state: int
    a: int
    b: int
    sigma: float
    next_state: int
    reset: bool

    @property
    def x_observation(self) -> float:
        return self.sigma

    @property
    def y_observation(self) -> float:
        return 1.0 - self.sigma


class Environment:
    """Simulator for a matrix game (one state) or a Markov game.

    Args:
        game: MatrixGame or MarkovGame.
        rng: the environment's own random stream.
        noise: "bernoulli" draws sigma ~ Bernoulli(G); "noiseless" returns G.
        reset_prob: per-step probability that the next state is redrawn from
            ``rho`` instead of the transition kernel (episodic mode).
        rho: initial / reset distribution over states (uniform by default).
    """

    def __init__(
        self,
        game: Union[MatrixGame, MarkovGame],
        rng: Optional[np.random.Generator] = None,
        noise: str = "bernoulli",
        reset_prob: float = 0.0,
        rho=None,
    ):
        if noise not in NOISE_MODELS:
            raise ValueError(f"noise must be one of {NOISE_MODELS}, got {noise!r}")
        if not 0.0 <= reset_prob < 1.0:
            raise ValueError("reset_prob must lie in [0, 1)")
        self.game = game
        if isinstance(game, MatrixGame):
            self._loss = game.loss[None]
            self._trans = None
            num_states = 1
        else:
            self._loss = game.loss
            self._trans = game.transition
            num_states = game.num_states
        self.num_states = num_states
        self.noise = noise
        self.reset_prob = reset_prob
        self.rho = uniform(num_states) if rho is None else check_strategy(rho, num_states, atol=1e-9)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.t = 0
        self.resets = 0
        self.state = self._draw_initial()

    def _draw_initial(self) -> int:
        if self.num_states == 1:
            return 0
        return int(_kernels.sample_index(self.rho, self.rng.random()))

    def step(self, a: int, b: int) -> StepOutcome:
        s = self.state
        mean = self._loss[s, a, b]
        if self.noise == "bernoulli":
            sigma = 1.0 if self.rng.random() < mean else 0.0
        else:
            sigma = float(mean)
        reset = False
        if self.reset_prob > 0.0 and self.rng.random() < self.reset_prob:
            reset = True
            self.resets += 1
            s_next = self._draw_initial()
        elif self._trans is None:
            s_next = 0
        else:
            s_next = int(_kernels.sample_index(self._trans[s, a, b], self.rng.random()))
        self.state = s_next
        self.t += 1
        return StepOutcome(s, a, b, sigma, s_next, reset)


def env_step(env: Environment, a: int, b: int) -> StepOutcome:
    return env.step(a, b)


class FixedPolicy:
    """A stationary action source that ignores feedback."""

    def __init__(self, policy, num_states: int = 1, rng: Optional[np.random.Generator] = None):
        policy = np.asarray(policy, dtype=float)
        self.x = check_policy(policy, num_states, policy.shape[-1])
        self.rng = rng if rng is not None else np.random.default_rng()

    @property
    def policy(self) -> np.ndarray:
        return self.x

    def act(self, state: int = 0) -> int:
        return int(_kernels.sample_index(self.x[state], self.rng.random()))

    def observe(self, obs) -> None:
        pass


@dataclass
class Trace:
    """Measurement rows of one run plus the loss totals episodic checks need."""

    rows: list = field(default_factory=list)
    steps: int = 0
    total_loss: float = 0.0
    reset_prob: float = 0.0
    resets: int = 0

    def add(self, t: int, metric: str, value: float, state: Optional[int] = None) -> None:
        self.rows.append((t, metric, float(value), state))

    def __len__(self) -> int:
        return len(self.rows)


Hook = Callable[[int, StepOutcome], None]
Probe = Callable[[int], Iterable[tuple]]


def run_selfplay(
    env: Environment,
    learner_x,
    learner_y,
    horizon: int,
    hooks: Sequence[Hook] = (),
    checkpoints: Iterable[int] = (),
    probes: Sequence[Probe] = (),
) -> Trace:
    """Play ``horizon`` rounds of the uncoupled protocol.

    Each ``hook(t, outcome)`` fires after every round. At each step listed in
    ``checkpoints`` every ``probe(t)`` is called and must yield
    ``(metric, value, state)`` tuples, which become trace rows.
    """
    trace = Trace(reset_prob=env.reset_prob)
    marks = set(int(t) for t in checkpoints)
    total = 0.0
    for t in range(1, horizon + 1):
        s = env.state
        a = learner_x.act(s)
        b = learner_y.act(s)
        out = env.step(a, b)
        learner_x.observe(Observation(s, a, out.sigma, out.next_state))
        learner_y.observe(Observation(s, b, 1.0 - out.sigma, out.next_state))
        total += out.sigma
        for hook in hooks:
            hook(t, out)
        if t in marks:
            for probe in probes:
                for metric, value, state in probe(t):
                    trace.add(t, metric, value, state)
    trace.steps = horizon
    trace.total_loss = total
    trace.resets = env.resets
    return trace
