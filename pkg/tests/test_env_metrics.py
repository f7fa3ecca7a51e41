import math
from itertools import permutations

import numpy as np
import pytest

from banditgames import metrics
from banditgames.env import Environment, FixedPolicy, Observation, run_selfplay
from banditgames.games import MarkovGame, MatrixGame, uniform
from banditgames.matrix_learner import MatrixLearner
from banditgames.oracles import shapley_q_star, solve_matrix_minimax

MP = MatrixGame(np.eye(2))


def random_markov(rng, S, A, gamma):
    loss = rng.random((S, A, A))
    trans = rng.random((S, A, A, S)) + 0.05
    trans /= trans.sum(axis=-1, keepdims=True)
    return MarkovGame(loss, trans, gamma)


# --- environment ----------------------------------------------------------------

def test_degenerate_loss_is_deterministic():
    env = Environment(MP, np.random.default_rng(0))
    assert all(env.step(0, 0).sigma == 1.0 for _ in range(1000))
    assert all(env.step(0, 1).sigma == 0.0 for _ in range(1000))


def test_bernoulli_mean():
    env = Environment(MatrixGame([[0.3]]), np.random.default_rng(1))
    n = 10**6
    mean = sum(env.step(0, 0).sigma for _ in range(n)) / n
    assert abs(mean - 0.3) <= 0.0015


def test_noiseless_returns_mean():
    env = Environment(MatrixGame([[0.3]]), noise="noiseless")
    assert env.step(0, 0).sigma == 0.3


def test_deterministic_transition():
    trans = np.zeros((2, 1, 1, 2))
    trans[:, 0, 0, 1] = 1.0
    env = Environment(MarkovGame(np.zeros((2, 1, 1)), trans, 0.5), np.random.default_rng(0))
    for _ in range(50):
        assert env.step(0, 0).next_state == 1


def test_episodic_mean_episode_length():
    game = random_markov(np.random.default_rng(0), 2, 2, 0.5)
    env = Environment(game, np.random.default_rng(3), reset_prob=0.5)
    lengths, run = [], 0
    while len(lengths) < 10**4:
        run += 1
        if env.step(0, 0).reset:
            lengths.append(run)
            run = 0
    sd = math.sqrt(0.5) / 0.5  # geometric(p) sd is sqrt(1-p)/p
    assert abs(np.mean(lengths) - 2.0) <= 3 * sd / math.sqrt(len(lengths))


def test_environment_rejects_bad_arguments():
    with pytest.raises(ValueError):
        Environment(MP, noise="gaussian")
    with pytest.raises(ValueError):
        Environment(MP, reset_prob=1.0)


class Recorder:
    def __init__(self, num_actions, rng):
        self.inner = FixedPolicy(uniform(num_actions), 1, rng)
        self.seen = []

    def act(self, state=0):
        return self.inner.act(state)

    def observe(self, obs):
        self.seen.append(obs)


def test_information_firewall():
    assert Observation._fields == ("state", "action", "loss", "next_state")
    rx = Recorder(2, np.random.default_rng(1))
    ry = Recorder(2, np.random.default_rng(2))
    env = Environment(MP, np.random.default_rng(0))
    outcomes = []
    run_selfplay(env, rx, ry, 200, hooks=[lambda t, out: outcomes.append(out)])
    for ox, oy, out in zip(rx.seen, ry.seen, outcomes):
        assert type(ox) is Observation
        assert ox.action == out.a and oy.action == out.b
        assert ox.loss == out.sigma and oy.loss == 1.0 - out.sigma


def test_selfplay_empty_and_deterministic():
    def run(T):
        env = Environment(MP, np.random.default_rng(0))
        lx = MatrixLearner(2, rng=np.random.default_rng(1))
        ly = MatrixLearner(2, rng=np.random.default_rng(2), role="y")
        probe = lambda t: [("duality_gap", metrics.matrix_duality_gap(MP, lx.x, ly.x), None)]  # noqa: E731
        return run_selfplay(env, lx, ly, T, checkpoints=[10, 100, 1000], probes=[probe])

    assert len(run(0)) == 0
    assert run(1000).rows == run(1000).rows


def test_selfplay_against_fixed_policy():
    env = Environment(MP, np.random.default_rng(0))
    lx = MatrixLearner(2, rng=np.random.default_rng(1))
    trace = run_selfplay(env, lx, FixedPolicy([0.7, 0.3], 1, np.random.default_rng(2)), 500)
    assert trace.steps == 500


# --- metrics --------------------------------------------------------------------

def test_matrix_gap_examples():
    assert metrics.matrix_duality_gap(MP, [0.5, 0.5], [0.5, 0.5]) == 0.0
    assert metrics.matrix_duality_gap(MP, [1.0, 0.0], [1.0, 0.0]) == 1.0


def test_matrix_gap_nonnegative_and_relabeling_invariant():
    rng = np.random.default_rng(0)
    for _ in range(200):
        G = rng.random((3, 3))
        x, y = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
        gap = metrics.matrix_duality_gap(G, x, y)
        assert gap >= 0
        for p in permutations(range(3)):
            p = list(p)
            assert metrics.matrix_duality_gap(G[p][:, p], x[p], y[p]) == pytest.approx(gap, abs=1e-14)


def test_matrix_gap_shape_mismatch():
    with pytest.raises(ValueError):
        metrics.matrix_duality_gap(MP, [1.0], [0.5, 0.5])


def test_markov_gap_at_equilibrium():
    game = MatrixGame(np.random.default_rng(2).random((3, 3))).as_markov(0.5)
    star = shapley_q_star(game, tol=1e-6)
    assert metrics.markov_lastiterate_gap(game, star.x_star, star.y_star, 1e-6) <= 2e-6 + 1e-6


def test_markov_gap_zero_loss():
    game = MarkovGame(np.zeros((2, 2, 2)), np.full((2, 2, 2, 2), 0.5), 0.7)
    rng = np.random.default_rng(0)
    x = rng.dirichlet(np.ones(2), size=2)
    y = rng.dirichlet(np.ones(2), size=2)
    assert metrics.markov_lastiterate_gap(game, x, y) == 0.0


def test_game_gap_bounded_by_state_gaps():
    """Game gap is at most max_s path gap / (1 - gamma), up to oracle error."""
    rng = np.random.default_rng(5)
    tol = 1e-7
    for _ in range(20):
        gamma = float(rng.choice([0.5, 0.8]))
        game = random_markov(rng, 3, 2, gamma)
        star = shapley_q_star(game, tol=tol)
        x = rng.dirichlet(np.ones(2), size=3)
        y = rng.dirichlet(np.ones(2), size=3)
        bound = metrics.max_state_gap(star, x, y) * 2 / (1 - gamma) + 4 * tol / (1 - gamma)
        assert metrics.markov_lastiterate_gap(game, x, y, tol) <= bound


def test_path_gap_examples():
    game = random_markov(np.random.default_rng(3), 2, 3, 0.6)
    star = shapley_q_star(game, tol=1e-6)
    for s in range(2):
        sol = solve_matrix_minimax(star.q_star[s])
        assert metrics.path_gap(star, s, sol.x_star, sol.y_star) <= 1e-6
    const = np.full((1, 2, 2), 0.4)
    assert metrics.path_gap(const, 0, [0.9, 0.1], [0.2, 0.8]) == 0.0


def test_value_error_examples():
    game = random_markov(np.random.default_rng(4), 2, 2, 0.5)
    star = shapley_q_star(game)
    assert metrics.value_error(star.v_star, star) == 0.0
    assert metrics.value_error(star.v_star + 0.1, star) == pytest.approx(0.1, abs=1e-12)
    zero = shapley_q_star(MarkovGame(np.zeros((2, 2, 2)), np.full((2, 2, 2, 2), 0.5), 0.5))
    assert metrics.value_error(np.full(2, 1 / (2 * 0.5)), zero) == 1.0


def test_episodic_payoff_zero_loss_is_exact():
    game = MarkovGame(np.zeros((2, 2, 2)), np.full((2, 2, 2, 2), 0.5), 0.5)
    env = Environment(game, np.random.default_rng(0), noise="noiseless", reset_prob=0.5)
    px = FixedPolicy(np.full((2, 2), 0.5), 2, np.random.default_rng(1))
    py = FixedPolicy(np.full((2, 2), 0.5), 2, np.random.default_rng(2))
    trace = run_selfplay(env, px, py, 1000)
    star = shapley_q_star(game)
    assert metrics.episodic_payoff_check(trace, uniform(2), star, 0.5) == 0.0


def test_episodic_payoff_needs_episodic_trace():
    env = Environment(MP.as_markov(0.5), np.random.default_rng(0))
    trace = run_selfplay(env, FixedPolicy([0.5, 0.5]), FixedPolicy([0.5, 0.5]), 10)
    with pytest.raises(ValueError):
        metrics.episodic_payoff_check(trace, [1.0], shapley_q_star(MP.as_markov(0.5)), 0.5)


def test_geometric_checkpoints():
    pts = metrics.geometric_checkpoints(1000, extra=(100,))
    assert pts[0] == 10 and pts[-1] == 1000 and 100 in pts
    assert pts == sorted(set(pts))
