import numpy as np
import pytest

from banditgames.games import ClippedSimplex, MarkovGame, MatrixGame, uniform
from banditgames.metrics import matrix_duality_gap
from banditgames.oracles import (
    OracleError,
    best_response_value,
    policy_value,
    regularized_gap,
    shapley_q_star,
    solve_matrix_minimax,
    solve_regularized_ne,
)

from brute import grid_minimize


def random_markov(rng, S, A, gamma):
    loss = rng.random((S, A, A))
    trans = rng.random((S, A, A, S)) + 0.05
    trans /= trans.sum(axis=-1, keepdims=True)
    return MarkovGame(loss, trans, gamma)


def grid_value(M, step=1e-3):
    """min over a fine x-grid of max_b (x^T M)_b, 2x2 only."""
    p = np.linspace(0, 1, int(round(1 / step)) + 1)
    xs = np.stack([p, 1 - p], axis=1)
    return np.min(np.max(xs @ M, axis=1))


def test_matching_pennies():
    sol = solve_matrix_minimax([[1.0, 0.0], [0.0, 1.0]])
    assert sol.value == pytest.approx(0.5, abs=1e-6)
    np.testing.assert_allclose(sol.x_star, [0.5, 0.5], atol=1e-6)
    np.testing.assert_allclose(sol.y_star, [0.5, 0.5], atol=1e-6)
    assert sol.certified


def test_pure_saddle_is_exact():
    sol = solve_matrix_minimax([[0.2, 0.3], [0.5, 0.9]])
    assert sol.value == pytest.approx(0.3, abs=1e-9)
    np.testing.assert_allclose(sol.x_star, [1.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(sol.y_star, [0.0, 1.0], atol=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_lp_value_matches_grid(seed):
    M = np.random.default_rng(seed).random((2, 2))
    sol = solve_matrix_minimax(M)
    assert sol.certified and sol.certified_gap <= 1e-6
    assert sol.value == pytest.approx(grid_value(M, 1e-4), abs=1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_mwu_agrees_with_lp(seed):
    M = np.random.default_rng(100 + seed).random((3, 4))
    lp = solve_matrix_minimax(M, tol=1e-6)
    mw = solve_matrix_minimax(M, tol=5e-3, method="mwu", max_iter=200_000)
    assert mw.certified
    assert mw.value == pytest.approx(lp.value, abs=5e-3)


def test_solver_rejects_bad_arguments():
    with pytest.raises(ValueError):
        solve_matrix_minimax([[0.5]], tol=0)
    with pytest.raises(ValueError):
        solve_matrix_minimax([[0.5]], method="simplex")


@pytest.mark.parametrize("gamma", [0.5, 0.9])
@pytest.mark.parametrize("seed", range(20))
def test_single_state_value_closed_form(seed, gamma):
    G = np.random.default_rng(seed).random((3, 3))
    star = shapley_q_star(MatrixGame(G).as_markov(gamma), tol=1e-6)
    assert star.v_star[0] == pytest.approx(solve_matrix_minimax(G).value / (1 - gamma), abs=1e-4)


def test_shapley_fixed_point_residual():
    game = random_markov(np.random.default_rng(3), 3, 2, 0.8)
    star = shapley_q_star(game, tol=1e-6)
    vals = np.array([solve_matrix_minimax(star.q_star[s]).value for s in range(3)])
    resid = star.q_star - (game.loss + game.discount * game.transition @ vals)
    assert np.max(np.abs(resid)) <= 1e-6


def test_equilibrium_policies_are_certified():
    game = random_markov(np.random.default_rng(4), 3, 3, 0.7)
    star = shapley_q_star(game, tol=1e-6)
    upper = best_response_value(game, star.x_star, "y", tol=1e-9)
    lower = best_response_value(game, star.y_star, "x", tol=1e-9)
    assert np.max(upper - lower) <= 1e-4
    np.testing.assert_allclose(policy_value(game, star.x_star, star.y_star), star.v_star, atol=1e-5)


def test_best_response_brackets_policy_value():
    rng = np.random.default_rng(8)
    game = random_markov(rng, 2, 2, 0.6)
    x = rng.dirichlet(np.ones(2), size=2)
    y = rng.dirichlet(np.ones(2), size=2)
    v = policy_value(game, x, y)
    assert np.all(best_response_value(game, y, "x", 1e-9) <= v + 1e-9)
    assert np.all(best_response_value(game, x, "y", 1e-9) >= v - 1e-9)


def test_best_response_matches_deterministic_enumeration():
    rng = np.random.default_rng(9)
    game = random_markov(rng, 2, 2, 0.6)
    y = rng.dirichlet(np.ones(2), size=2)
    br = best_response_value(game, y, "x", 1e-10)
    best = np.full(2, np.inf)
    for a0 in range(2):
        for a1 in range(2):
            x = np.zeros((2, 2))
            x[0, a0] = x[1, a1] = 1.0
            best = np.minimum(best, policy_value(game, x, y))
    np.testing.assert_allclose(br, best, atol=1e-8)


def test_best_response_rejects_bad_side():
    game = random_markov(np.random.default_rng(0), 2, 2, 0.5)
    with pytest.raises(ValueError):
        best_response_value(game, np.full((2, 2), 0.5), "z")


def test_oracle_error_on_iteration_budget():
    game = random_markov(np.random.default_rng(0), 2, 2, 0.9)
    with pytest.raises(OracleError):
        best_response_value(game, np.full((2, 2), 0.5), "x", tol=1e-12, max_iter=3)


def test_regularized_ne_matching_pennies_is_uniform():
    sol = solve_regularized_ne(np.eye(2), 0.3, ClippedSimplex(2, 0.01), tol=1e-8)
    assert sol.converged
    np.testing.assert_allclose(sol.x, uniform(2), atol=1e-7)
    np.testing.assert_allclose(sol.y, uniform(2), atol=1e-7)


@pytest.mark.parametrize("seed", range(4))
def test_regularized_ne_is_mutual_best_response(seed):
    rng = np.random.default_rng(seed)
    M = rng.random((2, 2))
    eps = 0.2
    floor = 0.02
    sol = solve_regularized_ne(M, eps, ClippedSimplex(2, floor), tol=1e-7)
    assert sol.converged

    def fx(p):
        return p @ M @ sol.y + eps * np.sum(p * np.log(p), axis=1)

    def fy(p):
        return -(sol.x @ M @ p.T) + eps * np.sum(p * np.log(p), axis=1)

    bx = grid_minimize(fx, 2, floor, final_step=1e-6)
    by = grid_minimize(fy, 2, floor, final_step=1e-6)
    assert np.max(np.abs(bx - sol.x)) <= 1e-5
    assert np.max(np.abs(by - sol.y)) <= 1e-5
    assert regularized_gap(M, sol.x, sol.y, eps, ClippedSimplex(2, floor)) <= 1e-10


def test_regularized_ne_approaches_ne_as_epsilon_shrinks():
    M = np.array([[0.9, 0.2], [0.3, 0.7]])
    dom = ClippedSimplex(2, 1e-6)
    gaps = [matrix_duality_gap(M, *(lambda s: (s.x, s.y))(solve_regularized_ne(M, e, dom, tol=1e-7)))
            for e in (0.5, 0.1, 0.02)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_dominant_strategy_game():
    sol = solve_matrix_minimax([[0.0, 0.0], [1.0, 1.0]])
    assert sol.value == pytest.approx(0.0, abs=1e-6)
    np.testing.assert_allclose(sol.x_star, [1.0, 0.0], atol=1e-6)


def test_rock_paper_scissors_uniform():
    G = np.array([[0.5, 1, 0], [0, 0.5, 1], [1, 0, 0.5]])
    sol = solve_matrix_minimax(G)
    assert sol.value == pytest.approx(0.5, abs=1e-6)
    np.testing.assert_allclose(sol.x_star, uniform(3), atol=1e-3)
    np.testing.assert_allclose(sol.y_star, uniform(3), atol=1e-3)
    assert matrix_duality_gap(G, uniform(3), uniform(3)) == 0.0


def test_single_state_matching_pennies_value():
    star = shapley_q_star(MatrixGame(np.eye(2)).as_markov(0.5), tol=1e-6)
    assert star.v_star[0] == pytest.approx(1.0, abs=1e-6)


def test_zero_loss_game_has_zero_values():
    game = MarkovGame(np.zeros((2, 2, 2)), np.full((2, 2, 2, 2), 0.5), 0.9)
    star = shapley_q_star(game)
    assert np.all(star.q_star == 0) and np.all(star.v_star == 0)
    assert np.all(best_response_value(game, np.full((2, 2), 0.5), "x") == 0)


def test_best_response_to_uniform_in_matching_pennies():
    game = MatrixGame(np.eye(2)).as_markov(0.5)
    br = best_response_value(game, np.full((1, 2), 0.5), "x", tol=1e-9)
    assert br[0] == pytest.approx(1.0, abs=1e-8)


def test_best_response_to_equilibrium_recovers_value():
    game = random_markov(np.random.default_rng(12), 3, 2, 0.5)
    star = shapley_q_star(game, tol=1e-6)
    np.testing.assert_allclose(best_response_value(game, star.y_star, "x", 1e-8), star.v_star, atol=1e-5)


def test_regularized_ne_of_zero_matrix_is_uniform():
    sol = solve_regularized_ne(np.zeros((3, 3)), 0.7, ClippedSimplex(3, 0.05))
    np.testing.assert_allclose(sol.x, uniform(3), atol=1e-12)
    np.testing.assert_allclose(sol.y, uniform(3), atol=1e-12)


def test_regularized_ne_small_epsilon_near_ne():
    sol = solve_regularized_ne(np.eye(2), 1e-3, ClippedSimplex(2, 1e-9), tol=1e-6)
    np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-2)
    np.testing.assert_allclose(sol.y, [0.5, 0.5], atol=1e-2)
