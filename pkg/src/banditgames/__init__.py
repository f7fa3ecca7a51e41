"""Uncoupled bandit learning in two-player zero-sum matrix and Markov games."""

from banditgames.env import Environment, FixedPolicy, Observation, run_selfplay
from banditgames.games import (
    ClippedSimplex,
    MarkovGame,
    MatrixGame,
    ScheduleParams,
    ix_loss_estimator,
    kl_divergence,
    omd_step,
    schedule_at,
)
from banditgames.markov_learner import GeneralLearner, GeneralParams, IrreducibleLearner
from banditgames.matrix_learner import MatrixLearner
from banditgames.metrics import markov_lastiterate_gap, matrix_duality_gap
from banditgames.oracles import shapley_q_star, solve_matrix_minimax

__version__ = "0.1.0"

__all__ = [
    "ClippedSimplex",
    "Environment",
    "FixedPolicy",
    "GeneralLearner",
    "GeneralParams",
    "IrreducibleLearner",
    "MarkovGame",
    "MatrixGame",
    "MatrixLearner",
    "Observation",
    "ScheduleParams",
    "ix_loss_estimator",
    "kl_divergence",
    "markov_lastiterate_gap",
    "matrix_duality_gap",
    "omd_step",
    "run_selfplay",
    "schedule_at",
    "shapley_q_star",
    "solve_matrix_minimax",
]
