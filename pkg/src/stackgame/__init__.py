"""Finite-horizon stochastic Stackelberg games with a privately informed
follower: exact and model-free equilibrium solvers, belief tracking, and
simulation tooling."""

from .belief import BeliefGrid, bayes_update, interpolate, make_grid
from .errors import ConfigError, ImpossibleObservationError, RolloutError
from .estimators import ExactStackelbergSolver, ExpectedSarsaSolver
from .exact import (DeployedStrategy, SolveConfig, backward_recursion,
                    follower_best_response, forward_strategy, leader_optimize)
from .game import (GameSpec, JointAction, load_game, reward, sample_next_state,
                   save_game, security_game, transition_prob, validate)
from .particles import ParticleSet, estimate, init, step
from .policy import (PrescriptionPair, StrategyTable, follower_grid,
                     leader_grid, sample_follower_action, sample_leader_action,
                     simplex_project, strategy_from_csv, strategy_to_csv)
from .sarsa import RLConfig
from .sarsa import solve as sarsa_solve
from .simulate import (ReturnEstimate, Trajectory, deviation_gap_follower,
                       deviation_gap_leader, estimate_returns, rollout)

__version__ = "0.1.0"

__all__ = [
    "BeliefGrid", "ConfigError", "DeployedStrategy", "ExactStackelbergSolver",
    "ExpectedSarsaSolver", "GameSpec", "ImpossibleObservationError",
    "JointAction", "ParticleSet", "PrescriptionPair", "RLConfig",
    "ReturnEstimate", "RolloutError", "SolveConfig", "StrategyTable",
    "Trajectory", "backward_recursion", "bayes_update",
    "deviation_gap_follower", "deviation_gap_leader", "estimate",
    "estimate_returns", "follower_best_response", "follower_grid",
    "forward_strategy", "init", "interpolate", "leader_grid",
    "leader_optimize", "load_game", "make_grid", "reward", "rollout",
    "sample_follower_action", "sample_leader_action", "sample_next_state",
    "sarsa_solve", "save_game", "security_game", "simplex_project", "step",
    "strategy_from_csv", "strategy_to_csv", "transition_prob", "validate",
]
