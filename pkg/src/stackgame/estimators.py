"""Scikit-learn style estimator wrappers around the two solvers.

Both estimators follow the sklearn contract: constructor arguments are
stored verbatim, ``fit(game)`` validates and computes, fitted state lives in
trailing-underscore attributes, and ``get_params``/``set_params``/``clone``
work out of the box.  ``predict`` maps public action histories to the
prescription pair the deployed strategy emits next.
"""

from sklearn.base import BaseEstimator

from . import exact, sarsa
from .game import GameSpec, require_valid
from .policy import strategy_to_csv


class _StrategyEstimator(BaseEstimator):
    def _check_fitted(self):
        if not hasattr(self, "table_"):
            raise RuntimeError("estimator is not fitted; call fit(game) first")

    def deploy(self) -> exact.DeployedStrategy:
        """The fitted table as a history-indexed strategy profile."""
        self._check_fitted()
        return exact.forward_strategy(self.table_, self.game_)

    def predict(self, histories):
        """Prescription pairs after each public action history.

        ``histories`` is an iterable of sequences of (leader, follower)
        action pairs; returns one PrescriptionPair per history.
        """
        profile = self.deploy()
        return [profile.for_history(h) for h in histories]

    def to_csv(self, path):
        self._check_fitted()
        strategy_to_csv(self.table_, path)


class ExactStackelbergSolver(_StrategyEstimator):
    """Known-model equilibrium solver (backward recursion on a belief grid)."""

    def __init__(self, belief_resolution=101, leader_resolution=31,
                 fp_max_iters=200, fp_tolerance=1e-6, fp_damping=0.5,
                 tie_break="lowest", threads=1):
        self.belief_resolution = belief_resolution
        self.leader_resolution = leader_resolution
        self.fp_max_iters = fp_max_iters
        self.fp_tolerance = fp_tolerance
        self.fp_damping = fp_damping
        self.tie_break = tie_break
        self.threads = threads

    def _config(self) -> exact.SolveConfig:
        return exact.SolveConfig(
            belief_resolution=self.belief_resolution,
            leader_resolution=self.leader_resolution,
            fp_max_iters=self.fp_max_iters,
            fp_tolerance=self.fp_tolerance,
            fp_damping=self.fp_damping,
            tie_break=self.tie_break,
            threads=self.threads,
        ).validate()

    def fit(self, game: GameSpec, y=None):
        require_valid(game)
        self.game_ = game
        self.table_, self.report_ = exact.timed_backward_recursion(
            game, self._config()
        )
        return self


class ExpectedSarsaSolver(_StrategyEstimator):
    """Model-free equilibrium solver (Expected Sarsa with particle filters)."""

    def __init__(self, alpha=0.05, alpha_decay=True, sweeps=500,
                 particle_count=10_000, belief_resolution=101,
                 leader_resolution=31, follower_resolution=3, pg_step=0.1,
                 pg_iters=200, fp_outer_iters=3, seed=0, threads=1):
        self.alpha = alpha
        self.alpha_decay = alpha_decay
        self.sweeps = sweeps
        self.particle_count = particle_count
        self.belief_resolution = belief_resolution
        self.leader_resolution = leader_resolution
        self.follower_resolution = follower_resolution
        self.pg_step = pg_step
        self.pg_iters = pg_iters
        self.fp_outer_iters = fp_outer_iters
        self.seed = seed
        self.threads = threads

    def _config(self) -> sarsa.RLConfig:
        return sarsa.RLConfig(
            alpha=self.alpha,
            alpha_decay=self.alpha_decay,
            sweeps=self.sweeps,
            particle_count=self.particle_count,
            belief_resolution=self.belief_resolution,
            leader_resolution=self.leader_resolution,
            follower_resolution=self.follower_resolution,
            pg_step=self.pg_step,
            pg_iters=self.pg_iters,
            fp_outer_iters=self.fp_outer_iters,
            seed=self.seed,
            threads=self.threads,
        ).validate()

    def fit(self, game: GameSpec, y=None):
        require_valid(game)
        self.game_ = game
        self.table_, self.report_ = sarsa.timed_solve(game, self._config())
        return self
