"""Known-model backward recursion over the belief grid.

At every stage and grid belief the solver finds the leader prescription
(searched on a lattice) whose anticipated follower best response maximizes
the leader's action value.  The follower's best response solves a fixed
point, because its action value depends on its own prescription through the
belief update; we iterate damped best-response steps from the uniform
prescription and flag non-convergence.
"""

import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from joblib import Parallel, delayed

from . import belief as bel
from .belief import BeliefGrid, make_grid
from .errors import ConfigError, ImpossibleObservationError
from .game import GameSpec, JointAction, require_valid
from .policy import PrescriptionPair, StrategyTable, leader_grid

_TINY = 1e-300


@dataclass(frozen=True)
class SolveConfig:
    belief_resolution: int = 101
    leader_resolution: int = 31
    fp_max_iters: int = 200
    fp_tolerance: float = 1e-6
    fp_damping: float = 0.5
    tie_break: str = "lowest"  # "lowest" or "leader" (strong-Stackelberg)
    threads: int = 1

    def validate(self):
        if self.belief_resolution < 2:
            raise ConfigError(f"belief_resolution must be >= 2, got {self.belief_resolution}")
        if self.leader_resolution < 2:
            raise ConfigError(f"leader_resolution must be >= 2, got {self.leader_resolution}")
        if self.fp_max_iters < 1:
            raise ConfigError(f"fp_max_iters must be >= 1, got {self.fp_max_iters}")
        if not self.fp_tolerance > 0:
            raise ConfigError(f"fp_tolerance must be > 0, got {self.fp_tolerance}")
        if not 0.0 < self.fp_damping <= 1.0:
            raise ConfigError(f"fp_damping must lie in (0, 1], got {self.fp_damping}")
        if self.tie_break not in ("lowest", "leader"):
            raise ConfigError(f"tie_break must be 'lowest' or 'leader', got {self.tie_break!r}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        return self


class BestResponse(NamedTuple):
    gamma_f: np.ndarray
    converged: bool
    iterations: int


class LeaderSolution(NamedTuple):
    gamma_l: np.ndarray
    gamma_f: np.ndarray
    objective: float
    converged: bool       # best response at the winning candidate converged
    flagged: int          # number of candidates with non-converged response


def _q_tables(pi, gamma_f, v_next_f, v_next_l, spec, grid, on_impossible="raise"):
    """Action values Qf (X, A_l, A_f) and Ql (A_l, A_f) at one belief.

    ``on_impossible`` controls follower actions with zero probability under
    (pi, gamma_f): "raise" propagates the error, "reward-only" drops the
    (probability-zero) continuation term for those columns.
    """
    X, Al, Af = spec.shape
    pi = np.asarray(pi, dtype=float)
    gamma_f = np.asarray(gamma_f, dtype=float)
    w = pi[None, :] * gamma_f.T              # (Af, X)
    den = w.sum(axis=1)
    ok = den > _TINY
    if not ok.all():
        if on_impossible == "raise":
            bad = int(np.nonzero(~ok)[0][0])
            raise ImpossibleObservationError(
                f"follower action {bad} has zero probability under the "
                "current belief and prescription"
            )
    posts = w / np.where(ok, den, 1.0)[:, None]       # (Af, X)
    # updated beliefs per joint action: (Al, Af, X')
    nxt = np.einsum("fx,xlfy->lfy", posts, spec.transition)
    sums = nxt.sum(axis=2, keepdims=True)
    nxt = nxt / np.where(sums > 0, sums, 1.0)
    flat = nxt.reshape(Al * Af, X)
    idx, wts = bel._bracketing_weights(grid, flat)
    vf = np.einsum("bv,bvx->bx", wts, v_next_f[idx]).reshape(Al, Af, X)
    vl = np.einsum("bv,bv->b", wts, v_next_l[idx]).reshape(Al, Af)
    if not ok.all():
        vf[:, ~ok, :] = 0.0
        vl[:, ~ok] = 0.0
    cont_f = np.einsum("xlfy,lfy->xlf", spec.transition, vf)
    q_f = spec.reward_follower + spec.discount * cont_f
    q_l = pi @ spec.reward_leader.reshape(X, -1)
    q_l = q_l.reshape(Al, Af) + spec.discount * vl
    return q_f, q_l


def q_follower(pi, x: int, a: JointAction, gamma_f, v_next_f, spec: GameSpec,
               grid: BeliefGrid) -> float:
    """Follower action value: stage reward plus discounted interpolated
    continuation at the Bayes-updated belief."""
    pi_next = bel.bayes_update(pi, gamma_f, a, spec)
    cont = 0.0
    for xn in range(spec.num_states):
        p = spec.transition[x, a[0], a[1], xn]
        if p:
            cont += p * bel.interpolate(v_next_f, grid, pi_next, state=xn)
    return float(spec.reward_follower[x, a[0], a[1]] + spec.discount * cont)


def q_leader(pi, a: JointAction, gamma_f, v_next_l, spec: GameSpec,
             grid: BeliefGrid) -> float:
    """Leader action value: belief-averaged stage reward plus discounted
    interpolated continuation."""
    pi = np.asarray(pi, dtype=float)
    pi_next = bel.bayes_update(pi, gamma_f, a, spec)
    stage = float(pi @ spec.reward_leader[:, a[0], a[1]])
    return stage + spec.discount * bel.interpolate(v_next_l, grid, pi_next)


def follower_best_response(pi, gamma_l, v_next_f, spec: GameSpec, grid: BeliefGrid,
                           cfg: SolveConfig, v_next_l=None) -> BestResponse:
    """Damped fixed-point iteration for the follower's best response.

    Starts from the uniform prescription; each round recomputes the action
    values under the current iterate (the belief update couples them), moves
    every state's row toward the pure argmax action, and stops once the sup
    change drops below ``fp_tolerance``.  Ties pick the lowest action index,
    or the leader-preferred action when cfg.tie_break == "leader".
    """
    X, Al, Af = spec.shape
    gamma_l = np.asarray(gamma_l, dtype=float)
    if v_next_l is None:
        v_next_l = np.zeros(len(grid))
    gamma = np.full((X, Af), 1.0 / Af)
    converged = False
    iterations = 0
    for iterations in range(1, cfg.fp_max_iters + 1):
        q_f, q_l = _q_tables(pi, gamma, v_next_f, v_next_l, spec, grid,
                             on_impossible="reward-only")
        eq = np.einsum("l,xlf->xf", gamma_l, q_f)  # (X, Af)
        if cfg.tie_break == "leader":
            leader_pref = gamma_l @ q_l            # (Af,)
            best = np.empty(X, dtype=int)
            for x in range(X):
                tied = np.nonzero(eq[x] >= eq[x].max() - cfg.fp_tolerance)[0]
                best[x] = tied[np.argmax(leader_pref[tied])]
        else:
            best = np.argmax(eq, axis=1)
        target = np.zeros_like(gamma)
        target[np.arange(X), best] = 1.0
        new = (1.0 - cfg.fp_damping) * gamma + cfg.fp_damping * target
        delta = np.abs(new - gamma).max()
        gamma = new
        if delta < cfg.fp_tolerance:
            converged = True
            break
    return BestResponse(gamma, converged, iterations)


def leader_optimize(pi, v_next_f, v_next_l, spec: GameSpec, grid: BeliefGrid,
                    cfg: SolveConfig) -> LeaderSolution:
    """Exhaustive search over the leader lattice, anticipating best responses.

    Every candidate's objective is the expected leader action value under the
    candidate jointly with its follower best response; ties keep the first
    candidate in lattice order.
    """
    candidates = leader_grid(spec.num_leader_actions, cfg.leader_resolution)
    best = None
    flagged = 0
    for gamma_l in candidates:
        br = follower_best_response(pi, gamma_l, v_next_f, spec, grid, cfg,
                                    v_next_l=v_next_l)
        if not br.converged:
            flagged += 1
        _, q_l = _q_tables(pi, br.gamma_f, v_next_f, v_next_l, spec, grid,
                           on_impossible="reward-only")
        marg = np.asarray(pi) @ br.gamma_f     # action distribution of the follower
        objective = float(gamma_l @ q_l @ marg)
        if best is None or objective > best.objective:
            best = LeaderSolution(gamma_l, br.gamma_f, objective, br.converged, 0)
    return best._replace(flagged=flagged)


def _solve_point(pi, v_next_f, v_next_l, spec, grid, cfg):
    sol = leader_optimize(pi, v_next_f, v_next_l, spec, grid, cfg)
    q_f, _ = _q_tables(pi, sol.gamma_f, v_next_f, v_next_l, spec, grid,
                       on_impossible="reward-only")
    # V^f(pi, x) = E over own row and the leader's prescription
    vf = np.einsum("l,xf,xlf->x", sol.gamma_l, sol.gamma_f, q_f)
    return sol, vf


def backward_recursion(spec: GameSpec, cfg: SolveConfig,
                       diagnostics: Optional[dict] = None) -> StrategyTable:
    """Solve all stages from the horizon backwards; returns the full table.

    ``diagnostics``, when given, is filled with per-stage counts of grid
    points whose best-response iteration failed to converge.
    """
    require_valid(spec)
    cfg.validate()
    grid = make_grid(spec.num_states, cfg.belief_resolution)
    X, Al, Af = spec.shape
    table = StrategyTable.empty(grid, spec.horizon, Al, Af)
    n = len(grid)
    v_next_f = np.zeros((n, X))
    v_next_l = np.zeros(n)
    stage_flags = []
    runner = Parallel(n_jobs=cfg.threads) if cfg.threads > 1 else None
    for t in range(spec.horizon, 0, -1):
        if runner is not None:
            results = runner(
                delayed(_solve_point)(grid.points[g], v_next_f, v_next_l, spec, grid, cfg)
                for g in range(n)
            )
        else:
            results = [
                _solve_point(grid.points[g], v_next_f, v_next_l, spec, grid, cfg)
                for g in range(n)
            ]
        nonconverged = 0
        for g, (sol, vf) in enumerate(results):
            table.leader_policy[t - 1, g] = sol.gamma_l
            table.follower_policy[t - 1, g] = sol.gamma_f
            table.value_leader[t - 1, g] = sol.objective
            table.value_follower[t - 1, g] = vf
            if not sol.converged:
                nonconverged += 1
        stage_flags.append({"t": t, "nonconverged_points": nonconverged})
        v_next_f = table.value_follower[t - 1]
        v_next_l = table.value_leader[t - 1]
    if diagnostics is not None:
        diagnostics["stages"] = list(reversed(stage_flags))
        diagnostics["nonconverged_total"] = int(
            sum(s["nonconverged_points"] for s in stage_flags)
        )
    return table


def follower_response_recursion(spec: GameSpec, grid: BeliefGrid, leader_policy,
                                cfg: SolveConfig) -> StrategyTable:
    """Follower's dynamic best response to a fixed leader policy table.

    ``leader_policy`` is (T, len(grid), A_l).  Used for measuring leader
    deviation gaps: the deviating leader commits to the given prescriptions
    and the follower re-optimizes stage by stage.
    """
    require_valid(spec)
    cfg.validate()
    X, Al, Af = spec.shape
    leader_policy = np.asarray(leader_policy, dtype=float)
    n = len(grid)
    table = StrategyTable.empty(grid, spec.horizon, Al, Af)
    table.leader_policy[:] = leader_policy
    v_next_f = np.zeros((n, X))
    v_next_l = np.zeros(n)
    for t in range(spec.horizon, 0, -1):
        for g in range(n):
            pi = grid.points[g]
            gamma_l = leader_policy[t - 1, g]
            br = follower_best_response(pi, gamma_l, v_next_f, spec, grid, cfg,
                                        v_next_l=v_next_l)
            q_f, q_l = _q_tables(pi, br.gamma_f, v_next_f, v_next_l, spec, grid,
                                 on_impossible="reward-only")
            table.follower_policy[t - 1, g] = br.gamma_f
            table.value_follower[t - 1, g] = np.einsum(
                "l,xf,xlf->x", gamma_l, br.gamma_f, q_f
            )
            marg = pi @ br.gamma_f
            table.value_leader[t - 1, g] = float(gamma_l @ q_l @ marg)
        v_next_f = table.value_follower[t - 1]
        v_next_l = table.value_leader[t - 1]
    return table


@dataclass
class DeployedStrategy:
    """History-indexed strategies obtained by tracking the planner's belief.

    The belief starts at the game's initial distribution and is advanced
    through the exact Bayes update with the *deployed* follower prescription
    (the one at the nearest grid point), so both players reconstruct the same
    belief trajectory from the public action history.
    """

    table: StrategyTable
    spec: GameSpec

    @property
    def horizon(self):
        return self.table.horizon

    def initial_belief(self) -> np.ndarray:
        return np.array(self.spec.initial_dist)

    def prescription_at(self, t: int, mu) -> PrescriptionPair:
        g = self.table.grid.nearest_index(mu)
        return self.table.prescription(t, g)

    def advance(self, t: int, mu, a: JointAction) -> np.ndarray:
        pair = self.prescription_at(t, mu)
        return bel.bayes_update(mu, pair.follower, a, self.spec)

    def for_history(self, history) -> PrescriptionPair:
        """Prescriptions at stage len(history)+1 after the given joint actions."""
        t = len(history) + 1
        if t > self.horizon:
            raise ValueError(f"history of length {len(history)} exceeds horizon")
        mu = self.initial_belief()
        for k, a in enumerate(history, start=1):
            mu = self.advance(k, mu, JointAction(*a))
        return self.prescription_at(t, mu)


def forward_strategy(table: StrategyTable, spec: GameSpec) -> DeployedStrategy:
    """Deploy an equilibrium table as history-indexed strategies."""
    if table.horizon != spec.horizon:
        raise ConfigError(
            f"table horizon {table.horizon} != game horizon {spec.horizon}"
        )
    return DeployedStrategy(table, spec)


def solve_report(spec: GameSpec, cfg: SolveConfig, diagnostics: dict,
                 wall_time: float) -> dict:
    return {
        "solver": "exact",
        "config": {
            "belief_resolution": cfg.belief_resolution,
            "leader_resolution": cfg.leader_resolution,
            "fp_max_iters": cfg.fp_max_iters,
            "fp_tolerance": cfg.fp_tolerance,
            "fp_damping": cfg.fp_damping,
            "tie_break": cfg.tie_break,
            "threads": cfg.threads,
        },
        "game": {"horizon": spec.horizon, "discount": spec.discount,
                 "num_states": spec.num_states,
                 "num_leader_actions": spec.num_leader_actions,
                 "num_follower_actions": spec.num_follower_actions},
        "convergence": diagnostics,
        "wall_time_seconds": wall_time,
    }


def timed_backward_recursion(spec: GameSpec, cfg: SolveConfig):
    """Backward recursion plus a CLI-ready report."""
    diagnostics = {}
    t0 = time.perf_counter()
    table = backward_recursion(spec, cfg, diagnostics)
    report = solve_report(spec, cfg, diagnostics, time.perf_counter() - t0)
    return table, report
