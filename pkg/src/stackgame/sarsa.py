"""Model-free equilibrium computation via Expected Sarsa.

The solver never reads the transition kernel directly: next states are
sampled from the game acting as a simulator, and belief updates come from
bootstrap particle filters.  Per stage it runs synchronous exhaustive sweeps
over every (belief grid point, tabulated follower prescription, joint
action, state) cell, TD-updating both players' action-value tables, then
improves policies: projected gradient ascent for the follower's best
response to each leader lattice candidate, greedy lattice maximization for
the leader.
"""

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from joblib import Parallel, delayed

from . import belief as bel
from . import particles
from .belief import BeliefGrid, make_grid
from .errors import ConfigError
from .game import GameSpec, require_valid, sample_next_states
from .policy import (StrategyTable, follower_grid, leader_grid,
                     nearest_prescription_index, simplex_project_rows)

_CELL_CHUNK = 128


@dataclass(frozen=True)
class RLConfig:
    alpha: float = 0.05
    alpha_decay: bool = True        # harmonic 1/n step sizes (n = cell update count)
    sweeps: int = 500               # TD sweeps per (grid point, prescription) cell
    particle_count: int = 10_000
    belief_resolution: int = 101
    leader_resolution: int = 31
    follower_resolution: int = 3    # lattice resolution of the tabulated gamma_f axis
    pg_step: float = 0.1
    pg_iters: int = 200
    fp_outer_iters: int = 3
    seed: int = 0
    threads: int = 1

    def validate(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        for name in ("sweeps", "particle_count", "pg_iters", "fp_outer_iters", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("belief_resolution", "leader_resolution", "follower_resolution"):
            if getattr(self, name) < 2:
                raise ConfigError(f"{name} must be >= 2, got {getattr(self, name)}")
        if not self.pg_step > 0:
            raise ConfigError(f"pg_step must be > 0, got {self.pg_step}")
        return self


class QTables(NamedTuple):
    """Tabulated action values.

    ``follower``: (grid, lattice, state, leader action, follower action);
    ``leader``: (grid, lattice, leader action, follower action).
    """

    follower: np.ndarray
    leader: np.ndarray


class StageDiagnostics(NamedTuple):
    skipped_updates: int
    mean_abs_dq_per_sweep: np.ndarray


def sarsa_update_follower(q_old, r, v_next, alpha, discount):
    """TD step toward the follower target r + discount * v_next.

    Residual form, so a cell whose target equals its value is left exactly
    unchanged for any alpha.  Works elementwise on arrays.
    """
    return q_old + alpha * (r + discount * v_next - q_old)


def sarsa_update_leader(q_old, r_expected, v_next, alpha, discount):
    """TD step toward the leader target: belief-averaged stage reward plus
    discounted continuation."""
    return q_old + alpha * (r_expected + discount * v_next - q_old)


def _cell_targets(pi, gamma_f, spec, grid, v_next_f, v_next_l, cfg, rng_model,
                  rng_filter_f, rng_filter_l):
    """Sampled continuation values for one (grid point, prescription) cell.

    Returns follower continuations (L, X, A_l, A_f) with a validity mask,
    leader continuations (L, A_l, A_f) with a mask, and the number of skipped
    updates.  Every sweep re-initializes the filters from the grid belief
    (per-cell filter reset); rows whose observed follower action has zero
    likelihood at every particle are masked out and counted.
    """
    X, Al, Af = spec.shape
    L, K = cfg.sweeps, cfg.particle_count
    vf_all = np.zeros((L, X, Al, Af))
    mf = np.zeros((L, X, Al, Af), dtype=bool)
    vl_all = np.zeros((L, Al, Af))
    ml = np.zeros((L, Al, Af), dtype=bool)
    skipped = 0
    states_tiled = np.tile(np.arange(X), L)
    for al in range(Al):
        for af in range(Af):
            a = (al, af)
            # one model call per (sweep, state): x' ~ tau(.|x, a)
            x_next = sample_next_states(spec, states_tiled, a, rng_model)
            # follower filter, one run per (sweep, state)
            c0 = particles.init_counts_batch(pi, K, L * X, rng_filter_f)
            c1, ok_f = particles.step_counts_batch(c0, gamma_f, a, spec, rng_filter_f)
            vf = bel.interpolate(v_next_f, grid, c1 / K, state=x_next)
            vf_all[:, :, al, af] = vf.reshape(L, X)
            mf[:, :, al, af] = ok_f.reshape(L, X)
            # independent leader filter, one run per sweep
            c0 = particles.init_counts_batch(pi, K, L, rng_filter_l)
            c1, ok_l = particles.step_counts_batch(c0, gamma_f, a, spec, rng_filter_l)
            vl_all[:, al, af] = bel.interpolate(v_next_l, grid, c1 / K)
            ml[:, al, af] = ok_l
            skipped += int((~ok_f).sum() + (~ok_l).sum())
    return vf_all, mf, vl_all, ml, skipped


def _chunk_targets(cells, grid, lattice, spec, v_next_f, v_next_l, cfg, stage):
    out = []
    for (g, j) in cells:
        ss = np.random.SeedSequence((cfg.seed, stage, g, j))
        rng_model, rng_f, rng_l = [np.random.default_rng(s) for s in ss.spawn(3)]
        out.append(_cell_targets(grid.points[g], lattice[j], spec, grid,
                                 v_next_f, v_next_l, cfg, rng_model, rng_f, rng_l))
    return out


def policy_evaluation(spec: GameSpec, grid: BeliefGrid, lattice, v_next_f,
                      v_next_l, cfg: RLConfig, stage: int):
    """Estimate both Q tables for one stage by Expected-Sarsa sweeps.

    Each of the ``cfg.sweeps`` sweeps visits every joint action and state,
    draws one next state from the simulator, runs one follower-filter and one
    leader-filter belief update, and applies the TD updates.  Cell RNG
    streams are derived from (seed, stage, grid index, lattice index), so
    results do not depend on evaluation order.
    """
    X, Al, Af = spec.shape
    N, G, L = len(grid), len(lattice), cfg.sweeps
    qf = np.zeros((N, G, X, Al, Af))
    ql = np.zeros((N, G, Al, Af))
    cells = [(g, j) for g in range(N) for j in range(G)]
    chunks = [cells[i:i + _CELL_CHUNK] for i in range(0, len(cells), _CELL_CHUNK)]
    if cfg.threads > 1:
        chunk_results = Parallel(n_jobs=cfg.threads)(
            delayed(_chunk_targets)(chunk, grid, lattice, spec, v_next_f,
                                    v_next_l, cfg, stage)
            for chunk in chunks
        )
    else:
        chunk_results = (
            _chunk_targets(chunk, grid, lattice, spec, v_next_f, v_next_l, cfg, stage)
            for chunk in chunks
        )

    skipped = 0
    dq_sum = np.zeros(L)
    entries_per_sweep = len(cells) * (X + 1) * Al * Af
    r_follower = spec.reward_follower  # (X, Al, Af), broadcast over cells
    for chunk, results in zip(chunks, chunk_results):
        c = len(chunk)
        vf = np.stack([r[0] for r in results])  # (c, L, X, Al, Af)
        mf = np.stack([r[1] for r in results])
        vl = np.stack([r[2] for r in results])  # (c, L, Al, Af)
        ml = np.stack([r[3] for r in results])
        skipped += sum(r[4] for r in results)
        r_exp = np.stack([grid.points[g] @ spec.reward_leader.reshape(X, -1)
                          for g, _ in chunk]).reshape(c, Al, Af)
        qf_c = np.zeros((c, X, Al, Af))
        ql_c = np.zeros((c, Al, Af))
        nf = np.zeros((c, X, Al, Af))
        nl = np.zeros((c, Al, Af))
        for l in range(L):
            if cfg.alpha_decay:
                nf += mf[:, l]
                nl += ml[:, l]
                af_step = mf[:, l] / np.maximum(nf, 1.0)
                al_step = ml[:, l] / np.maximum(nl, 1.0)
            else:
                af_step = mf[:, l] * cfg.alpha
                al_step = ml[:, l] * cfg.alpha
            new_f = sarsa_update_follower(qf_c, r_follower, vf[:, l], af_step,
                                          spec.discount)
            new_l = sarsa_update_leader(ql_c, r_exp, vl[:, l], al_step,
                                        spec.discount)
            dq_sum[l] += np.abs(new_f - qf_c).sum() + np.abs(new_l - ql_c).sum()
            qf_c, ql_c = new_f, new_l
        for i, (g, j) in enumerate(chunk):
            qf[g, j] = qf_c[i]
            ql[g, j] = ql_c[i]
    diag = StageDiagnostics(skipped, dq_sum / entries_per_sweep)
    return QTables(qf, ql), diag


def follower_gradient_br(qf_slices, gamma_l, lattice, cfg: RLConfig) -> np.ndarray:
    """Follower best response by projected gradient ascent on the simplex.

    ``qf_slices``: (lattice, X, A_l, A_f) follower values at one grid belief.
    The per-state objective is linear in the state's action distribution
    when the Q-table prescription argument is held fixed, so the inner loop
    walks to a vertex; each outer round re-selects the lattice slice nearest
    the current iterate, the sampled analogue of the best-response fixed
    point.
    """
    X, Af = qf_slices.shape[1], qf_slices.shape[3]
    gamma_l = np.asarray(gamma_l, dtype=float)
    gamma = np.full((X, Af), 1.0 / Af)
    j_prev = -1
    for _ in range(cfg.fp_outer_iters):
        j = nearest_prescription_index(lattice, gamma)
        grad = np.einsum("l,xlf->xf", gamma_l, qf_slices[j])
        moved = False
        for _ in range(cfg.pg_iters):
            new = simplex_project_rows(gamma + cfg.pg_step * grad)
            if np.array_equal(new, gamma):
                break
            gamma = new
            moved = True
        if j == j_prev and not moved:
            break
        j_prev = j
    return gamma


def leader_greedy(ql_slices, candidates, responses, pi, lattice,
                  cfg: RLConfig) -> int:
    """Index of the lattice leader prescription with the highest estimated value.

    ``ql_slices``: (lattice, A_l, A_f) leader values at one grid belief;
    ``responses[c]`` is the follower best response to ``candidates[c]``.
    Ties keep the first candidate in lattice order.
    """
    best_c, best_val = 0, -np.inf
    pi = np.asarray(pi, dtype=float)
    for c, gamma_l in enumerate(candidates):
        gamma_f = responses[c]
        j = nearest_prescription_index(lattice, gamma_f)
        marg = pi @ gamma_f
        val = float(gamma_l @ ql_slices[j] @ marg)
        if val > best_val:
            best_c, best_val = c, val
    return best_c


def _improve_point(g, pi, qt, candidates, lattice, cfg):
    responses = [follower_gradient_br(qt.follower[g], gl, lattice, cfg)
                 for gl in candidates]
    c = leader_greedy(qt.leader[g], candidates, responses, pi, lattice, cfg)
    gamma_l, gamma_f = candidates[c], responses[c]
    j = nearest_prescription_index(lattice, gamma_f)
    vf = np.einsum("l,xf,xlf->x", gamma_l, gamma_f, qt.follower[g, j])
    marg = pi @ gamma_f
    vl = float(gamma_l @ qt.leader[g, j] @ marg)
    return gamma_l, gamma_f, vf, vl


def solve(spec: GameSpec, cfg: RLConfig, diagnostics=None) -> StrategyTable:
    """Full model-free solve: evaluation then improvement per stage, T..1."""
    require_valid(spec)
    cfg.validate()
    X, Al, Af = spec.shape
    grid = make_grid(X, cfg.belief_resolution)
    lattice = follower_grid(X, Af, cfg.follower_resolution)
    candidates = leader_grid(Al, cfg.leader_resolution)
    n = len(grid)
    table = StrategyTable.empty(grid, spec.horizon, Al, Af)
    v_next_f = np.zeros((n, X))
    v_next_l = np.zeros(n)
    stage_diags = []
    for t in range(spec.horizon, 0, -1):
        qt, diag = policy_evaluation(spec, grid, lattice, v_next_f, v_next_l,
                                     cfg, t)
        if cfg.threads > 1:
            results = Parallel(n_jobs=cfg.threads)(
                delayed(_improve_point)(g, grid.points[g], qt, candidates,
                                        lattice, cfg)
                for g in range(n)
            )
        else:
            results = [_improve_point(g, grid.points[g], qt, candidates,
                                      lattice, cfg) for g in range(n)]
        for g, (gamma_l, gamma_f, vf, vl) in enumerate(results):
            table.leader_policy[t - 1, g] = gamma_l
            table.follower_policy[t - 1, g] = gamma_f
            table.value_follower[t - 1, g] = vf
            table.value_leader[t - 1, g] = vl
        stage_diags.append({
            "t": t,
            "skipped_updates": diag.skipped_updates,
            "mean_abs_dq_per_sweep": diag.mean_abs_dq_per_sweep.tolist(),
        })
        v_next_f = table.value_follower[t - 1]
        v_next_l = table.value_leader[t - 1]
    if diagnostics is not None:
        diagnostics["stages"] = list(reversed(stage_diags))
        diagnostics["skipped_updates_total"] = int(
            sum(s["skipped_updates"] for s in stage_diags)
        )
    return table


def solve_report(spec: GameSpec, cfg: RLConfig, diagnostics: dict,
                 wall_time: float) -> dict:
    return {
        "solver": "rl",
        "config": {
            "alpha": cfg.alpha,
            "alpha_decay": cfg.alpha_decay,
            "sweeps": cfg.sweeps,
            "particle_count": cfg.particle_count,
            "belief_resolution": cfg.belief_resolution,
            "leader_resolution": cfg.leader_resolution,
            "follower_resolution": cfg.follower_resolution,
            "pg_step": cfg.pg_step,
            "pg_iters": cfg.pg_iters,
            "fp_outer_iters": cfg.fp_outer_iters,
            "seed": cfg.seed,
            "threads": cfg.threads,
        },
        "game": {"horizon": spec.horizon, "discount": spec.discount,
                 "num_states": spec.num_states,
                 "num_leader_actions": spec.num_leader_actions,
                 "num_follower_actions": spec.num_follower_actions},
        "training": diagnostics,
        "wall_time_seconds": wall_time,
    }


def timed_solve(spec: GameSpec, cfg: RLConfig):
    diagnostics = {}
    t0 = time.perf_counter()
    table = solve(spec, cfg, diagnostics)
    report = solve_report(spec, cfg, diagnostics, time.perf_counter() - t0)
    return table, report
