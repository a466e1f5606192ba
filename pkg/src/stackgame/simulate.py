"""Forward rollouts, discounted-return estimation, and deviation gaps.

Episodes are simulated by tracking the planner's belief exactly as the
deployed strategies do: snap to the nearest grid point, act from the stored
prescriptions, advance the belief with the Bayes update under the *stored*
follower prescription (even when the acting follower deviates, the public
belief is defined by the equilibrium strategy).
"""

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import RolloutError
from .exact import (DeployedStrategy, SolveConfig, follower_response_recursion)
from .game import GameSpec
from .policy import StrategyTable, follower_grid, leader_grid
from .validation import as_rng

_TINY = 1e-300


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray            # (T,)
    joint_actions: np.ndarray     # (T, 2) leader, follower
    rewards_leader: np.ndarray    # (T,)
    rewards_follower: np.ndarray  # (T,)
    beliefs: np.ndarray           # (T, X) belief entering each stage

    @property
    def horizon(self):
        return len(self.states)

    def discounted_return(self, player: str, discount: float) -> float:
        r = self.rewards_leader if player == "leader" else self.rewards_follower
        return float(sum(discount ** t * r[t] for t in range(len(r))))


@dataclass(frozen=True)
class ReturnEstimate:
    mean: float
    std_error: float
    episodes: int


class EpisodeBatch:
    """Raw vectorized episode results; means exclude failed episodes."""

    def __init__(self, returns_leader, returns_follower, alive, fail_stage,
                 records=None):
        self.returns_leader = returns_leader
        self.returns_follower = returns_follower
        self.alive = alive
        self.fail_stage = fail_stage
        self.records = records

    @property
    def failed(self):
        return int((~self.alive).sum())

    def estimate(self, player: str) -> ReturnEstimate:
        r = (self.returns_leader if player == "leader"
             else self.returns_follower)[self.alive]
        n = len(r)
        if n == 0:
            return ReturnEstimate(float("nan"), float("nan"), 0)
        se = float(r.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return ReturnEstimate(float(r.mean()), se, n)


def _inverse_cdf_rows(rows, u):
    cdf = np.cumsum(rows, axis=1)
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, rows.shape[1] - 1)


def run_episodes(table: StrategyTable, spec: GameSpec, episodes: int, rng,
                 follower_override=None, record: bool = False) -> EpisodeBatch:
    """Simulate ``episodes`` rollouts of a deployed strategy table.

    ``follower_override`` replaces the *acting* follower prescriptions: a
    (X, A_f) array applied at every stage and belief, or a (T, N, X, A_f)
    table.  Belief tracking always uses the stored prescriptions.  Episodes
    whose observed follower action has zero probability under the stored
    prescription cannot update the public belief; they are marked failed at
    that stage and excluded from estimates.
    """
    rng = as_rng(rng)
    X, Al, Af = spec.shape
    T = table.horizon
    grid = table.grid
    e = int(episodes)
    if follower_override is not None:
        follower_override = np.asarray(follower_override, dtype=float)

    mu = np.tile(spec.initial_dist, (e, 1))
    x = _inverse_cdf_rows(np.tile(spec.initial_dist, (e, 1)), rng.random(e))
    ret_l = np.zeros(e)
    ret_f = np.zeros(e)
    alive = np.ones(e, dtype=bool)
    fail_stage = np.zeros(e, dtype=int)
    disc = 1.0
    rows_idx = np.arange(e)
    rec = None
    if record:
        rec = {
            "states": np.zeros((e, T), dtype=int),
            "actions": np.zeros((e, T, 2), dtype=int),
            "rewards_leader": np.zeros((e, T)),
            "rewards_follower": np.zeros((e, T)),
            "beliefs": np.zeros((e, T, X)),
        }

    trans_flat = spec.transition.reshape(X, Al * Af, X)
    for t in range(1, T + 1):
        g = grid.nearest_indices(mu)
        gl_rows = table.leader_policy[t - 1][g]          # (e, Al)
        gf_track = table.follower_policy[t - 1][g]       # (e, X, Af)
        if follower_override is None:
            act_rows = gf_track[rows_idx, x]
        elif follower_override.ndim == 2:
            act_rows = follower_override[x]
        else:
            act_rows = follower_override[t - 1][g][rows_idx, x]
        a_l = _inverse_cdf_rows(gl_rows, rng.random(e))
        a_f = _inverse_cdf_rows(act_rows, rng.random(e))
        r_l = spec.reward_leader[x, a_l, a_f]
        r_f = spec.reward_follower[x, a_l, a_f]
        ret_l += np.where(alive, disc * r_l, 0.0)
        ret_f += np.where(alive, disc * r_f, 0.0)
        if record:
            rec["states"][:, t - 1] = x
            rec["actions"][:, t - 1, 0] = a_l
            rec["actions"][:, t - 1, 1] = a_f
            rec["rewards_leader"][:, t - 1] = r_l
            rec["rewards_follower"][:, t - 1] = r_f
            rec["beliefs"][:, t - 1] = mu

        # public belief update with the stored follower prescription
        lik = gf_track[rows_idx, :, a_f]                 # (e, X)
        w = mu * lik
        den = w.sum(axis=1)
        dead_now = alive & ~(den > _TINY)
        fail_stage[dead_now] = t
        alive &= ~dead_now
        post = w / np.where(den > _TINY, den, 1.0)[:, None]
        code = a_l * Af + a_f
        mu = np.einsum("ex,xey->ey", post, trans_flat[:, code, :])
        sums = mu.sum(axis=1)
        mu = mu / np.where(sums > 0, sums, 1.0)[:, None]

        # state transition
        x = _inverse_cdf_rows(trans_flat[x, code], rng.random(e))
        disc *= spec.discount
    return EpisodeBatch(ret_l, ret_f, alive, fail_stage, rec)


def rollout(profile: DeployedStrategy, spec: GameSpec, rng) -> Trajectory:
    """One episode under the deployed equilibrium profile."""
    batch = run_episodes(profile.table, spec, 1, rng, record=True)
    if not batch.alive[0]:
        raise RolloutError("belief update impossible during rollout",
                           int(batch.fail_stage[0]))
    rec = batch.records
    return Trajectory(
        states=rec["states"][0],
        joint_actions=rec["actions"][0],
        rewards_leader=rec["rewards_leader"][0],
        rewards_follower=rec["rewards_follower"][0],
        beliefs=rec["beliefs"][0],
    )


def estimate_returns(profile: DeployedStrategy, spec: GameSpec, episodes: int,
                     rng) -> tuple[ReturnEstimate, ReturnEstimate]:
    """Monte-Carlo means of both players' discounted returns."""
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    batch = run_episodes(profile.table, spec, episodes, rng)
    return batch.estimate("leader"), batch.estimate("follower")


def pure_follower_prescriptions(spec: GameSpec):
    """Every deterministic state-to-action follower prescription."""
    return follower_grid(spec.num_states, spec.num_follower_actions, 2)


def deviation_gap_follower(table: StrategyTable, spec: GameSpec,
                           deviations=None, episodes: int = 10_000,
                           rng=None, details: Optional[dict] = None) -> float:
    """Largest estimated follower gain from a unilateral deviation.

    Each deviation is a follower override ((X, A_f) constant or (T, N, X,
    A_f) table) substituted at every stage and belief while the leader keeps
    the equilibrium strategy.  Returns max(deviation return - equilibrium
    return); ``details``, when given, collects per-deviation estimates.
    """
    rng = as_rng(rng)
    if deviations is None:
        deviations = pure_follower_prescriptions(spec)
    streams = rng.spawn(len(deviations) + 1)
    base = run_episodes(table, spec, episodes, streams[0]).estimate("follower")
    gaps = []
    rows = []
    for dev, stream in zip(deviations, streams[1:]):
        est = run_episodes(table, spec, episodes, stream,
                           follower_override=dev).estimate("follower")
        if est.episodes == 0:
            rows.append({"mean": None, "std_error": None, "episodes": 0})
            continue
        gaps.append(est.mean - base.mean)
        rows.append({"mean": est.mean, "std_error": est.std_error,
                     "episodes": est.episodes})
    if details is not None:
        details["equilibrium"] = {"mean": base.mean, "std_error": base.std_error,
                                  "episodes": base.episodes}
        details["deviations"] = rows
    if not gaps:
        raise RolloutError("every deviation episode failed", 0)
    return float(max(gaps))


def deviation_gap_leader(table: StrategyTable, spec: GameSpec,
                         deviations=None, episodes: int = 10_000, rng=None,
                         cfg: Optional[SolveConfig] = None,
                         details: Optional[dict] = None) -> float:
    """Largest estimated leader gain from deviating, with the follower
    re-best-responding to each deviation.

    Each deviation is a leader prescription ((A_l,) constant or (T, N, A_l)
    table); its paired follower response is recomputed by backward recursion
    against the fixed deviated leader.
    """
    rng = as_rng(rng)
    grid = table.grid
    if cfg is None:
        cfg = SolveConfig(belief_resolution=grid.resolution)
    if deviations is None:
        deviations = leader_grid(spec.num_leader_actions, cfg.leader_resolution)
    streams = rng.spawn(len(deviations) + 1)
    base = run_episodes(table, spec, episodes, streams[0]).estimate("leader")
    t_len, n = table.horizon, len(grid)
    gaps = []
    rows = []
    for dev, stream in zip(deviations, streams[1:]):
        dev = np.asarray(dev, dtype=float)
        if dev.ndim == 1:
            leader_policy = np.broadcast_to(dev, (t_len, n, len(dev))).copy()
        else:
            leader_policy = dev
        dev_table = follower_response_recursion(spec, grid, leader_policy, cfg)
        est = run_episodes(dev_table, spec, episodes, stream).estimate("leader")
        if est.episodes == 0:
            rows.append({"mean": None, "std_error": None, "episodes": 0})
            continue
        gaps.append(est.mean - base.mean)
        rows.append({"mean": est.mean, "std_error": est.std_error,
                     "episodes": est.episodes})
    if details is not None:
        details["equilibrium"] = {"mean": base.mean, "std_error": base.std_error,
                                  "episodes": base.episodes}
        details["deviations"] = rows
    if not gaps:
        raise RolloutError("every deviation episode failed", 0)
    return float(max(gaps))


def write_episode_log(path, batch: EpisodeBatch, spec: GameSpec, seed):
    """JSON-lines episode log: one object per completed episode."""
    if batch.records is None:
        raise ValueError("episode batch was run without record=True")
    rec = batch.records
    with open(path, "w") as fh:
        for i in range(len(batch.alive)):
            if not batch.alive[i]:
                continue
            fh.write(json.dumps({
                "seed": seed,
                "episode": i,
                "states": rec["states"][i].tolist(),
                "actions_leader": rec["actions"][i, :, 0].tolist(),
                "actions_follower": rec["actions"][i, :, 1].tolist(),
                "rewards_leader": rec["rewards_leader"][i].tolist(),
                "rewards_follower": rec["rewards_follower"][i].tolist(),
                "return_leader": batch.returns_leader[i],
                "return_follower": batch.returns_follower[i],
            }, sort_keys=True))
            fh.write("\n")
