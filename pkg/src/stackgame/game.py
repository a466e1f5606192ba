"""Game primitives: state/action spaces, reward tables, transition kernel.

A :class:`GameSpec` is an immutable description of a finite two-player
leader/follower game in which the follower's state evolves as a controlled
Markov chain.  Array layouts:

* ``reward_leader`` / ``reward_follower``: ``(X, A_l, A_f)``
* ``transition``: ``(X, A_l, A_f, X')`` with ``transition[x, al, af]`` a
  distribution over the next state
* ``initial_dist``: ``(X,)``
"""

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .validation import PROB_ATOL, as_rng, check_index

GAME_FORMAT_VERSION = 1


class JointAction(NamedTuple):
    """A simultaneous (leader, follower) action pair."""

    leader: int
    follower: int


@dataclass(frozen=True)
class GameSpec:
    num_states: int
    num_leader_actions: int
    num_follower_actions: int
    reward_leader: np.ndarray
    reward_follower: np.ndarray
    transition: np.ndarray
    initial_dist: np.ndarray
    horizon: int
    discount: float
    # cumulative transition rows, precomputed for fast sampling
    _transition_cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("reward_leader", "reward_follower", "transition", "initial_dist"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        cdf = np.cumsum(self.transition, axis=-1)
        cdf.setflags(write=False)
        object.__setattr__(self, "_transition_cdf", cdf)

    @property
    def shape(self):
        return (self.num_states, self.num_leader_actions, self.num_follower_actions)


def validate(spec: GameSpec) -> list[str]:
    """Check every GameSpec invariant; returns a list of violation messages.

    An empty list means the spec is valid.  Violations name the offending
    table entry so callers can report them directly.
    """
    X, Al, Af = spec.shape
    violations = []
    if X < 1 or Al < 1 or Af < 1:
        violations.append(
            f"space sizes must be positive: states={X} leader={Al} follower={Af}"
        )
        return violations
    if spec.horizon < 1:
        violations.append(f"horizon must be a positive integer, got {spec.horizon}")
    if not 0.0 <= spec.discount <= 1.0:
        violations.append(f"discount must lie in [0, 1], got {spec.discount}")

    for name, arr in (("reward_leader", spec.reward_leader),
                      ("reward_follower", spec.reward_follower)):
        if arr.shape != (X, Al, Af):
            violations.append(f"{name} has shape {arr.shape}, expected {(X, Al, Af)}")
        elif not np.all(np.isfinite(arr)):
            violations.append(f"{name} contains non-finite entries")

    if spec.transition.shape != (X, Al, Af, X):
        violations.append(
            f"transition has shape {spec.transition.shape}, expected {(X, Al, Af, X)}"
        )
    else:
        bad = (spec.transition < 0) | (spec.transition > 1)
        for x, al, af, xn in zip(*np.nonzero(bad)):
            violations.append(
                f"transition[{x},{al},{af},{xn}]={spec.transition[x, al, af, xn]!r}"
                " outside [0, 1]"
            )
        sums = spec.transition.sum(axis=-1)
        off = np.abs(sums - 1.0) > PROB_ATOL
        for x, al, af in zip(*np.nonzero(off)):
            violations.append(
                f"transition column (state={x}, leader={al}, follower={af}) "
                f"sums to {sums[x, al, af]!r}, expected 1"
            )

    if spec.initial_dist.shape != (X,):
        violations.append(
            f"initial_dist has shape {spec.initial_dist.shape}, expected ({X},)"
        )
    else:
        if np.any((spec.initial_dist < 0) | (spec.initial_dist > 1)):
            violations.append(f"initial_dist entries outside [0, 1]: {spec.initial_dist}")
        s = spec.initial_dist.sum()
        if abs(s - 1.0) > PROB_ATOL:
            violations.append(f"initial_dist sums to {s!r}, expected 1")
    return violations


def require_valid(spec: GameSpec):
    """Raise ValueError listing all violations if the spec is invalid."""
    violations = validate(spec)
    if violations:
        raise ValueError("invalid GameSpec:\n" + "\n".join(violations))


def reward(spec: GameSpec, player: str, x: int, a: JointAction) -> float:
    """Stage reward for ``player`` ('leader' or 'follower'). Pure lookup."""
    x = check_index(x, spec.num_states, "state")
    al = check_index(a[0], spec.num_leader_actions, "leader action")
    af = check_index(a[1], spec.num_follower_actions, "follower action")
    if player == "leader":
        return float(spec.reward_leader[x, al, af])
    if player == "follower":
        return float(spec.reward_follower[x, al, af])
    raise ValueError(f"player must be 'leader' or 'follower', got {player!r}")


def transition_prob(spec: GameSpec, x_next: int, x: int, a: JointAction) -> float:
    """Probability of moving to ``x_next`` from ``x`` under joint action ``a``."""
    x_next = check_index(x_next, spec.num_states, "next state")
    x = check_index(x, spec.num_states, "state")
    al = check_index(a[0], spec.num_leader_actions, "leader action")
    af = check_index(a[1], spec.num_follower_actions, "follower action")
    return float(spec.transition[x, al, af, x_next])


def sample_next_state(spec: GameSpec, x: int, a: JointAction, rng) -> int:
    """Draw the next state from the transition kernel (inverse-CDF sampling)."""
    rng = as_rng(rng)
    cdf = spec._transition_cdf[x, a[0], a[1]]
    i = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(i, spec.num_states - 1)


def sample_next_states(spec: GameSpec, xs: np.ndarray, a: JointAction, rng) -> np.ndarray:
    """Vectorized :func:`sample_next_state` for an array of current states."""
    rng = as_rng(rng)
    cdf = spec._transition_cdf[:, a[0], a[1], :]  # (X, X)
    u = rng.random(len(xs))
    idx = (u[:, None] >= cdf[xs]).sum(axis=1)
    return np.minimum(idx, spec.num_states - 1)


def sample_initial_state(spec: GameSpec, rng) -> int:
    rng = as_rng(rng)
    cdf = np.cumsum(spec.initial_dist)
    i = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(i, spec.num_states - 1)


def security_game(horizon: int = 5) -> GameSpec:
    """The built-in defender/attacker instance.

    Two states, two actions per player.  The same bimatrix applies in both
    states; the chain stays put with probability 0.1 and switches with
    probability 0.9 regardless of the joint action.  Discount 0.6, uniform
    initial distribution, configurable horizon.
    """
    # rows: leader action (D1, D2); columns: follower action (A1, A2)
    leader = np.array([[2.0, 4.0], [1.0, 3.0]])
    follower = np.array([[1.0, 0.0], [0.0, 2.0]])
    reward_leader = np.stack([leader, leader])
    reward_follower = np.stack([follower, follower])
    stay, switch = 0.1, 0.9
    transition = np.empty((2, 2, 2, 2))
    for x in range(2):
        transition[x, :, :, x] = stay
        transition[x, :, :, 1 - x] = switch
    return GameSpec(
        num_states=2,
        num_leader_actions=2,
        num_follower_actions=2,
        reward_leader=reward_leader,
        reward_follower=reward_follower,
        transition=transition,
        initial_dist=np.array([0.5, 0.5]),
        horizon=int(horizon),
        discount=0.6,
    )


def to_json_dict(spec: GameSpec) -> dict:
    return {
        "format": GAME_FORMAT_VERSION,
        "num_states": spec.num_states,
        "num_leader_actions": spec.num_leader_actions,
        "num_follower_actions": spec.num_follower_actions,
        "reward_leader": spec.reward_leader.tolist(),
        "reward_follower": spec.reward_follower.tolist(),
        "transition": spec.transition.tolist(),
        "initial_dist": spec.initial_dist.tolist(),
        "horizon": spec.horizon,
        "discount": spec.discount,
    }


def from_json_dict(doc: dict) -> GameSpec:
    version = doc.get("format")
    if version != GAME_FORMAT_VERSION:
        raise ValueError(f"unsupported game format {version!r}")
    spec = GameSpec(
        num_states=int(doc["num_states"]),
        num_leader_actions=int(doc["num_leader_actions"]),
        num_follower_actions=int(doc["num_follower_actions"]),
        reward_leader=np.asarray(doc["reward_leader"], dtype=float),
        reward_follower=np.asarray(doc["reward_follower"], dtype=float),
        transition=np.asarray(doc["transition"], dtype=float),
        initial_dist=np.asarray(doc["initial_dist"], dtype=float),
        horizon=int(doc["horizon"]),
        discount=float(doc["discount"]),
    )
    require_valid(spec)
    return spec


def save_game(spec: GameSpec, path):
    with open(path, "w") as fh:
        json.dump(to_json_dict(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_game(path) -> GameSpec:
    with open(path) as fh:
        return from_json_dict(json.load(fh))
