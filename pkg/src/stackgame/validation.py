"""Input validation helpers used at the public API boundaries.

All helpers either return a normalized ``np.ndarray`` (float64, C order) or
raise :class:`~stackgame.errors.ConfigError` with a message naming the
offending argument.
"""

import numpy as np

from .errors import ConfigError

PROB_ATOL = 1e-9


def as_rng(seed_or_rng):
    """Coerce ``None``, an int seed, or a Generator into a Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def check_probability_vector(p, name="p", atol=PROB_ATOL):
    """Validate a 1-D probability vector; returns it as float64."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1:
        raise ConfigError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains non-finite entries")
    if np.any(arr < -atol):
        raise ConfigError(f"{name} contains negative entries: {arr}")
    total = arr.sum()
    if abs(total - 1.0) > atol:
        raise ConfigError(f"{name} must sum to 1 (got {total!r})")
    return arr


def check_belief(pi, num_states, name="belief"):
    pi = check_probability_vector(pi, name=name)
    if pi.shape[0] != num_states:
        raise ConfigError(
            f"{name} has {pi.shape[0]} entries, expected {num_states}"
        )
    return pi


def check_leader_prescription(gamma_l, num_actions, name="gamma_l"):
    gamma_l = check_probability_vector(gamma_l, name=name)
    if gamma_l.shape[0] != num_actions:
        raise ConfigError(
            f"{name} has {gamma_l.shape[0]} entries, expected {num_actions}"
        )
    return gamma_l


def check_follower_prescription(gamma_f, num_states, num_actions, name="gamma_f"):
    """Validate a (num_states, num_actions) row-stochastic array."""
    arr = np.asarray(gamma_f, dtype=float)
    if arr.shape != (num_states, num_actions):
        raise ConfigError(
            f"{name} must have shape {(num_states, num_actions)}, got {arr.shape}"
        )
    for x in range(num_states):
        check_probability_vector(arr[x], name=f"{name}[{x}]")
    return arr


def check_index(i, size, name="index"):
    i = int(i)
    if not 0 <= i < size:
        raise IndexError(f"{name}={i} out of range [0, {size})")
    return i


def check_positive(value, name, kind=float):
    value = kind(value)
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def check_in_unit_interval(value, name, open_left=False):
    value = float(value)
    lo_ok = value > 0 if open_left else value >= 0
    if not (lo_ok and value <= 1.0):
        left = "(" if open_left else "["
        raise ConfigError(f"{name} must lie in {left}0, 1], got {value}")
    return value
