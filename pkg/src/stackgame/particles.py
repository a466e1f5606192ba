"""Bootstrap particle filter over the follower's private state.

Approximates the Bayes belief update when the transition kernel is only
available through sampling: weight current particles by the likelihood of
the observed follower action, resample with replacement (multinomial), then
propagate each survivor through the kernel.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ImpossibleObservationError
from .game import GameSpec, JointAction, sample_next_states
from .validation import as_rng

ZERO_MASS = 1e-300


@dataclass(frozen=True)
class ParticleSet:
    """K sampled states with normalized weights (uniform after resampling)."""

    states: np.ndarray   # (K,) int
    weights: np.ndarray  # (K,) float, sums to 1

    def __post_init__(self):
        states = np.ascontiguousarray(self.states, dtype=np.int64)
        weights = np.ascontiguousarray(self.weights, dtype=float)
        states.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "weights", weights)

    @property
    def count(self):
        return len(self.states)


def init(pi, count: int, rng) -> ParticleSet:
    """Draw ``count`` i.i.d. particles from the belief ``pi``."""
    if count < 1:
        raise ConfigError(f"particle count must be >= 1, got {count}")
    rng = as_rng(rng)
    pi = np.asarray(pi, dtype=float)
    cdf = np.cumsum(pi)
    states = np.minimum(
        np.searchsorted(cdf, rng.random(count), side="right"), len(pi) - 1
    )
    return ParticleSet(states, np.full(count, 1.0 / count))


def step(ps: ParticleSet, gamma_f, a: JointAction, spec: GameSpec, rng) -> ParticleSet:
    """One weight/resample/propagate cycle after observing joint action ``a``.

    Weights are the follower-action likelihood at the *current* particle
    states (the leader's action is uninformative about the state); the
    resampled survivors are then pushed through the transition kernel.
    """
    rng = as_rng(rng)
    gamma_f = np.asarray(gamma_f, dtype=float)
    w = ps.weights * gamma_f[ps.states, a[1]]
    total = w.sum()
    if not total > ZERO_MASS:
        raise ImpossibleObservationError(
            f"follower action {a[1]} has zero likelihood at every particle"
        )
    w = w / total
    k = ps.count
    idx = np.minimum(np.searchsorted(np.cumsum(w), rng.random(k), side="right"), k - 1)
    survivors = ps.states[idx]
    next_states = sample_next_states(spec, survivors, a, rng)
    return ParticleSet(next_states, np.full(k, 1.0 / k))


def estimate(ps: ParticleSet) -> np.ndarray:
    """Weighted empirical distribution of the particle states."""
    num_states = int(ps.states.max()) + 1 if len(ps.states) else 0
    return np.bincount(ps.states, weights=ps.weights, minlength=num_states)


def estimate_over(ps: ParticleSet, num_states: int) -> np.ndarray:
    """Like :func:`estimate` with an explicit state-space size."""
    return np.bincount(ps.states, weights=ps.weights, minlength=num_states)


def step_counts_batch(counts, gamma_f, a: JointAction, spec: GameSpec, rng):
    """Count-space twin of :func:`step` for many filters at once.

    A particle population over finitely many states is fully described by its
    per-state counts, and every stage of the bootstrap cycle maps multinomial
    counts to multinomial counts:

    * weighting + multinomial resampling draws K survivors whose states are
      i.i.d. with probability proportional to ``counts[x] * gamma_f(af | x)``,
      so survivor counts are multinomial;
    * propagation pushes each survivor independently through its row of the
      kernel, adding one multinomial draw per source state.

    ``counts``: (B, X) integer matrix, one filter per row, each summing to K.
    Returns ``(next_counts, ok)`` where rows with zero total likelihood are
    flagged False and passed through unchanged (the caller skips them).
    Distribution-identical to running :func:`step` per row.
    """
    rng = as_rng(rng)
    gamma_f = np.asarray(gamma_f, dtype=float)
    counts = np.asarray(counts)
    b, num_states = counts.shape
    k = int(counts[0].sum())
    lik = counts * gamma_f[:, a[1]][None, :]
    z = lik.sum(axis=1)
    ok = z > ZERO_MASS
    safe = np.where(ok, z, 1.0)
    resample_p = lik / safe[:, None]
    resample_p[~ok] = 1.0 / num_states
    resample_p /= resample_p.sum(axis=1, keepdims=True)
    survivors = rng.multinomial(k, resample_p)
    next_counts = np.zeros_like(survivors)
    kernel = spec.transition[:, a[0], a[1], :]
    kernel = kernel / kernel.sum(axis=1, keepdims=True)
    for x in range(num_states):
        next_counts += rng.multinomial(survivors[:, x], kernel[x])
    return next_counts, ok


def init_counts_batch(pi, count: int, batch: int, rng):
    """Count-space twin of :func:`init`: (batch, X) multinomial draws from pi."""
    rng = as_rng(rng)
    pi = np.asarray(pi, dtype=float)
    pi = pi / pi.sum()
    return rng.multinomial(count, np.broadcast_to(pi, (batch, len(pi))))
