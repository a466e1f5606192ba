"""Belief tracking over the follower's private state.

The planner that only sees the public action history keeps a posterior
``pi`` over the follower's state.  This module provides the exact Bayes
update of that posterior, a uniform lattice discretizing the simplex, and
piecewise-linear interpolation of value tables defined on the lattice.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ImpossibleObservationError
from .game import GameSpec, JointAction

# Observations with likelihood mass below this are treated as impossible.
ZERO_MASS = 1e-300


@dataclass(frozen=True)
class BeliefGrid:
    """Uniform lattice over the probability simplex.

    ``points`` has shape (num_points, num_states); rows sum to one and are
    ordered lexicographically by their integer lattice coordinates, so for
    two states the first coordinate ascends 0, h, 2h, ..., 1.
    """

    num_states: int
    resolution: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def spacing(self):
        return 1.0 / (self.resolution - 1)

    def nearest_index(self, pi) -> int:
        """Index of the grid point closest to ``pi`` (first on ties)."""
        pi = np.asarray(pi, dtype=float)
        d = np.abs(self.points - pi).sum(axis=1)
        return int(np.argmin(d))

    def nearest_indices(self, beliefs) -> np.ndarray:
        """Vectorized nearest-point lookup for an array of beliefs (B, X)."""
        beliefs = np.asarray(beliefs, dtype=float)
        if self.num_states == 2:
            idx = np.rint(beliefs[:, 0] * (self.resolution - 1)).astype(int)
            return np.clip(idx, 0, len(self) - 1)
        d = np.abs(beliefs[:, None, :] - self.points[None, :, :]).sum(axis=2)
        return np.argmin(d, axis=1)


def make_grid(num_states: int, resolution: int) -> BeliefGrid:
    """Uniform simplex lattice with ``resolution`` levels per coordinate.

    For two states this is the ``resolution`` points (i*h, 1-i*h); in general
    it is every composition of resolution-1 lattice steps among the states.
    """
    if resolution < 2:
        raise ConfigError(f"grid resolution must be >= 2, got {resolution}")
    if num_states < 1:
        raise ConfigError(f"num_states must be >= 1, got {num_states}")
    if num_states == 1:
        return BeliefGrid(1, resolution, np.ones((1, 1)))
    steps = resolution - 1
    counts = []

    def compose(prefix, remaining, slots):
        if slots == 1:
            counts.append(prefix + [remaining])
            return
        for c in range(remaining + 1):
            compose(prefix + [c], remaining - c, slots - 1)

    compose([], steps, num_states)
    points = np.asarray(counts, dtype=float) / steps
    return BeliefGrid(num_states, resolution, points)


def bayes_update(pi, gamma_f, a: JointAction, spec: GameSpec) -> np.ndarray:
    """Exact posterior over the next state after observing joint action ``a``.

    The follower's action carries information about the current state through
    the prescription ``gamma_f``; the leader's action only enters through the
    transition kernel.  Raises ImpossibleObservationError when the observed
    follower action has zero probability under (pi, gamma_f).
    """
    pi = np.asarray(pi, dtype=float)
    gamma_f = np.asarray(gamma_f, dtype=float)
    lik = gamma_f[:, a[1]]
    w = pi * lik
    den = w.sum()
    if not den > ZERO_MASS:
        raise ImpossibleObservationError(
            f"follower action {a[1]} has zero probability under the current "
            "belief and prescription"
        )
    post = w / den
    out = post @ spec.transition[:, a[0], a[1], :]
    return out / out.sum()


def bayes_update_batch(beliefs, gamma_rows, a: JointAction, spec: GameSpec):
    """Batched :func:`bayes_update`.

    ``beliefs``: (B, X); ``gamma_rows``: (B, X, A_f) per-row prescriptions.
    Returns (posteriors (B, X), ok mask (B,)); rows with an impossible
    observation are flagged False and returned as the unnormalized prior.
    """
    beliefs = np.asarray(beliefs, dtype=float)
    lik = gamma_rows[:, :, a[1]]
    w = beliefs * lik
    den = w.sum(axis=1)
    ok = den > ZERO_MASS
    safe = np.where(ok, den, 1.0)
    post = w / safe[:, None]
    out = post @ spec.transition[:, a[0], a[1], :]
    sums = out.sum(axis=1)
    out = out / np.where(sums > 0, sums, 1.0)[:, None]
    return out, ok


def interpolate(table, grid: BeliefGrid, pi, state=None):
    """Piecewise-linear interpolation of a value table at belief ``pi``.

    ``table`` is (len(grid),) for a leader table or (len(grid), X) for a
    follower table; pass ``state`` to select the follower column.  ``pi`` may
    be a single belief (X,) or a batch (B, X); ``state`` may be scalar or a
    matching (B,) array.  Exact at grid points.  For two states this is
    linear interpolation on the first coordinate; for more states it is
    barycentric interpolation on the lattice triangulation.
    """
    table = np.asarray(table, dtype=float)
    if state is not None:
        if table.ndim != 2:
            raise ValueError("state given but table has no state axis")
        if np.ndim(state) == 0:
            values = table[:, int(state)]
        else:
            values = None  # handled after weights are known
    else:
        if table.ndim != 1:
            raise ValueError("table has a state axis; pass state=")
        values = table

    pi_arr = np.asarray(pi, dtype=float)
    single = pi_arr.ndim == 1
    if single:
        pi_arr = pi_arr[None, :]

    idx, wts = _bracketing_weights(grid, pi_arr)  # (B, V), (B, V)
    if values is not None:
        out = (values[idx] * wts).sum(axis=1)
    else:
        state_arr = np.asarray(state, dtype=int)
        out = (table[idx, state_arr[:, None]] * wts).sum(axis=1)
    return float(out[0]) if single else out


def _bracketing_weights(grid: BeliefGrid, beliefs):
    """Vertex indices and convex weights expressing each belief on the lattice."""
    B = beliefs.shape[0]
    X = grid.num_states
    steps = grid.resolution - 1
    if X == 1:
        return np.zeros((B, 1), dtype=int), np.ones((B, 1))
    if X == 2:
        pos = np.clip(beliefs[:, 0], 0.0, 1.0) * steps
        lo = np.minimum(pos.astype(int), len(grid) - 2)
        frac = pos - lo
        idx = np.stack([lo, lo + 1], axis=1)
        wts = np.stack([1.0 - frac, frac], axis=1)
        return idx, wts
    return _freudenthal_weights(grid, beliefs)


def _freudenthal_weights(grid: BeliefGrid, beliefs):
    """Barycentric weights on the simplex lattice for X >= 3.

    Works in the cumulative-sum coordinates where lattice cells become
    axis-aligned cubes; the simplex containing each point is found by sorting
    the fractional parts (Freudenthal triangulation).
    """
    B, X = beliefs.shape
    steps = grid.resolution - 1
    y = np.clip(beliefs, 0.0, 1.0) * steps
    # cumulative coordinates xi_j = sum_{i >= j} y_i, xi_0 = steps exactly
    xi = np.flip(np.cumsum(np.flip(y, axis=1), axis=1), axis=1)
    xi[:, 0] = steps
    xi = np.clip(xi, 0.0, steps)
    base = np.floor(xi).astype(int)
    base = np.minimum(base, steps)  # guard xi == steps
    frac = xi - base
    # visit fractional parts in decreasing order; each step raises one
    # cumulative coordinate to the next integer level
    order = np.argsort(-frac, axis=1, kind="stable")
    sorted_frac = np.take_along_axis(frac, order, axis=1)
    # weights: lambda_0 = 1 - d_(1), lambda_k = d_(k) - d_(k+1), last = d_(X)
    lams = np.empty((B, X + 1))
    lams[:, 0] = 1.0 - sorted_frac[:, 0]
    lams[:, 1:X] = sorted_frac[:, :-1] - sorted_frac[:, 1:]
    lams[:, X] = sorted_frac[:, -1]

    # build vertex lattice coordinates in xi space, then map to point indices
    idx = np.empty((B, X + 1), dtype=int)
    vert = base.copy()
    idx[:, 0] = _xi_to_index(grid, vert)
    bump = np.zeros_like(vert)
    rows = np.arange(B)
    for k in range(X):
        bump[rows, order[:, k]] += 1
        v = np.clip(vert + bump, 0, steps)
        idx[:, k + 1] = _xi_to_index(grid, v)
    return idx, np.maximum(lams, 0.0)


def _xi_to_index(grid: BeliefGrid, xi_int):
    """Map integer cumulative coordinates back to grid point indices."""
    steps = grid.resolution - 1
    xi_int = np.minimum.accumulate(
        np.column_stack([np.full(len(xi_int), steps), xi_int[:, 1:]]), axis=1
    )
    counts = np.empty_like(xi_int)
    counts[:, :-1] = xi_int[:, :-1] - xi_int[:, 1:]
    counts[:, -1] = xi_int[:, -1]
    key = _lattice_keys(grid)
    flat = _encode_counts(counts, steps)
    pos = np.searchsorted(key, flat)
    return pos


def _encode_counts(counts, steps):
    enc = np.zeros(len(counts), dtype=np.int64)
    for j in range(counts.shape[1]):
        enc = enc * (steps + 1) + counts[:, j]
    return enc


_KEY_CACHE = {}


def _lattice_keys(grid: BeliefGrid):
    # the lattice is fully determined by (num_states, resolution)
    key = (grid.num_states, grid.resolution)
    cached = _KEY_CACHE.get(key)
    if cached is None:
        steps = grid.resolution - 1
        counts = np.rint(grid.points * steps).astype(np.int64)
        cached = _encode_counts(counts, steps)
        _KEY_CACHE[key] = cached
    return cached


def value_table_to_csv(path, grid: BeliefGrid, tables_by_stage):
    """Write stage value tables as CSV rows.

    ``tables_by_stage`` maps stage index t (1-based) to either a leader table
    (N,) or a follower table (N, X).  Columns: t, grid_index, one belief
    coordinate per state, state (blank for leader tables), value.
    """
    X = grid.num_states
    header = ["t", "grid_index"] + [f"belief_coord_{i}" for i in range(X)]
    header += ["state", "value"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in sorted(tables_by_stage):
            table = np.asarray(tables_by_stage[t], dtype=float)
            for g in range(len(grid)):
                coords = [repr(c) for c in grid.points[g]]
                if table.ndim == 1:
                    writer.writerow([t, g] + coords + ["", repr(table[g])])
                else:
                    for x in range(table.shape[1]):
                        writer.writerow([t, g] + coords + [x, repr(table[g, x])])
