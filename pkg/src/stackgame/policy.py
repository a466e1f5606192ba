"""Prescription representations, simplex arithmetic, and action sampling.

A leader prescription is a distribution over leader actions (vector of
length A_l).  A follower prescription maps each private state to a
distribution over follower actions (array of shape (X, A_f)).  A
StrategyTable stores, per stage and belief-grid point, the equilibrium
prescription pair together with both players' value entries.
"""

import csv
import re
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .belief import BeliefGrid, make_grid
from .errors import ConfigError
from .validation import as_rng


class PrescriptionPair(NamedTuple):
    leader: np.ndarray    # (A_l,)
    follower: np.ndarray  # (X, A_f)


def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex.

    Sort-based exact algorithm (Held, Wolfe & Crowder; see also Wang &
    Carreira-Perpinan 2013): O(n log n), returns the unique nearest point.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project non-finite entries")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho_candidates = u + (1.0 - css) / np.arange(1, len(v) + 1)
    rho = np.nonzero(rho_candidates > 0)[0][-1]
    lam = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + lam, 0.0)


def simplex_project_rows(m) -> np.ndarray:
    """Row-wise :func:`simplex_project` for a 2-D array."""
    m = np.asarray(m, dtype=float)
    u = -np.sort(-m, axis=1)
    css = np.cumsum(u, axis=1)
    cand = u + (1.0 - css) / np.arange(1, m.shape[1] + 1)
    # positive candidates form a prefix; pick the last one
    rho = (cand > 0).cumsum(axis=1).argmax(axis=1)
    lam = (1.0 - css[np.arange(len(m)), rho]) / (rho + 1.0)
    return np.maximum(m + lam[:, None], 0.0)


def sample_action(probs, rng) -> int:
    """Draw an action index from a probability vector (inverse CDF)."""
    rng = as_rng(rng)
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(i, len(cdf) - 1)


def sample_leader_action(gamma_l, rng) -> int:
    return sample_action(gamma_l, rng)


def sample_follower_action(gamma_f, x: int, rng) -> int:
    return sample_action(np.asarray(gamma_f)[int(x)], rng)


def leader_grid(num_actions: int, resolution: int) -> list[np.ndarray]:
    """Uniform lattice over leader prescriptions, ordered like the belief grid."""
    if resolution < 2:
        raise ConfigError(f"leader grid resolution must be >= 2, got {resolution}")
    return [p.copy() for p in make_grid(num_actions, resolution).points]


def follower_grid(num_states: int, num_actions: int, resolution: int = 11) -> list[np.ndarray]:
    """Cartesian product of per-state action lattices.

    Returns every follower prescription whose rows all lie on the uniform
    per-state lattice; the first state's row varies slowest.
    """
    if resolution < 2:
        raise ConfigError(f"follower grid resolution must be >= 2, got {resolution}")
    rows = make_grid(num_actions, resolution).points
    n = len(rows)
    out = []
    idx = np.zeros(num_states, dtype=int)
    while True:
        out.append(np.stack([rows[i] for i in idx]))
        k = num_states - 1
        while k >= 0:
            idx[k] += 1
            if idx[k] < n:
                break
            idx[k] = 0
            k -= 1
        if k < 0:
            break
    return out


def nearest_prescription_index(lattice, gamma_f) -> int:
    """Index of the lattice prescription closest (L2) to ``gamma_f``; first on ties."""
    stack = np.stack(lattice)
    d = ((stack - np.asarray(gamma_f)) ** 2).sum(axis=(1, 2))
    return int(np.argmin(d))


@dataclass
class StrategyTable:
    """Equilibrium prescriptions and values per stage and belief-grid point.

    Arrays indexed by stage t-1 (stage t runs 1..horizon) and grid index:
    ``leader_policy`` (T, N, A_l), ``follower_policy`` (T, N, X, A_f),
    ``value_leader`` (T, N), ``value_follower`` (T, N, X).
    """

    grid: BeliefGrid
    leader_policy: np.ndarray
    follower_policy: np.ndarray
    value_leader: np.ndarray
    value_follower: np.ndarray

    @property
    def horizon(self):
        return self.leader_policy.shape[0]

    @property
    def num_states(self):
        return self.follower_policy.shape[2]

    def prescription(self, t: int, grid_index: int) -> PrescriptionPair:
        """Prescription pair at 1-based stage ``t`` and grid point index."""
        return PrescriptionPair(
            self.leader_policy[t - 1, grid_index],
            self.follower_policy[t - 1, grid_index],
        )

    @classmethod
    def empty(cls, grid: BeliefGrid, horizon: int, num_leader_actions: int,
              num_follower_actions: int):
        n, x = len(grid), grid.num_states
        return cls(
            grid=grid,
            leader_policy=np.zeros((horizon, n, num_leader_actions)),
            follower_policy=np.zeros((horizon, n, x, num_follower_actions)),
            value_leader=np.zeros((horizon, n)),
            value_follower=np.zeros((horizon, n, x)),
        )


def strategy_columns(num_states, num_leader_actions, num_follower_actions):
    """Column names of the strategy CSV.

    Probability columns drop the first action (recoverable as one minus the
    rest) and the redundant last belief coordinate.
    """
    cols = ["t"]
    n_coords = max(num_states - 1, 1)
    cols += [f"belief_coord_{i}" for i in range(n_coords)]
    cols += [f"leader_prob_action{j}" for j in range(1, num_leader_actions)]
    for x in range(num_states):
        cols += [
            f"follower_prob_action{j}_given_x{x}"
            for j in range(1, num_follower_actions)
        ]
    cols += ["V_l"] + [f"V_f_x{x}" for x in range(num_states)]
    return cols


def strategy_to_csv(table: StrategyTable, path):
    """Write the per-belief policy curves and values, sorted by (t, grid index)."""
    T, N, Al = table.leader_policy.shape
    X, Af = table.follower_policy.shape[2:]
    header = strategy_columns(X, Al, Af)
    n_coords = max(X - 1, 1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(1, T + 1):
            for g in range(N):
                row = [t]
                row += [repr(c) for c in table.grid.points[g, :n_coords]]
                row += [repr(p) for p in table.leader_policy[t - 1, g, 1:]]
                for x in range(X):
                    row += [repr(p) for p in table.follower_policy[t - 1, g, x, 1:]]
                row.append(repr(table.value_leader[t - 1, g]))
                row += [repr(v) for v in table.value_follower[t - 1, g]]
                writer.writerow(row)


def strategy_from_csv(path) -> StrategyTable:
    """Rebuild a StrategyTable from its CSV export."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    X = sum(1 for c in header if re.fullmatch(r"V_f_x\d+", c))
    Al = sum(1 for c in header if c.startswith("leader_prob_action")) + 1
    per_state = sum(
        1 for c in header if re.fullmatch(r"follower_prob_action\d+_given_x0", c)
    )
    Af = per_state + 1
    n_coords = sum(1 for c in header if c.startswith("belief_coord_"))
    expected = strategy_columns(X, Al, Af)
    if header != expected:
        raise ValueError(f"unrecognized strategy CSV header: {header}")

    data = np.asarray([[float(v) for v in r] for r in rows])
    ts = data[:, 0].astype(int)
    T = ts.max()
    N = int((ts == 1).sum())
    if len(rows) != T * N:
        raise ValueError("strategy CSV rows do not form a full (t, grid) table")

    # recover full belief coordinates; resolution from the grid size
    coords = data[:N, 1:1 + n_coords]
    if X == 1:
        points = np.ones((N, 1))
    else:
        points = np.empty((N, X))
        points[:, : X - 1] = coords[:, : X - 1]
        points[:, X - 1] = 1.0 - coords[:, : X - 1].sum(axis=1)
    grid = BeliefGrid(X, N if X == 2 else _infer_resolution(N, X), points)

    table = StrategyTable.empty(grid, int(T), Al, Af)
    col = 1 + n_coords
    lp = data[:, col:col + Al - 1]
    col += Al - 1
    fp = data[:, col:col + X * (Af - 1)]
    col += X * (Af - 1)
    vl = data[:, col]
    vf = data[:, col + 1: col + 1 + X]
    for i in range(len(rows)):
        t, g = ts[i] - 1, i % N
        table.leader_policy[t, g, 1:] = lp[i]
        table.leader_policy[t, g, 0] = 1.0 - lp[i].sum()
        for x in range(X):
            row = fp[i, x * (Af - 1):(x + 1) * (Af - 1)]
            table.follower_policy[t, g, x, 1:] = row
            table.follower_policy[t, g, x, 0] = 1.0 - row.sum()
        table.value_leader[t, g] = vl[i]
        table.value_follower[t, g] = vf[i]
    return table


def _infer_resolution(num_points, num_states):
    # number of lattice points with resolution R is C(R-1+X-1, X-1)
    from math import comb

    r = 2
    while comb(r - 1 + num_states - 1, num_states - 1) < num_points:
        r += 1
    if comb(r - 1 + num_states - 1, num_states - 1) != num_points:
        raise ValueError(
            f"grid of {num_points} points is not a uniform lattice over "
            f"{num_states} states"
        )
    return r
