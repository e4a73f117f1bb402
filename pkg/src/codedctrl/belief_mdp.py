"""The equivalent controlled-predictor MDP and its belief-simplex grid."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from . import kernels
from .filtering import UnreachableSymbol
from .model import JointAction, ModelSpec, categorical

DEFAULT_GRID_CAP = 2_000_000


class GridTooLarge(RuntimeError):
    """Grid point count exceeds the configured cap."""


class BeliefDesync(RuntimeError):
    """The coupled environment's true state left the belief's support."""


def effective_cost(pi, action: JointAction, spec: ModelSpec) -> float:
    """Expected stage cost under the belief: sum_x pi(x) c(x, g(Q(x)))."""
    return float(
        kernels.effective_cost_k(
            np.asarray(pi, dtype=np.float64),
            np.asarray(action.quantizer.map, dtype=np.int64),
            np.asarray(action.control.map, dtype=np.int64),
            spec.cost,
        )
    )


@dataclass(frozen=True)
class EnvState:
    """True source state coupled with the encoder/controller predictor."""

    x: int
    pi: np.ndarray


def env_step(
    state: EnvState,
    action: JointAction,
    spec: ModelSpec,
    rng: np.random.Generator,
    realized_cost: bool = False,
):
    """Advance the coupled source-plus-predictor environment one step.

    Returns (next_state, q, u, stage_cost). The stage cost defaults to the
    analytic effective cost; ``realized_cost`` switches to c(x, u) for
    sensitivity studies.
    """
    pi = np.asarray(state.pi, dtype=np.float64)
    if pi[state.x] <= 0.0:
        raise BeliefDesync(f"true state {state.x} outside the belief support")
    q = action.quantizer(state.x)
    u = action.control(q)
    if realized_cost:
        stage = float(spec.cost[state.x, u])
    else:
        stage = effective_cost(pi, action, spec)
    qmap = np.asarray(action.quantizer.map, dtype=np.int64)
    gmap = np.asarray(action.control.map, dtype=np.int64)
    tmp = np.empty_like(pi)
    out = np.empty_like(pi)
    mass = kernels.predictor_step(pi, qmap, gmap, spec.kernel, q, tmp, out)
    if mass <= 0.0:
        raise UnreachableSymbol(f"symbol {q} has zero probability under the belief")
    x_next = categorical(spec.kernel[u, state.x], rng.random())
    return EnvState(x=x_next, pi=out), q, u, stage


@dataclass(frozen=True)
class BeliefGrid:
    """Type-(k_i / n) lattice on the probability simplex, canonically ordered.

    Points are all compositions (k_1,...,k_S) of n with sum k_i = n, scaled
    by 1/n, sorted lexicographically ascending by coordinates.
    """

    n: int
    points: np.ndarray

    def __len__(self):
        return len(self.points)

    def csv_rows(self):
        header = ("index",) + tuple(f"p{s}" for s in range(self.points.shape[1]))
        rows = [header]
        for i, p in enumerate(self.points):
            rows.append((i,) + tuple(repr(float(c)) for c in p))
        return rows


def grid_size(n: int, n_states: int) -> int:
    return comb(n + n_states - 1, n_states - 1)


def build_grid(n: int, n_states: int, cap: int = DEFAULT_GRID_CAP) -> BeliefGrid:
    """All beliefs with coordinates k_i/n, in canonical lexicographic order."""
    if n < 1:
        raise ValueError("grid resolution must be >= 1")
    count = grid_size(n, n_states)
    if count > cap:
        raise GridTooLarge(f"grid has {count} points > cap {cap}")
    points = np.empty((count, n_states))
    # stars-and-bars: bar positions in increasing order enumerate the
    # compositions in lexicographic coordinate order
    for i, bars in enumerate(combinations(range(n + n_states - 1), n_states - 1)):
        prev = -1
        total = 0
        for s, b in enumerate(bars):
            points[i, s] = b - prev - 1
            prev = b
            total += points[i, s]
        points[i, n_states - 1] = n - total
    points /= n
    return BeliefGrid(n=n, points=points)


def nearest_grid(pi, grid: BeliefGrid) -> int:
    """Index of an L1-nearest grid point; ties go to the lowest index."""
    return int(kernels.nearest_grid_k(np.asarray(pi, dtype=np.float64), grid.points))
