"""Independent ground truth: exact trees, grid value iteration, Monte Carlo.

These evaluators validate the learners instead of depending on them; they
share only the low-level belief recursion kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .belief_mdp import BeliefGrid, build_grid
from .model import DEFAULT_ACTION_CAP, ModelSpec, action_tables
from .seeding import STREAM_EVAL, seeded_rng

DEFAULT_NODE_CAP = 5_000_000
DEFAULT_HORIZON = 1000
DEFAULT_REPLICATIONS = 1000
POWER_ITER_TOL = 1e-12
POWER_ITER_MAX = 1_000_000


class TreeTooLarge(RuntimeError):
    """A branching-tree level exceeded the configured node cap."""


class IncompatiblePolicy(ValueError):
    """Policy scheme or model hash does not match the requested evaluation."""


def _is_primitive(matrix) -> bool:
    """Irreducible + aperiodic check via the Wielandt power bound."""
    n = matrix.shape[0]
    reach = matrix > 0.0
    if reach.all():
        return True
    step = matrix > 0.0
    for _ in range((n - 1) * (n - 1) + 1):
        step = (step.astype(np.int64) @ (matrix > 0.0).astype(np.int64)) > 0
        if step.all():
            return True
    return False


def stationary_of_matrix(matrix) -> np.ndarray | None:
    """Invariant distribution of one row-stochastic matrix, or None if it is
    not irreducible and aperiodic. Power iteration to 1e-12 residual."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if not _is_primitive(matrix):
        return None
    n = matrix.shape[0]
    pi = np.full(n, 1.0 / n)
    for _ in range(POWER_ITER_MAX):
        nxt = pi @ matrix
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() < POWER_ITER_TOL:
            return nxt
        pi = nxt
    return pi


def stationary_distribution(spec: ModelSpec) -> np.ndarray:
    """Invariant distribution of the uniform-action-averaged kernel.

    Under uniform random joint actions the applied control is uniform given
    the state, so the source follows the control-averaged kernel.
    """
    averaged = spec.kernel.mean(axis=0)
    pi = stationary_of_matrix(averaged)
    if pi is None:
        raise ValueError("kernel not irreducible/aperiodic under uniform actions")
    return pi


@dataclass(frozen=True)
class EvalResult:
    mean: float
    stderr: float
    replications: int
    horizon: int


@dataclass(frozen=True)
class ValueFunction:
    """Fixed point of the grid-model Bellman operator plus its greedy policy.

    ``deltas`` holds the sup-norm change of each sweep (geometric with
    ratio <= beta).
    """

    values: np.ndarray
    policy: np.ndarray
    sweeps: int
    deltas: np.ndarray

    def csv_rows(self):
        rows = [("state_key", "value", "greedy_action")]
        for i, (v, a) in enumerate(zip(self.values, self.policy)):
            rows.append((i, repr(float(v)), int(a)))
        return rows


def _check_policy(policy, spec: ModelSpec, scheme=None):
    if scheme is not None and policy.scheme != scheme:
        raise IncompatiblePolicy(f"expected a {scheme} policy, got {policy.scheme}")
    if policy.scheme not in ("quantized", "window"):
        raise IncompatiblePolicy(f"unknown policy scheme {policy.scheme!r}")
    if policy.model_hash and policy.model_hash != spec.model_hash():
        raise IncompatiblePolicy("policy was trained on a different model")


def recurrent_prior(spec: ModelSpec, x: int = 0, u: int = 0) -> np.ndarray:
    """The canonical recurrent predictor P(.|x,u): a kernel row."""
    return np.array(spec.kernel[u, x])


def monte_carlo_cost(
    policy,
    spec: ModelSpec,
    horizon: int = DEFAULT_HORIZON,
    replications: int = DEFAULT_REPLICATIONS,
    seed: int = 0,
    x_init: int = 0,
    action_cap: int = DEFAULT_ACTION_CAP,
) -> EvalResult:
    """Sample mean/stderr of the discounted cost under a learned policy.

    Quantized policies start from the canonical recurrent predictor with
    x0 ~ pi0; window policies start at the known state ``x_init`` with a
    uniformly random warm-up, matching training. Replication r consumes its
    draws consecutively from the stream seeded by (seed, eval).
    """
    _check_policy(policy, spec)
    qmaps, gmaps = action_tables(spec, cap=action_cap)
    rng = seeded_rng(seed, STREAM_EVAL)
    if policy.scheme == "quantized":
        grid = build_grid(policy.param, spec.n_states)
        actions = policy.grid_array(len(grid))
        draws = rng.random(replications * (1 + horizon))
        costs, status = kernels.mc_eval_quantized(
            spec.kernel,
            spec.cost,
            spec.beta,
            qmaps,
            gmaps,
            grid.points,
            actions,
            recurrent_prior(spec),
            horizon,
            replications,
            draws,
        )
    else:
        keys, acts = policy.sorted_arrays()
        draws = rng.random(replications * (2 * policy.param + horizon))
        costs, status = kernels.mc_eval_window(
            spec.kernel,
            spec.cost,
            spec.beta,
            qmaps,
            gmaps,
            spec.n_symbols,
            keys,
            acts,
            policy.fallback,
            policy.param,
            x_init,
            horizon,
            replications,
            draws,
        )
    if status != kernels.STATUS_OK:
        raise RuntimeError("belief desync during evaluation (corrupted coupling)")
    mean = float(costs.mean())
    stderr = float(costs.std(ddof=1) / np.sqrt(replications)) if replications > 1 else 0.0
    return EvalResult(mean=mean, stderr=stderr, replications=replications, horizon=horizon)


def exact_discounted_cost(
    policy,
    pi0,
    spec: ModelSpec,
    horizon: int,
    node_cap: int = DEFAULT_NODE_CAP,
    action_cap: int = DEFAULT_ACTION_CAP,
):
    """Exhaustive expected discounted cost over all symbol branches.

    For window policies pi0 is the law of x_{-N} and the warm-up's uniform
    actions are averaged exactly. Returns (value, tail_bound) with
    tail_bound = beta^T ||c||_inf / (1 - beta).
    """
    _check_policy(policy, spec)
    pi0 = np.asarray(pi0, dtype=np.float64)
    qmaps, gmaps = action_tables(spec, cap=action_cap)
    if policy.scheme == "quantized":
        grid = build_grid(policy.param, spec.n_states)
        actions = policy.grid_array(len(grid))
        value, status, _ = kernels.exact_tree_quantized(
            spec.kernel,
            spec.cost,
            spec.beta,
            qmaps,
            gmaps,
            spec.n_symbols,
            grid.points,
            actions,
            pi0,
            horizon,
            node_cap,
        )
    else:
        keys, acts = policy.sorted_arrays()
        value, status, _ = kernels.exact_tree_window(
            spec.kernel,
            spec.cost,
            spec.beta,
            qmaps,
            gmaps,
            spec.n_symbols,
            keys,
            acts,
            policy.fallback,
            policy.param,
            pi0,
            horizon,
            node_cap,
        )
    if status == kernels.STATUS_TREE_TOO_LARGE:
        raise TreeTooLarge(f"tree too large for node cap {node_cap}")
    tail = spec.beta**horizon * spec.cost_sup / (1.0 - spec.beta)
    return float(value), float(tail)


def value_iterate_grid(
    grid: BeliefGrid,
    spec: ModelSpec,
    tol: float = 1e-9,
    action_cap: int = DEFAULT_ACTION_CAP,
    max_sweeps: int = 100_000,
) -> ValueFunction:
    """Value iteration on the finite grid model with representative-point
    successors: from grid point pi and action a, symbol q occurs with mass
    pi(Q^{-1}(q)) and lands on the grid point nearest to F(pi, a, q).

    Sweeps until the sup-norm change drops below tol * (1 - beta) / (2 beta),
    which converts to a true optimality gap of tol for the greedy policy.
    """
    qmaps, gmaps = action_tables(spec, cap=action_cap)
    n_points = len(grid)
    n_act = len(qmaps)
    n_sym = spec.n_symbols

    stage = np.empty((n_points, n_act))
    succ = np.zeros((n_points, n_act, n_sym), dtype=np.int64)
    prob = np.zeros((n_points, n_act, n_sym))
    tmp = np.empty(spec.n_states)
    out = np.empty(spec.n_states)
    for g in range(n_points):
        pi = grid.points[g]
        for a in range(n_act):
            stage[g, a] = kernels.effective_cost_k(pi, qmaps[a], gmaps[a], spec.cost)
            for q in range(n_sym):
                mass = kernels.predictor_step(
                    pi, qmaps[a], gmaps[a], spec.kernel, q, tmp, out
                )
                if mass > 0.0:
                    prob[g, a, q] = mass
                    succ[g, a, q] = kernels.nearest_grid_k(out, grid.points)

    threshold = tol * (1.0 - spec.beta) / (2.0 * spec.beta)
    values = np.zeros(n_points)
    sweeps = 0
    deltas = []
    while sweeps < max_sweeps:
        lookahead = stage + spec.beta * (prob * values[succ]).sum(axis=2)
        new_values = lookahead.min(axis=1)
        sweeps += 1
        change = np.abs(new_values - values).max()
        deltas.append(change)
        values = new_values
        if change < threshold:
            break
    lookahead = stage + spec.beta * (prob * values[succ]).sum(axis=2)
    greedy = lookahead.argmin(axis=1).astype(np.int64)
    return ValueFunction(values=values, policy=greedy, sweeps=sweeps, deltas=np.array(deltas))
