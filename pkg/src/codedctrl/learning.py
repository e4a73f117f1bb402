"""Tabular asynchronous Q-learning with visit-count rates and uniform exploration.

One engine, two instantiations: the grid-keyed predictor MDP (the exact
belief recursion runs at full precision, only the table key is quantized)
and the sliding-window MDP. Exploration is pure uniform i.i.d. over joint
actions; exploiting during learning would void the ergodicity argument the
convergence results rest on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .backend import make_int_map
from .belief_mdp import DEFAULT_GRID_CAP, build_grid
from .filtering import as_belief, uniform_belief
from .io_utils import write_json
from .model import DEFAULT_ACTION_CAP, ModelSpec, action_tables
from .oracle import stationary_of_matrix
from .seeding import STREAM_LEARN, seeded_rng


@dataclass
class QTable:
    """Q-factors and visit counts keyed by (state key, action index).

    Rows follow registration order; ``keys[row]`` maps back to the state key
    (grid index for the quantized scheme, packed window key otherwise).
    Unseen pairs read as q=0, visits=0, matching the all-zero initialization.
    """

    scheme: str
    param: int
    model_hash: str
    n_actions: int
    keys: np.ndarray
    q: np.ndarray
    visits: np.ndarray
    mu: np.ndarray | None = None
    key_to_row: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.key_to_row:
            self.key_to_row = {int(k): r for r, k in enumerate(self.keys)}

    @property
    def n_rows(self):
        return len(self.keys)

    def value(self, state_key: int, action: int) -> float:
        row = self.key_to_row.get(int(state_key))
        return 0.0 if row is None else float(self.q[row, action])

    def visit_count(self, state_key: int, action: int) -> int:
        row = self.key_to_row.get(int(state_key))
        return 0 if row is None else int(self.visits[row, action])

    def visited_state_keys(self):
        mask = self.visits.sum(axis=1) > 0
        return [int(k) for k, m in zip(self.keys, mask) if m]

    def entries(self):
        """Visited (state_key, action, q, visits) tuples, sorted for determinism."""
        out = []
        for row, key in enumerate(self.keys):
            for a in range(self.n_actions):
                if self.visits[row, a] > 0:
                    out.append((int(key), a, float(self.q[row, a]), int(self.visits[row, a])))
        out.sort(key=lambda e: (e[0], e[1]))
        return out

    def _ensure_row(self, state_key: int) -> int:
        row = self.key_to_row.get(int(state_key))
        if row is None:
            row = self.n_rows
            self.key_to_row[int(state_key)] = row
            self.keys = np.append(self.keys, np.int64(state_key))
            self.q = np.vstack([self.q, np.zeros((1, self.n_actions))])
            self.visits = np.vstack([self.visits, np.zeros((1, self.n_actions), dtype=np.int64)])
        return row

    def to_json_dict(self):
        return {
            "scheme": self.scheme,
            "param": self.param,
            "model_hash": self.model_hash,
            "n_actions": self.n_actions,
            "mu": None if self.mu is None else [float(v) for v in self.mu],
            "entries": [
                {"state_key": k, "action": a, "q": q, "visits": v}
                for k, a, q, v in self.entries()
            ],
        }

    @classmethod
    def from_json_dict(cls, data):
        keys = sorted({e["state_key"] for e in data["entries"]})
        key_to_row = {k: r for r, k in enumerate(keys)}
        n_act = int(data["n_actions"])
        q = np.zeros((len(keys), n_act))
        visits = np.zeros((len(keys), n_act), dtype=np.int64)
        for e in data["entries"]:
            row = key_to_row[e["state_key"]]
            q[row, e["action"]] = e["q"]
            visits[row, e["action"]] = e["visits"]
        mu = data.get("mu")
        return cls(
            scheme=data["scheme"],
            param=int(data["param"]),
            model_hash=data["model_hash"],
            n_actions=n_act,
            keys=np.array(keys, dtype=np.int64),
            q=q,
            visits=visits,
            mu=None if mu is None else np.asarray(mu, dtype=np.float64),
            key_to_row=key_to_row,
        )


def new_qtable(scheme, param, model_hash, n_actions, keys=(), mu=None) -> QTable:
    keys = np.asarray(list(keys), dtype=np.int64)
    return QTable(
        scheme=scheme,
        param=param,
        model_hash=model_hash,
        n_actions=n_actions,
        keys=keys,
        q=np.zeros((len(keys), n_actions)),
        visits=np.zeros((len(keys), n_actions), dtype=np.int64),
        mu=mu,
    )


def q_update(table: QTable, s, a: int, cost: float, s_next, beta: float) -> QTable:
    """One tabular update with the visit-count rate 1/(1 + visits(s,a)).

    The bootstrap minimum ranges over every action at s_next, with unseen
    entries reading 0. Only the (s, a) cell changes.
    """
    row = table._ensure_row(s)
    next_row = table.key_to_row.get(int(s_next))
    boot = 0.0 if next_row is None else float(table.q[next_row].min())
    n = int(table.visits[row, a])
    alpha = 1.0 / (1.0 + n)
    table.q[row, a] += alpha * (cost + beta * boot - table.q[row, a])
    table.visits[row, a] = n + 1
    return table


@dataclass
class Policy:
    """Deterministic state-key -> action-index map with a fallback action."""

    scheme: str
    param: int
    model_hash: str
    fallback: int
    actions: dict
    mu: np.ndarray | None = None

    def action_for(self, state_key: int) -> int:
        return self.actions.get(int(state_key), self.fallback)

    def grid_array(self, n_points: int) -> np.ndarray:
        """Dense per-grid-index action array (quantized scheme)."""
        arr = np.full(n_points, self.fallback, dtype=np.int64)
        for k, a in self.actions.items():
            arr[k] = a
        return arr

    def sorted_arrays(self):
        """(sorted keys, matching actions) for binary-search lookup."""
        keys = np.array(sorted(self.actions), dtype=np.int64)
        acts = np.array([self.actions[int(k)] for k in keys], dtype=np.int64)
        return keys, acts

    def to_json_dict(self):
        return {
            "scheme": self.scheme,
            "param": self.param,
            "model_hash": self.model_hash,
            "fallback": self.fallback,
            "mu": None if self.mu is None else [float(v) for v in self.mu],
            "entries": [
                {"state_key": int(k), "action": int(self.actions[k])}
                for k in sorted(self.actions)
            ],
        }

    @classmethod
    def from_json_dict(cls, data):
        mu = data.get("mu")
        return cls(
            scheme=data["scheme"],
            param=int(data["param"]),
            model_hash=data["model_hash"],
            fallback=int(data["fallback"]),
            actions={int(e["state_key"]): int(e["action"]) for e in data["entries"]},
            mu=None if mu is None else np.asarray(mu, dtype=np.float64),
        )


def save_json(obj, path):
    write_json(path, obj.to_json_dict())


def load_qtable(path) -> QTable:
    with open(path) as fh:
        return QTable.from_json_dict(json.load(fh))


def load_policy(path) -> Policy:
    with open(path) as fh:
        return Policy.from_json_dict(json.load(fh))


def extract_policy(table: QTable, fallback: int = 0) -> Policy:
    """Greedy argmin per visited state; ties break to the lowest action index."""
    actions = {}
    for row, key in enumerate(table.keys):
        if table.visits[row].sum() > 0:
            actions[int(key)] = int(np.argmin(table.q[row]))
    return Policy(
        scheme=table.scheme,
        param=table.param,
        model_hash=table.model_hash,
        fallback=fallback,
        actions=actions,
        mu=table.mu,
    )


@dataclass
class EmpiricalModel:
    """Visit-weighted cost means and transition frequencies from one trajectory.

    Rows are aligned with the QTable produced by the same run. ``trans``
    maps (row * n_actions + action) << 32 | next_row to a count.
    """

    beta: float
    n_actions: int
    cost_sums: np.ndarray
    visits: np.ndarray
    trans: dict


def dcoe_residual(table: QTable, model: EmpiricalModel) -> float:
    """Max Bellman defect of the table against the empirical (c*, P*)."""
    trans = model.trans
    if isinstance(trans, dict):  # hand-built models; kernels need a typed map
        typed = make_int_map()
        for key in sorted(trans):
            typed[np.int64(key)] = np.int64(trans[key])
        trans = typed
    return float(
        kernels.dcoe_residual_k(
            table.q, model.visits, model.cost_sums, trans, model.beta, table.n_rows
        )
    )


@dataclass
class LearnConfig:
    """Knobs for one training run; exactly one of resolution/window is set.

    checkpoint_every=None scales the telemetry cadence with run length
    (max(10^4, iterations // 100)); the residual checkpoint scans the whole
    transition table, so a fixed fine cadence would dominate very long runs.
    """

    scheme: str
    resolution: int | None = None
    window: int | None = None
    iterations: int = 1_000_000
    seed: int = 0
    convergence_window: int = 10_000
    tolerance: float = 1e-10
    checkpoint_every: int | None = None
    mu: np.ndarray | None = None
    fixed_quantizer: tuple | None = None
    action_cap: int = DEFAULT_ACTION_CAP
    grid_cap: int = DEFAULT_GRID_CAP

    def validate(self):
        if self.scheme not in ("quantized", "window"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be > 0")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if self.scheme == "quantized":
            if self.resolution is None or self.resolution < 1:
                raise ValueError("quantized scheme needs resolution n >= 1")
        else:
            if self.window is None or self.window < 1:
                raise ValueError("window scheme needs window length N >= 1")

    @property
    def param(self):
        return self.resolution if self.scheme == "quantized" else self.window

    @property
    def checkpoint_cadence(self) -> int:
        if self.checkpoint_every is not None:
            return self.checkpoint_every
        return max(10_000, self.iterations // 100)


@dataclass
class Diagnostics:
    """Training-run telemetry: curve rows are (iteration, max_q_change,
    visited_states, residual) at checkpoint spacing plus the final state."""

    iterations_run: int
    visited_states: int
    early_stopped: bool
    curve: list
    final_residual: float
    empirical_model: EmpiricalModel
    reseed_events: int = 0
    notes: tuple = ()


def _curve_rows(curve_iter, curve_maxdq, curve_visited, curve_resid, n_curve):
    return [
        (int(curve_iter[i]), float(curve_maxdq[i]), int(curve_visited[i]), float(curve_resid[i]))
        for i in range(n_curve)
    ]


def run_quantized_qlearning(spec: ModelSpec, config: LearnConfig):
    """Q-learning over the grid-keyed predictor MDP with uniform exploration.

    Initialization follows the paper's simulation protocol: a uniformly drawn
    control u0 picks the invariant distribution of P(.|.,u0) as pi0, and
    x0 ~ pi0. Returns (QTable, Policy, Diagnostics).
    """
    config.validate()
    if config.scheme != "quantized":
        raise ValueError("config.scheme must be 'quantized'")
    qmaps, gmaps = action_tables(
        spec, cap=config.action_cap, fixed_quantizer=config.fixed_quantizer
    )
    grid = build_grid(config.resolution, spec.n_states, cap=config.grid_cap)
    n_act = len(qmaps)

    rng = seeded_rng(config.seed, STREAM_LEARN)
    draws = rng.random(2 + 2 * config.iterations)
    u0 = kernels.uniform_index(draws[0], spec.n_controls)
    notes = []
    pi0 = stationary_of_matrix(spec.kernel[u0])
    if pi0 is None:
        pi0 = uniform_belief(spec.n_states)
        notes.append(f"kernel for control {u0} not primitive; pi0 set to uniform")
    x0 = kernels.categorical_k(pi0, draws[1])

    trans = make_int_map()
    (
        q_table,
        visits,
        cost_sums,
        curve_iter,
        curve_maxdq,
        curve_visited,
        curve_resid,
        n_curve,
        stop_iter,
        n_seen,
        status,
    ) = kernels.quantized_qlearn(
        spec.kernel,
        spec.cost,
        spec.beta,
        qmaps,
        gmaps,
        grid.points,
        pi0,
        x0,
        draws[2:],
        config.iterations,
        config.convergence_window,
        config.tolerance,
        config.checkpoint_cadence,
        trans,
    )
    if status == kernels.STATUS_DESYNC:
        raise RuntimeError("belief desync during training (corrupted coupling)")

    table = QTable(
        scheme="quantized",
        param=config.resolution,
        model_hash=spec.model_hash(),
        n_actions=n_act,
        keys=np.arange(len(grid), dtype=np.int64),
        q=np.array(q_table),
        visits=np.array(visits),
    )
    model = EmpiricalModel(
        beta=spec.beta,
        n_actions=n_act,
        cost_sums=np.array(cost_sums),
        visits=np.array(visits),
        trans=trans,
    )
    curve = _curve_rows(curve_iter, curve_maxdq, curve_visited, curve_resid, n_curve)
    diag = Diagnostics(
        iterations_run=int(stop_iter),
        visited_states=int(n_seen),
        early_stopped=int(stop_iter) < config.iterations,
        curve=curve,
        final_residual=curve[-1][3] if curve else float("nan"),
        empirical_model=model,
        notes=tuple(notes),
    )
    return table, extract_policy(table), diag


def run_window_qlearning(spec: ModelSpec, config: LearnConfig):
    """Q-learning over the sliding-window MDP (lazy state registration).

    The source starts at state 0 and the first N actions are uniform, per the
    paper's warm-up protocol. Returns (QTable, Policy, Diagnostics).
    """
    config.validate()
    if config.scheme != "window":
        raise ValueError("config.scheme must be 'window'")
    qmaps, gmaps = action_tables(
        spec, cap=config.action_cap, fixed_quantizer=config.fixed_quantizer
    )
    n_act = len(qmaps)
    win_len = config.window
    base = spec.n_symbols * n_act
    if base**win_len > 1 << 62:
        raise ValueError(f"window key base {base}^{win_len} overflows the int64 key space")
    mu = as_belief(config.mu) if config.mu is not None else uniform_belief(spec.n_states)

    rng = seeded_rng(config.seed, STREAM_LEARN)
    draws = rng.random(2 * win_len + 2 * config.iterations)
    capacity = min(base**win_len, config.iterations + 2)

    registry = make_int_map()
    trans = make_int_map()
    (
        q_table,
        visits,
        cost_sums,
        beliefs,
        row_keys,
        n_rows,
        curve_iter,
        curve_maxdq,
        curve_visited,
        curve_resid,
        n_curve,
        stop_iter,
        reseed_events,
        status,
    ) = kernels.window_qlearn(
        spec.kernel,
        spec.cost,
        spec.beta,
        qmaps,
        gmaps,
        spec.n_symbols,
        mu,
        win_len,
        0,
        draws,
        config.iterations,
        config.convergence_window,
        config.tolerance,
        config.checkpoint_cadence,
        registry,
        trans,
        capacity,
    )
    if status != kernels.STATUS_OK:
        raise RuntimeError("window training failed with status %d" % status)

    table = QTable(
        scheme="window",
        param=win_len,
        model_hash=spec.model_hash(),
        n_actions=n_act,
        keys=np.array(row_keys[:n_rows]),
        q=np.array(q_table[:n_rows]),
        visits=np.array(visits[:n_rows]),
        mu=mu,
    )
    model = EmpiricalModel(
        beta=spec.beta,
        n_actions=n_act,
        cost_sums=np.array(cost_sums[:n_rows]),
        visits=np.array(visits[:n_rows]),
        trans=trans,
    )
    curve = _curve_rows(curve_iter, curve_maxdq, curve_visited, curve_resid, n_curve)
    diag = Diagnostics(
        iterations_run=int(stop_iter),
        visited_states=int(n_rows),
        early_stopped=int(stop_iter) < config.iterations,
        curve=curve,
        final_residual=curve[-1][3] if curve else float("nan"),
        empirical_model=model,
        reseed_events=int(reseed_events),
    )
    return table, extract_policy(table), diag
