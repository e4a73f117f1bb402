"""Sliding finite-window states: the psi roll-forward map and the window MDP.

A window state is a fixed prior plus the last N (symbol, action) pairs. Its
integer key packs the history oldest-to-newest in base |M|*|A|, each step
contributing the digit symbol * |A| + action_index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .filtering import as_belief
from .model import (
    JointAction,
    ModelSpec,
    action_from_index,
    action_tables,
    categorical,
    n_actions,
)


class InfeasibleHistory(ValueError):
    """A window history step hits a zero-probability symbol under the prior."""


@dataclass(frozen=True)
class WindowState:
    """Fixed prior plus the last N (symbol, action index) pairs, oldest first."""

    mu: np.ndarray
    history: tuple

    def __len__(self):
        return len(self.history)


def initial_window(mu, history=()) -> WindowState:
    return WindowState(mu=as_belief(mu), history=tuple(history))


def key_base(spec: ModelSpec) -> int:
    return spec.n_symbols * n_actions(spec)


def encode_window(state: WindowState, spec: ModelSpec) -> int:
    """Pack the history into the canonical integer key."""
    base = key_base(spec)
    acts = n_actions(spec)
    key = 0
    for q, a in state.history:
        key = key * base + (q * acts + a)
    return key


def decode_window(key: int, win_len: int, mu, spec: ModelSpec) -> WindowState:
    """Inverse of encode_window for a known window length."""
    base = key_base(spec)
    acts = n_actions(spec)
    digits = []
    for _ in range(win_len):
        digits.append(key % base)
        key //= base
    history = tuple((d // acts, d % acts) for d in reversed(digits))
    return WindowState(mu=as_belief(mu), history=history)


def window_shift(state: WindowState, action: JointAction, q: int) -> WindowState:
    """Drop the oldest pair and append (q, action); the prior is unchanged."""
    if len(state.history) == 0:
        return state
    return WindowState(mu=state.mu, history=state.history[1:] + ((q, action.index),))


def psi(state: WindowState, spec: ModelSpec) -> np.ndarray:
    """Roll the prior forward through the whole history (N predictor updates).

    Raises InfeasibleHistory when a step's symbol has zero probability under
    the rolled belief; the simulation path (window_env_step) instead applies
    the re-seed fallback.
    """
    pi = np.array(state.mu, dtype=np.float64)
    tmp = np.empty_like(pi)
    out = np.empty_like(pi)
    for step, (q, a) in enumerate(state.history):
        action = action_from_index(spec, a)
        qmap = np.asarray(action.quantizer.map, dtype=np.int64)
        gmap = np.asarray(action.control.map, dtype=np.int64)
        mass = kernels.predictor_step(pi, qmap, gmap, spec.kernel, q, tmp, out)
        if mass <= 0.0:
            raise InfeasibleHistory(f"history step {step}: symbol {q} has zero probability")
        pi, out = out, pi
    return pi


def psi_total(state: WindowState, spec: ModelSpec):
    """psi with the re-seed fallback; returns (belief, reseed_event_count)."""
    qmaps, gmaps = action_tables(spec)
    key = encode_window(state, spec)
    out = np.empty(spec.n_states)
    buf_a = np.empty(spec.n_states)
    buf_b = np.empty(spec.n_states)
    events = kernels.psi_from_key(
        np.int64(key),
        len(state.history),
        np.int64(key_base(spec)),
        qmaps,
        gmaps,
        spec.kernel,
        state.mu,
        out,
        buf_a,
        buf_b,
    )
    return out, int(events)


def window_env_step(
    x: int,
    state: WindowState,
    action: JointAction,
    spec: ModelSpec,
    rng: np.random.Generator,
):
    """One step of the finite-window environment driven by the true state.

    The symbol comes from the real source state; the stage cost is the
    effective cost at the approximate belief psi(state). Returns
    (x_next, next_state, q, u, stage_cost, reseed_events).
    """
    pi_hat, events = psi_total(state, spec)
    q = action.quantizer(x)
    u = action.control(q)
    stage = float(
        kernels.effective_cost_k(
            pi_hat,
            np.asarray(action.quantizer.map, dtype=np.int64),
            np.asarray(action.control.map, dtype=np.int64),
            spec.cost,
        )
    )
    x_next = categorical(spec.kernel[u, x], rng.random())
    return x_next, window_shift(state, action, q), q, u, stage, events
