"""Bayesian predictor/filter recursions and filter-stability machinery."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import JointAction, ModelSpec, Quantizer, action_tables

BELIEF_SUM_TOL = 1e-12


class UnreachableSymbol(ValueError):
    """The belief assigns zero mass to the realized symbol's preimage."""


class AbsoluteContinuityError(ValueError):
    """supp(mu) is not contained in supp(nu)."""


def as_belief(probs) -> np.ndarray:
    """Validate and return a probability vector as a float64 array."""
    pi = np.asarray(probs, dtype=np.float64)
    if pi.ndim != 1:
        raise ValueError(f"belief must be a vector, got shape {pi.shape}")
    if np.any(pi < 0.0):
        raise ValueError("belief has negative entries")
    if abs(float(pi.sum()) - 1.0) > BELIEF_SUM_TOL:
        raise ValueError(f"belief sums to {pi.sum()}, not 1")
    return pi


def uniform_belief(n_states: int) -> np.ndarray:
    return np.full(n_states, 1.0 / n_states)


def point_mass(x: int, n_states: int) -> np.ndarray:
    pi = np.zeros(n_states)
    pi[x] = 1.0
    return pi


def _qmap_array(quantizer) -> np.ndarray:
    if isinstance(quantizer, Quantizer):
        return np.asarray(quantizer.map, dtype=np.int64)
    return np.asarray(quantizer, dtype=np.int64)


def channel_output_dist(pi, quantizer, n_symbols: int) -> np.ndarray:
    """Distribution of the channel symbol: entry q is pi(Q^{-1}(q))."""
    pi = np.asarray(pi, dtype=np.float64)
    qmap = _qmap_array(quantizer)
    out = np.zeros(n_symbols)
    for q in range(n_symbols):
        out[q] = kernels.symbol_mass(pi, qmap, q)
    return out


def filter_update(pi, quantizer, q: int) -> np.ndarray:
    """Condition the predictor on the received symbol (restrict + renormalize)."""
    pi = np.asarray(pi, dtype=np.float64)
    qmap = _qmap_array(quantizer)
    out = np.empty_like(pi)
    mass = kernels.filter_restrict(pi, qmap, q, out)
    if mass <= 0.0:
        raise UnreachableSymbol(f"symbol {q} has zero probability under the belief")
    return out


def predictor_update(pi, action: JointAction, q: int, spec: ModelSpec) -> np.ndarray:
    """One step of the predictor recursion F(pi, Q, eta, q).

    Equals the filter update followed by the kernel push-forward under the
    control picked for symbol q, exactly (it is computed that way).
    """
    pi = np.asarray(pi, dtype=np.float64)
    qmap = np.asarray(action.quantizer.map, dtype=np.int64)
    gmap = np.asarray(action.control.map, dtype=np.int64)
    tmp = np.empty_like(pi)
    out = np.empty_like(pi)
    mass = kernels.predictor_step(pi, qmap, gmap, spec.kernel, q, tmp, out)
    if mass <= 0.0:
        raise UnreachableSymbol(f"symbol {q} has zero probability under the belief")
    return out


def tv_distance(a, b) -> float:
    """Unnormalized total variation sum_i |a_i - b_i| (maximum 2)."""
    return float(
        kernels.tv_dist(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    )


def dobrushin(spec: ModelSpec, u: int) -> float:
    """Dobrushin coefficient of P(.|.,u): min over state pairs of row overlap."""
    kern = spec.kernel[u]
    n = spec.n_states
    best = np.inf
    for i in range(n):
        for k in range(i + 1, n):
            overlap = float(np.minimum(kern[i], kern[k]).sum())
            if overlap < best:
                best = overlap
    if n == 1:
        best = 1.0
    return best


@dataclass(frozen=True)
class StabilityReport:
    """Per-control Dobrushin coefficients and the geometric window bounds.

    loss_bound[N] = 2 * (2 (1 - delta_min))^N bounds the worst mean TV gap
    after N contraction steps; value_bound[N] = 2 ||c||_inf / (1-beta)^2 *
    (2 (1 - delta_min))^N is the window-policy performance envelope. Both are
    indexed by N = 0..max_N. When delta_min < 1/2 the contraction hypothesis
    fails and ``contraction_guaranteed`` is False.
    """

    delta_per_control: np.ndarray
    delta_min: float
    loss_bound_per_N: np.ndarray
    value_bound_per_N: np.ndarray
    contraction_guaranteed: bool

    def controls_csv_rows(self):
        rows = [("u", "delta")]
        rows += [(u, repr(float(d))) for u, d in enumerate(self.delta_per_control)]
        return rows

    def bounds_csv_rows(self):
        rows = [("N", "loss_bound", "value_bound")]
        rows += [
            (n, repr(float(l)), repr(float(v)))
            for n, (l, v) in enumerate(zip(self.loss_bound_per_N, self.value_bound_per_N))
        ]
        return rows


def stability_report(spec: ModelSpec, max_N: int) -> StabilityReport:
    """Dobrushin coefficients plus loss/value bounds for N = 0..max_N."""
    deltas = np.array([dobrushin(spec, u) for u in range(spec.n_controls)])
    delta_min = float(deltas.min())
    rate = 2.0 * (1.0 - delta_min)
    n_range = np.arange(max_N + 1)
    loss = 2.0 * rate**n_range
    value = (2.0 * spec.cost_sup / (1.0 - spec.beta) ** 2) * rate**n_range
    return StabilityReport(
        delta_per_control=deltas,
        delta_min=delta_min,
        loss_bound_per_N=loss,
        value_bound_per_N=value,
        contraction_guaranteed=delta_min >= 0.5,
    )


@dataclass(frozen=True)
class LossEstimate:
    """Monte-Carlo mean TV gap per step with standard errors."""

    mean: np.ndarray
    stderr: np.ndarray
    trials: int


def empirical_loss(
    spec: ModelSpec,
    mu,
    nu,
    trials: int,
    horizon: int,
    rng: np.random.Generator,
) -> LossEstimate:
    """Mean TV gap between predictor recursions started from mu and nu.

    Both recursions are driven by the same realized symbol/action path, with
    the true system started from mu and actions uniform (a sampled stand-in
    for the sup over window policies). Requires supp(mu) <= supp(nu).
    """
    mu = as_belief(mu)
    nu = as_belief(nu)
    if np.any((mu > 0.0) & (nu <= 0.0)):
        raise AbsoluteContinuityError("absolute continuity violated: supp(mu) not in supp(nu)")
    qmaps, gmaps = action_tables(spec)
    draws = rng.random(trials * (1 + 2 * horizon))
    gaps, status = kernels.empirical_tv_gaps(
        spec.kernel, qmaps, gmaps, mu, nu, trials, horizon, draws
    )
    if status != kernels.STATUS_OK:
        raise AbsoluteContinuityError(
            "wrong-prior recursion hit a zero-probability symbol"
        )
    mean = gaps.mean(axis=0)
    stderr = gaps.std(axis=0, ddof=1) / np.sqrt(trials) if trials > 1 else np.zeros_like(mean)
    return LossEstimate(mean=mean, stderr=stderr, trials=trials)
