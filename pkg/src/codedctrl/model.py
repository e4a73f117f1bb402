"""Finite source/control/channel model: spaces, kernels, costs, actions.

All index spaces (states, symbols, controls, actions) are canonical 0-based
integer ranges; every serialization and tie-break uses them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

ROW_SUM_TOL = 1e-12
DEFAULT_ACTION_CAP = 100_000


class ModelValidationError(ValueError):
    """Raised when a model file or spec violates its invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ActionSpaceTooLarge(RuntimeError):
    """Action space too large: |M|^|X| * |U|^|M| exceeds the configured cap."""


@dataclass(frozen=True)
class ModelSpec:
    """Controlled Markov source with a rate-limited noiseless channel.

    kernel has shape (n_controls, n_states, n_states), row-stochastic in the
    last axis; cost has shape (n_states, n_controls), nonnegative.
    """

    n_states: int
    n_controls: int
    n_symbols: int
    kernel: np.ndarray
    cost: np.ndarray
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "kernel", np.asarray(self.kernel, dtype=np.float64))
        object.__setattr__(self, "cost", np.asarray(self.cost, dtype=np.float64))
        self.kernel.setflags(write=False)
        self.cost.setflags(write=False)

    @property
    def cost_sup(self) -> float:
        return float(self.cost.max())

    @property
    def value_cap(self) -> float:
        """Largest attainable discounted value, ||c||_inf / (1 - beta)."""
        return self.cost_sup / (1.0 - self.beta)

    def model_hash(self) -> str:
        payload = json.dumps(
            {
                "n_states": self.n_states,
                "n_controls": self.n_controls,
                "n_symbols": self.n_symbols,
                "beta": self.beta,
                "kernel": self.kernel.tolist(),
                "cost": self.cost.tolist(),
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Quantizer:
    """Map from source states to channel symbols; stored as an int array."""

    map: tuple

    def __call__(self, x: int) -> int:
        return self.map[x]

    def preimage(self, q: int):
        return tuple(x for x, m in enumerate(self.map) if m == q)


@dataclass(frozen=True)
class ControlMap:
    """Map from received symbols to control actions."""

    map: tuple

    def __call__(self, q: int) -> int:
        return self.map[q]


@dataclass(frozen=True)
class JointAction:
    """A quantizer paired with a symbol-to-control map; one channel use."""

    index: int
    quantizer: Quantizer
    control: ControlMap


def validate_model(spec: ModelSpec):
    """Return a list of invariant violations (empty iff the spec is valid)."""
    v = []
    for name, size in (
        ("n_states", spec.n_states),
        ("n_controls", spec.n_controls),
        ("n_symbols", spec.n_symbols),
    ):
        if int(size) < 1:
            v.append(f"{name} must be >= 1, got {size}")
    if v:
        return v
    if spec.kernel.shape != (spec.n_controls, spec.n_states, spec.n_states):
        v.append(
            f"kernel shape {spec.kernel.shape} != "
            f"({spec.n_controls}, {spec.n_states}, {spec.n_states})"
        )
    if spec.cost.shape != (spec.n_states, spec.n_controls):
        v.append(f"cost shape {spec.cost.shape} != ({spec.n_states}, {spec.n_controls})")
    if v:
        return v
    for u in range(spec.n_controls):
        for x in range(spec.n_states):
            row = spec.kernel[u, x]
            if np.any(row < 0.0):
                v.append(f"kernel row (u={u}, x={x}) has negative entries")
            s = float(row.sum())
            if abs(s - 1.0) > ROW_SUM_TOL:
                v.append(f"kernel row (u={u}, x={x}) row sum {s}")
    if not np.all(np.isfinite(spec.cost)):
        v.append("cost has non-finite entries")
    elif np.any(spec.cost < 0.0):
        v.append("cost has negative entries")
    if not (0.0 < spec.beta < 1.0):
        v.append(f"beta not in (0,1): {spec.beta}")
    return v


def load_model(source) -> ModelSpec:
    """Build a validated ModelSpec from a JSON file path, dict, or preset name.

    Keys: n_states, n_controls, n_symbols, beta, kernel ([u][x][x']),
    cost ([x][u]). Raises ModelValidationError when invariants fail.
    """
    if isinstance(source, dict):
        raw = source
    else:
        path = resolve_model_path(source)
        with open(path) as fh:
            raw = json.load(fh)
    try:
        spec = ModelSpec(
            n_states=int(raw["n_states"]),
            n_controls=int(raw["n_controls"]),
            n_symbols=int(raw["n_symbols"]),
            kernel=np.asarray(raw["kernel"], dtype=np.float64),
            cost=np.asarray(raw["cost"], dtype=np.float64),
            beta=float(raw["beta"]),
        )
    except KeyError as exc:
        raise ModelValidationError([f"missing key {exc.args[0]}"]) from exc
    violations = validate_model(spec)
    if violations:
        raise ModelValidationError(violations)
    return spec


def resolve_model_path(source) -> Path:
    """Resolve a model reference: an existing path, or a packaged preset name."""
    path = Path(source)
    if path.exists():
        return path
    preset = Path(__file__).parent / "presets" / f"{path.name}.json"
    if path.suffix == "" and preset.exists():
        return preset
    raise FileNotFoundError(f"model file or preset not found: {source}")


def n_actions(spec: ModelSpec) -> int:
    return spec.n_symbols**spec.n_states * spec.n_controls**spec.n_symbols


def action_tables(spec: ModelSpec, cap: int = DEFAULT_ACTION_CAP, fixed_quantizer=None):
    """Stacked (qmaps, gmaps) int64 arrays for all joint actions, kernel-ready.

    Row a of qmaps is the quantizer map of action a; row a of gmaps the
    control map. Ordering: quantizer map read as a base-|M| integer (state 0
    most significant), then control map as a base-|U| integer. When
    fixed_quantizer is given (the POMDP special case), only control maps vary.
    """
    count = n_actions(spec)
    if fixed_quantizer is None:
        if count > cap:
            raise ActionSpaceTooLarge(f"action space too large: {count} > cap {cap}")
        qmaps = np.array(
            list(product(range(spec.n_symbols), repeat=spec.n_states)), dtype=np.int64
        )
        gmaps = np.array(
            list(product(range(spec.n_controls), repeat=spec.n_symbols)), dtype=np.int64
        )
        n_g = len(gmaps)
        qmaps = np.repeat(qmaps, n_g, axis=0)
        gmaps = np.tile(gmaps, (spec.n_symbols**spec.n_states, 1))
        return qmaps, gmaps
    fq = np.asarray(fixed_quantizer, dtype=np.int64)
    if fq.shape != (spec.n_states,) or fq.min() < 0 or fq.max() >= spec.n_symbols:
        raise ModelValidationError(["fixed_quantizer is not a valid map X -> M"])
    gmaps = np.array(
        list(product(range(spec.n_controls), repeat=spec.n_symbols)), dtype=np.int64
    )
    if len(gmaps) > cap:
        raise ActionSpaceTooLarge(f"action space too large: {len(gmaps)} > cap {cap}")
    qmaps = np.tile(fq, (len(gmaps), 1))
    return qmaps, gmaps


def enumerate_actions(spec: ModelSpec, cap: int = DEFAULT_ACTION_CAP, fixed_quantizer=None):
    """Ordered list of all JointAction values (deterministic across runs)."""
    qmaps, gmaps = action_tables(spec, cap=cap, fixed_quantizer=fixed_quantizer)
    return [
        JointAction(i, Quantizer(tuple(int(s) for s in qmaps[i])), ControlMap(tuple(int(c) for c in gmaps[i])))
        for i in range(len(qmaps))
    ]


def action_from_index(spec: ModelSpec, index: int) -> JointAction:
    """Decode an action index back into its (quantizer, control map) pair."""
    n_g = spec.n_controls**spec.n_symbols
    qi, gi = divmod(int(index), n_g)
    qmap = []
    for x in range(spec.n_states):
        power = spec.n_symbols ** (spec.n_states - 1 - x)
        qmap.append((qi // power) % spec.n_symbols)
    gmap = []
    for q in range(spec.n_symbols):
        power = spec.n_controls ** (spec.n_symbols - 1 - q)
        gmap.append((gi // power) % spec.n_controls)
    return JointAction(int(index), Quantizer(tuple(qmap)), ControlMap(tuple(gmap)))


def act(action: JointAction, x: int):
    """Channel symbol and control triggered by source state x under action."""
    q = action.quantizer(x)
    return q, action.control(q)


def sample_next_state(spec: ModelSpec, x: int, u: int, rng: np.random.Generator) -> int:
    """Draw x' ~ P(.|x,u) by inverse CDF over the canonical state order."""
    return categorical(spec.kernel[u, x], rng.random())


def categorical(probs, unit: float) -> int:
    """Inverse-CDF draw from a probability vector given one uniform in [0,1)."""
    acc = 0.0
    last = 0
    for i in range(len(probs)):
        p = probs[i]
        if p > 0.0:
            last = i
            acc += p
            if unit < acc:
                return i
    return last
