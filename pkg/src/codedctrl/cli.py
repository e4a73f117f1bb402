"""Experiment driver: learn / evaluate / diagnose / value-iterate.

One JSON config file describes a study: the model (preset name, file path,
or inline model keys), the approximation scheme with its parameter sweep,
and the learning/evaluation knobs. Every command is deterministic given
(config, seed); artifacts are written atomically so re-runs are
byte-identical. Exit codes: 0 success, 2 validation error, 3 resource cap.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import kernels
from .belief_mdp import GridTooLarge, build_grid, env_step, EnvState
from .filtering import stability_report, uniform_belief
from .io_utils import write_csv
from .learning import (
    LearnConfig,
    Policy,
    load_policy,
    run_quantized_qlearning,
    run_window_qlearning,
    save_json,
)
from .model import (
    ActionSpaceTooLarge,
    ModelSpec,
    ModelValidationError,
    action_from_index,
    categorical,
    load_model,
)
from .oracle import (
    TreeTooLarge,
    monte_carlo_cost,
    stationary_distribution,
    stationary_of_matrix,
    value_iterate_grid,
)
from .seeding import STREAM_LEARN, seeded_rng
from .window import initial_window, psi_total, window_env_step

EXIT_VALIDATION = 2
EXIT_RESOURCE = 3
TRACE_STEPS = 1000


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Study description loaded from one JSON file."""

    model: ModelSpec
    scheme: str = "quantized"
    sweep: list = field(default_factory=list)
    iterations: int = 1_000_000
    seeds: list = field(default_factory=lambda: [0])
    tolerance: float = 1e-10
    convergence_window: int = 10_000
    checkpoint_every: int = 10_000
    horizon: int = 1000
    replications: int = 1000
    eval_seed: int = 0
    mu: list | None = None
    vi_resolution: int | None = None
    vi_tolerance: float = 1e-9
    out: str = "results"

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            raw = json.load(fh)
        base = Path(path).parent
        if "model" in raw:
            ref = raw["model"]
            if isinstance(ref, dict):
                model = load_model(ref)
            else:
                candidate = base / ref
                model = load_model(candidate if candidate.exists() else ref)
        elif "kernel" in raw:
            model = load_model(raw)
        else:
            raise ConfigError("config needs a 'model' reference or inline model keys")
        known = {f for f in cls.__dataclass_fields__ if f != "model"}
        kwargs = {k: v for k, v in raw.items() if k in known}
        cfg = cls(model=model, **kwargs)
        if cfg.scheme not in ("quantized", "window"):
            raise ConfigError(f"unknown scheme {cfg.scheme!r}")
        if not isinstance(cfg.sweep, list) or (not cfg.sweep and cfg.vi_resolution is None):
            raise ConfigError("sweep must be a non-empty list")
        return cfg

    def tag(self, value) -> str:
        return f"{'n' if self.scheme == 'quantized' else 'N'}{value}"


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _learn_cell(cfg: ExperimentConfig, value: int, seed: int, out: Path, trace: bool):
    config = LearnConfig(
        scheme=cfg.scheme,
        resolution=value if cfg.scheme == "quantized" else None,
        window=value if cfg.scheme == "window" else None,
        iterations=cfg.iterations,
        seed=seed,
        convergence_window=cfg.convergence_window,
        tolerance=cfg.tolerance,
        checkpoint_every=cfg.checkpoint_every,
        mu=None if cfg.mu is None else np.asarray(cfg.mu, dtype=np.float64),
    )
    runner = run_quantized_qlearning if cfg.scheme == "quantized" else run_window_qlearning
    table, policy, diag = runner(cfg.model, config)
    tag = cfg.tag(value)
    save_json(table, out / f"qtable_{tag}_s{seed}.json")
    save_json(policy, out / f"policy_{tag}_s{seed}.json")
    curve_rows = [("iteration", "max_q_change", "visited_states", "residual")]
    curve_rows += [(i, float(d), v, float(r)) for i, d, v, r in diag.curve]
    write_csv(out / f"curve_{tag}_s{seed}.csv", curve_rows)
    if trace:
        rows = _trace_rows(cfg, config)
        write_csv(out / f"trace_{tag}_s{seed}.csv", rows)
    return (
        value,
        seed,
        diag.iterations_run,
        diag.visited_states,
        diag.final_residual,
        diag.reseed_events,
    )


def _trace_rows(cfg: ExperimentConfig, config: LearnConfig):
    """Replay the first training steps at the API level with the same seed.

    Draw order matches the training kernels exactly (action, then
    transition), so the trace shows the same trajectory the learner saw.
    """
    spec = cfg.model
    steps = min(config.iterations, TRACE_STEPS)
    rng = seeded_rng(config.seed, STREAM_LEARN)
    n_act = spec.n_symbols**spec.n_states * spec.n_controls**spec.n_symbols
    header = ("t", "x", "q", "u", "cost") + tuple(f"p{s}" for s in range(spec.n_states))
    rows = [header]
    if cfg.scheme == "quantized":
        u0 = kernels.uniform_index(rng.random(), spec.n_controls)
        pi0 = stationary_of_matrix(spec.kernel[u0])
        if pi0 is None:
            pi0 = uniform_belief(spec.n_states)
        x0 = kernels.categorical_k(pi0, rng.random())
        state = EnvState(x=int(x0), pi=pi0)
        for t in range(steps):
            a = kernels.uniform_index(rng.random(), n_act)
            action = action_from_index(spec, a)
            x_t, belief = state.x, state.pi
            state, q, u, cost = env_step(state, action, spec, rng)
            rows.append((t, int(x_t), q, u, float(cost)) + tuple(map(float, belief)))
    else:
        mu = (
            np.asarray(cfg.mu, dtype=np.float64)
            if cfg.mu is not None
            else uniform_belief(spec.n_states)
        )
        x = 0
        history = []
        for _ in range(config.window):
            a = kernels.uniform_index(rng.random(), n_act)
            action = action_from_index(spec, a)
            q = action.quantizer(x)
            x = categorical(spec.kernel[action.control(q), x], rng.random())
            history.append((q, a))
        win = initial_window(mu, history)
        for t in range(steps):
            a = kernels.uniform_index(rng.random(), n_act)
            action = action_from_index(spec, a)
            belief, _ = psi_total(win, spec)
            x_t = x
            x, win, q, u, cost, _ = window_env_step(x, win, action, spec, rng)
            rows.append((t, int(x_t), q, u, float(cost)) + tuple(map(float, belief)))
    return rows


@click.group()
def main():
    """Joint coding-and-control experiments on finite Markov models."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Single seed override.")
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--trace", is_flag=True, help="Also write the first steps of each run.")
@click.option("--jobs", type=int, default=1, show_default=True)
def learn(config_path, seed, out_dir, trace, jobs):
    """Train Q-learning policies for every (sweep value, seed) cell."""
    try:
        cfg = ExperimentConfig.from_file(config_path)
    except (ConfigError, ModelValidationError, FileNotFoundError) as exc:
        _fail(str(exc), EXIT_VALIDATION)
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [seed] if seed is not None else cfg.seeds
    cells = [(v, s) for v in cfg.sweep for s in seeds]
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(
                    pool.map(_learn_cell_star, [(cfg, v, s, out, trace) for v, s in cells])
                )
        else:
            results = [_learn_cell(cfg, v, s, out, trace) for v, s in cells]
    except (ActionSpaceTooLarge, GridTooLarge) as exc:
        _fail(str(exc), EXIT_RESOURCE)
    except ValueError as exc:
        _fail(str(exc), EXIT_VALIDATION)
    for value, s, iters, visited, residual, reseeds in results:
        click.echo(
            f"{cfg.tag(value)} seed={s}: {iters} iterations, "
            f"{visited} states visited, residual={residual:.3e}, reseeds={reseeds}"
        )


def _learn_cell_star(args):
    return _learn_cell(*args)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option(
    "--policies",
    multiple=True,
    type=click.Path(exists=True),
    help="Explicit policy files; default: every sweep/seed cell under --out.",
)
@click.option("--seed", type=int, default=None, help="Evaluation seed override.")
def evaluate(config_path, out_dir, policies, seed):
    """Monte-Carlo evaluation of learned policies; writes results.csv."""
    try:
        cfg = ExperimentConfig.from_file(config_path)
    except (ConfigError, ModelValidationError, FileNotFoundError) as exc:
        _fail(str(exc), EXIT_VALIDATION)
    out = Path(out_dir or cfg.out)
    eval_seed = cfg.eval_seed if seed is None else seed
    if policies:
        files = [Path(p) for p in policies]
    else:
        files = [
            out / f"policy_{cfg.tag(v)}_s{s}.json" for v in cfg.sweep for s in cfg.seeds
        ]
        files = [f for f in files if f.exists()]
    if not files:
        _fail("no policy files to evaluate", EXIT_VALIDATION)
    rows = [("sweep_value", "seed", "mean_cost", "stderr", "replications", "horizon")]
    for f in files:
        policy = load_policy(f)
        token = f.stem.split("_")[-1]
        run_seed = int(token[1:]) if token.startswith("s") else 0
        try:
            res = monte_carlo_cost(
                policy,
                cfg.model,
                horizon=cfg.horizon,
                replications=cfg.replications,
                seed=eval_seed,
            )
        except ValueError as exc:
            _fail(str(exc), EXIT_VALIDATION)
        rows.append(
            (
                policy.param,
                run_seed,
                float(res.mean),
                float(res.stderr),
                res.replications,
                res.horizon,
            )
        )
        click.echo(
            f"{cfg.tag(policy.param)} seed={run_seed}: "
            f"mean={res.mean:.6f} stderr={res.stderr:.6f}"
        )
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "results.csv", rows)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--max-window", type=int, default=10, show_default=True)
def diagnose(config_path, out_dir, max_window):
    """Filter-stability and ergodicity report for the configured model."""
    try:
        cfg = ExperimentConfig.from_file(config_path)
    except (ConfigError, ModelValidationError, FileNotFoundError) as exc:
        _fail(str(exc), EXIT_VALIDATION)
    spec = cfg.model
    report = stability_report(spec, max_window)
    for u, d in enumerate(report.delta_per_control):
        click.echo(f"dobrushin delta(P,u={u}) = {d!r}")
    click.echo(f"delta_min = {report.delta_min!r}")
    click.echo(
        "contraction condition (delta_min >= 1/2): "
        + ("satisfied" if report.contraction_guaranteed else "not guaranteed")
    )
    for n, (lb, vb) in enumerate(
        zip(report.loss_bound_per_N, report.value_bound_per_N)
    ):
        click.echo(f"N={n}: loss_bound={lb:.6g} value_bound={vb:.6g}")
    try:
        zeta = stationary_distribution(spec)
        click.echo("uniform-action source chain: irreducible and aperiodic")
        click.echo("zeta = " + " ".join(repr(float(z)) for z in zeta))
    except ValueError as exc:
        click.echo(f"uniform-action source chain: {exc}")
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "stability_controls.csv", report.controls_csv_rows())
    write_csv(out / "stability_bounds.csv", report.bounds_csv_rows())


@main.command("value-iterate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--evaluate", "run_eval", is_flag=True, help="Also Monte-Carlo the greedy policy.")
def value_iterate(config_path, out_dir, run_eval):
    """Solve the grid model by value iteration; writes the value table CSV."""
    try:
        cfg = ExperimentConfig.from_file(config_path)
    except (ConfigError, ModelValidationError, FileNotFoundError) as exc:
        _fail(str(exc), EXIT_VALIDATION)
    if cfg.scheme != "quantized" and cfg.vi_resolution is None:
        _fail("value iteration needs a quantized sweep or vi_resolution", EXIT_VALIDATION)
    n = cfg.vi_resolution if cfg.vi_resolution is not None else cfg.sweep[0]
    spec = cfg.model
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        grid = build_grid(n, spec.n_states)
        vf = value_iterate_grid(grid, spec, tol=cfg.vi_tolerance)
    except (GridTooLarge, ActionSpaceTooLarge, TreeTooLarge) as exc:
        _fail(str(exc), EXIT_RESOURCE)
    write_csv(out / f"value_n{n}.csv", vf.csv_rows())
    write_csv(out / f"grid_n{n}.csv", grid.csv_rows())
    click.echo(f"value iteration: {len(grid)} states, {vf.sweeps} sweeps")
    if run_eval:
        policy = Policy(
            scheme="quantized",
            param=n,
            model_hash=spec.model_hash(),
            fallback=0,
            actions={i: int(a) for i, a in enumerate(vf.policy)},
        )
        res = monte_carlo_cost(
            policy,
            spec,
            horizon=cfg.horizon,
            replications=cfg.replications,
            seed=cfg.eval_seed,
        )
        rows = [
            ("sweep_value", "seed", "mean_cost", "stderr", "replications", "horizon"),
            (n, cfg.eval_seed, float(res.mean), float(res.stderr), res.replications, res.horizon),
        ]
        write_csv(out / f"vi_results_n{n}.csv", rows)
        click.echo(f"greedy policy: mean={res.mean:.6f} stderr={res.stderr:.6f}")


if __name__ == "__main__":
    main()
