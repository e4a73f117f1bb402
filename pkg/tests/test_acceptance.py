"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines live. The
heavy training sweeps are shared across criteria through session fixtures.
"""

import hashlib
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

import codedctrl as cc
from codedctrl import kernels
from codedctrl.model import action_tables

EVAL_HORIZON = 1000
EVAL_REPS = 1000


def report(num, name, ok, detail):
    line = f"ACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def figure2_results(spec_a):
    """Criterion 3 protocol: 3 seeds x n in {1,3,5,10,15}, 1e6 iterations."""
    out = {}
    for seed in (0, 1, 2):
        for n in (1, 3, 5, 10, 15):
            cfg = cc.LearnConfig(
                scheme="quantized", resolution=n, iterations=1_000_000, seed=seed
            )
            table, policy, diag = cc.run_quantized_qlearning(spec_a, cfg)
            res = cc.monte_carlo_cost(
                policy, spec_a, horizon=EVAL_HORIZON, replications=EVAL_REPS, seed=seed
            )
            out[(n, seed)] = {"result": res, "max_q": float(table.q.max())}
    return out


@pytest.fixture(scope="session")
def figure3_results(spec_b):
    """Criterion 4 protocol: 3 seeds x N in {1,2,3}, 1e5 iterations (SS VI-B)."""
    out = {}
    for seed in (0, 1, 2):
        for N in (1, 2, 3):
            cfg = cc.LearnConfig(scheme="window", window=N, iterations=100_000, seed=seed)
            table, policy, diag = cc.run_window_qlearning(spec_b, cfg)
            res = cc.monte_carlo_cost(
                policy, spec_b, horizon=EVAL_HORIZON, replications=EVAL_REPS, seed=seed
            )
            out[(N, seed)] = {"result": res, "policy": policy, "max_q": float(table.q.max())}
    return out


def test_criterion_1_dobrushin_golden(spec_b):
    start = time.perf_counter()
    report_b = cc.stability_report(spec_b, 5)
    deltas = report_b.delta_per_control
    # independent brute force over unordered state pairs
    brute = []
    for u in range(2):
        brute.append(
            min(
                float(np.minimum(spec_b.kernel[u, i], spec_b.kernel[u, k]).sum())
                for i in range(3)
                for k in range(i + 1, 3)
            )
        )
    elapsed = time.perf_counter() - start
    ok = (
        abs(report_b.delta_min - 0.55) <= 1e-12
        and abs(deltas[0] - 0.65) <= 1e-12
        and abs(deltas[1] - 0.55) <= 1e-12
        and all(abs(d - b) <= 1e-15 for d, b in zip(deltas, brute))
        and elapsed < 1.0
    )
    report(
        1,
        "dobrushin golden value",
        ok,
        f"delta=({float(deltas[0])!r},{float(deltas[1])!r}) "
        f"min={float(report_b.delta_min)!r} in {elapsed:.3f}s",
    )


def test_criterion_2_bayes_oracle_equivalence(spec_a):
    start = time.perf_counter()
    qmaps, gmaps = action_tables(spec_a)
    n_act = len(qmaps)
    pi0 = np.full(3, 1.0 / 3.0)
    kern = spec_a.kernel

    # per-action gathered kernel rows and symbol masks for the joint law
    rows = np.empty((n_act, 3, 3))
    masks = np.empty((n_act, 2, 3))
    for a in range(n_act):
        u_of_x = gmaps[a][qmaps[a]]
        rows[a] = kern[u_of_x, np.arange(3)]
        for q in range(2):
            masks[a, q] = (qmaps[a] == q).astype(np.float64)

    tmp = np.empty(3)
    worst = 0.0
    checked = 0

    def compare(pi_chain, tensor, mask_vecs):
        nonlocal worst, checked
        letters = "ijkl"
        axes = len(tensor.shape) - 1
        spec_str = (
            letters[: axes + 1]
            + ","
            + ",".join(letters[i] for i in range(axes))
            + "->"
            + letters[axes]
        )
        marginal = np.einsum(spec_str, tensor, *mask_vecs)
        mass = marginal.sum()
        assert mass > 0.0
        err = np.abs(pi_chain - marginal / mass).max()
        worst = max(worst, float(err))
        checked += 1

    for a0 in range(n_act):
        t1 = pi0[:, None] * rows[a0]
        for q0 in range(2):
            if kernels.symbol_mass(pi0, qmaps[a0], q0) <= 0.0:
                continue
            pi1 = np.empty(3)
            kernels.predictor_step(pi0, qmaps[a0], gmaps[a0], kern, q0, tmp, pi1)
            compare(pi1, t1, (masks[a0, q0],))
            for a1 in range(n_act):
                t2 = t1[:, :, None] * rows[a1][None, :, :]
                for q1 in range(2):
                    if kernels.symbol_mass(pi1, qmaps[a1], q1) <= 0.0:
                        continue
                    pi2 = np.empty(3)
                    kernels.predictor_step(pi1, qmaps[a1], gmaps[a1], kern, q1, tmp, pi2)
                    compare(pi2, t2, (masks[a0, q0], masks[a1, q1]))
                    for a2 in range(n_act):
                        t3 = t2[:, :, :, None] * rows[a2][None, None, :, :]
                        for q2 in range(2):
                            if kernels.symbol_mass(pi2, qmaps[a2], q2) <= 0.0:
                                continue
                            pi3 = np.empty(3)
                            kernels.predictor_step(
                                pi2, qmaps[a2], gmaps[a2], kern, q2, tmp, pi3
                            )
                            compare(
                                pi3, t3, (masks[a0, q0], masks[a1, q1], masks[a2, q2])
                            )
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and elapsed < 30.0
    report(
        2,
        "bayes oracle equivalence",
        ok,
        f"{checked} histories, max err {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_3_figure2_trend(figure2_results):
    ns = (1, 3, 5, 10, 15)
    per_seed_ok = []
    details = []
    pooled_n, pooled_mean = [], []
    for seed in (0, 1, 2):
        means = {n: figure2_results[(n, seed)]["result"].mean for n in ns}
        errs = {n: figure2_results[(n, seed)]["result"].stderr for n in ns}
        band = 2.0 * float(np.hypot(errs[15], errs[1]))
        per_seed_ok.append(means[15] <= means[1] + band)
        details.append(f"seed{seed}: n1={means[1]:.4f} n15={means[15]:.4f}")
        pooled_n += list(ns)
        pooled_mean += [means[n] for n in ns]
    rho = stats.spearmanr(pooled_n, pooled_mean).statistic
    ok = all(per_seed_ok) and rho <= 0.0
    report(3, "figure 2 trend", ok, f"spearman={rho:.3f}; " + "; ".join(details))


def test_criterion_4_figure3_trend(figure3_results):
    ws = (1, 2, 3)
    ok = True
    details = []
    for seed in (0, 1, 2):
        means = {N: figure3_results[(N, seed)]["result"].mean for N in ws}
        errs = {N: figure3_results[(N, seed)]["result"].stderr for N in ws}
        details.append(
            "seed%d: " % seed + " ".join(f"N{N}={means[N]:.4f}" for N in ws)
        )
        for lo, hi in zip(ws, ws[1:]):
            band = 2.0 * float(np.hypot(errs[lo], errs[hi]))
            if means[hi] > means[lo] + band:
                ok = False
    report(4, "figure 3 trend", ok, "; ".join(details))


def test_criterion_5_dcoe_fixed_point(spec_a):
    finals, firsts = [], []
    for seed in range(5):
        cfg = cc.LearnConfig(
            scheme="quantized",
            resolution=3,
            iterations=30_000_000,
            seed=seed,
            checkpoint_every=10_000,
        )
        _, _, diag = cc.run_quantized_qlearning(spec_a, cfg)
        assert diag.curve[0][0] == 10_000
        firsts.append(diag.curve[0][3])
        finals.append(diag.final_residual)
    ok = all(f < 1e-2 for f in finals) and all(fi > fl for fi, fl in zip(firsts, finals))
    report(
        5,
        "dcoe fixed point",
        ok,
        "final residuals "
        + " ".join(f"{f:.4f}" for f in finals)
        + "; first-checkpoint "
        + " ".join(f"{f:.3f}" for f in firsts),
    )


def test_criterion_6_learner_vs_oracle(spec_a, figure2_results):
    grid = cc.build_grid(5, 3)
    vf = cc.value_iterate_grid(grid, spec_a, tol=1e-9)
    vi_policy = cc.Policy(
        scheme="quantized",
        param=5,
        model_hash=spec_a.model_hash(),
        fallback=0,
        actions={i: int(a) for i, a in enumerate(vf.policy)},
    )
    res_vi = cc.monte_carlo_cost(
        vi_policy, spec_a, horizon=EVAL_HORIZON, replications=EVAL_REPS, seed=0
    )
    res_q = figure2_results[(5, 0)]["result"]
    gap = abs(res_vi.mean - res_q.mean)
    band = 2.0 * float(np.hypot(res_vi.stderr, res_q.stderr))
    ok = gap <= band and float(vf.values.max()) <= spec_a.value_cap + 1e-9
    report(
        6,
        "learner vs oracle policy quality",
        ok,
        f"vi={res_vi.mean:.4f} q={res_q.mean:.4f} gap={gap:.4f} band={band:.4f}",
    )


def test_criterion_7_filter_stability_contraction(spec_b):
    start = time.perf_counter()
    est = cc.empirical_loss(
        spec_b,
        cc.uniform_belief(3),
        np.array([0.6, 0.2, 0.2]),
        trials=10_000,
        horizon=11,
        rng=np.random.default_rng(7),
    )
    rate = 2.0 * (1.0 - 0.55)
    ok = True
    for t in range(11):
        if est.mean[t + 1] > rate * est.mean[t] + 3.0 * est.stderr[t + 1]:
            ok = False
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 120.0
    report(
        7,
        "filter-stability contraction",
        ok,
        f"gap(0)={est.mean[0]:.4f} gap(1)={est.mean[1]:.4f} ... gap(11)={est.mean[11]:.2e}, {elapsed:.1f}s",
    )


def test_criterion_8_value_bound_envelope(spec_b, figure3_results):
    report_b = cc.stability_report(spec_b, 3)
    ok = True
    details = []
    for N in (1, 2, 3):
        policy = figure3_results[(N, 0)]["policy"]
        mc = figure3_results[(N, 0)]["result"].mean
        exact, _ = cc.exact_discounted_cost(policy, cc.point_mass(0, 3), spec_b, 8)
        bound = report_b.value_bound_per_N[N]
        assert bound == pytest.approx(50.0 * 0.9**N, rel=1e-12)
        gap = abs(mc - exact)
        details.append(f"N{N}: gap={gap:.3f} bound={bound:.2f}")
        if not (gap < bound and 0.0 <= mc <= spec_b.value_cap and 0.0 <= exact <= spec_b.value_cap):
            ok = False
    report(8, "theorem T5.3 envelope", ok, "; ".join(details))


def test_criterion_9_exactness_sanities(
    constant_cost_spec, zero_cost_spec, spec_a, figure2_results, figure3_results
):
    const_policy = cc.Policy(
        scheme="quantized",
        param=1,
        model_hash=constant_cost_spec.model_hash(),
        fallback=4,
        actions={},
    )
    res_const = cc.monte_carlo_cost(
        const_policy, constant_cost_spec, horizon=EVAL_HORIZON, replications=200
    )
    expected = 0.7 * (1.0 - 0.8**EVAL_HORIZON) / 0.2
    const_ok = res_const.stderr == 0.0 and abs(res_const.mean - expected) < 1e-10

    zero_policy = cc.Policy(
        scheme="quantized", param=1, model_hash=zero_cost_spec.model_hash(), fallback=0, actions={}
    )
    res_zero = cc.monte_carlo_cost(zero_policy, zero_cost_spec, horizon=500, replications=100)
    cfg = cc.LearnConfig(scheme="quantized", resolution=2, iterations=20_000, seed=0)
    table_zero, _, _ = cc.run_quantized_qlearning(zero_cost_spec, cfg)
    zero_ok = res_zero.mean == 0.0 and res_zero.stderr == 0.0 and np.all(table_zero.q == 0.0)

    cap = spec_a.value_cap
    assert cap == pytest.approx(5.0, rel=1e-12)
    bound_ok = True
    for cell in figure2_results.values():
        bound_ok &= cell["max_q"] <= cap + 1e-12 and cell["result"].mean <= cap
    for cell in figure3_results.values():
        bound_ok &= cell["max_q"] <= cap + 1e-12 and cell["result"].mean <= cap
    vf = cc.value_iterate_grid(cc.build_grid(5, 3), spec_a)
    bound_ok &= float(vf.values.max()) <= cap + 1e-9

    ok = const_ok and zero_ok and bool(bound_ok)
    report(
        9,
        "exactness sanities",
        ok,
        f"const mean err={abs(res_const.mean - expected):.1e} stderr={res_const.stderr!r}; "
        f"zero mean={res_zero.mean!r}; bound 5 respected={bool(bound_ok)}",
    )


def test_criterion_10_pipeline_determinism(tmp_path):
    config = {
        "model": "paper_sim_A",
        "scheme": "quantized",
        "sweep": [3],
        "iterations": 50_000,
        "seeds": [0],
        "horizon": 300,
        "replications": 200,
        "out": "results",
    }

    def run_all(root: Path):
        root.mkdir()
        cfg_path = root / "exp.json"
        cfg_path.write_text(json.dumps(config))
        for args in (
            ["learn", "--config", str(cfg_path), "--trace"],
            ["evaluate", "--config", str(cfg_path)],
            ["diagnose", "--config", str(cfg_path)],
            ["value-iterate", "--config", str(cfg_path)],
        ):
            proc = subprocess.run(
                [sys.executable, "-m", "codedctrl.cli", *args],
                cwd=root,
                capture_output=True,
                text=True,
            )
            assert proc.returncode == 0, proc.stderr
        return {
            p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted((root / "results").rglob("*"))
            if p.is_file()
        }

    digests_a = run_all(tmp_path / "run_a")
    digests_b = run_all(tmp_path / "run_b")
    ok = digests_a == digests_b and len(digests_a) >= 8
    report(10, "pipeline determinism", ok, f"{len(digests_a)} artifacts byte-identical")
