"""Timing comparison of the numba and pure-numpy kernel backends.

Runs the same workloads under both CODEDCTRL_BACKEND settings in child
processes, checks the outputs are bit-identical, and prints a table.

    python3 benchmarks/bench_backends.py [--iterations 200000]
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

WORKER = "--worker"


def worker(iterations):
    import numpy as np

    import codedctrl as cc

    spec_a = cc.load_model("paper_sim_A")
    spec_b = cc.load_model("paper_sim_B")
    timings = {}
    digests = {}

    def clock(name, fn):
        start = time.perf_counter()
        out = fn()
        timings[name] = time.perf_counter() - start
        digests[name] = hashlib.sha256(np.ascontiguousarray(out).tobytes()).hexdigest()

    # warm-up triggers jit compilation so timings measure steady state
    warm = cc.LearnConfig(scheme="quantized", resolution=3, iterations=100, seed=0)
    cc.run_quantized_qlearning(spec_a, warm)
    warm_w = cc.LearnConfig(scheme="window", window=1, iterations=100, seed=0)
    cc.run_window_qlearning(spec_b, warm_w)

    cfg_q = cc.LearnConfig(scheme="quantized", resolution=15, iterations=iterations, seed=0)
    clock("quantized_qlearn", lambda: cc.run_quantized_qlearning(spec_a, cfg_q)[0].q)

    cfg_w = cc.LearnConfig(
        scheme="window", window=2, iterations=max(iterations // 2, 100), seed=0
    )
    clock("window_qlearn", lambda: cc.run_window_qlearning(spec_b, cfg_w)[0].q)

    _, policy, _ = cc.run_quantized_qlearning(
        spec_a, cc.LearnConfig(scheme="quantized", resolution=5, iterations=20_000, seed=0)
    )
    reps = max(iterations // 2_000, 10)
    clock(
        "monte_carlo_eval",
        lambda: np.array(
            cc.monte_carlo_cost(policy, spec_a, horizon=1000, replications=reps, seed=1).mean
        ),
    )

    const = cc.Policy(
        scheme="quantized", param=3, model_hash=spec_a.model_hash(), fallback=13, actions={}
    )
    clock(
        "exact_tree",
        lambda: np.array(
            cc.exact_discounted_cost(const, cc.recurrent_prior(spec_a), spec_a, 14)[0]
        ),
    )

    print(json.dumps({"backend": cc.BACKEND, "timings": timings, "digests": digests}))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--iterations", type=int, default=200_000)
    parser.add_argument(WORKER, action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()
    if getattr(args, "worker"):
        worker(args.iterations)
        return

    results = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, CODEDCTRL_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, __file__, WORKER, "--iterations", str(args.iterations)],
            capture_output=True,
            text=True,
            env=env,
        )
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            raise SystemExit(1)
        results[backend] = json.loads(proc.stdout.splitlines()[-1])

    assert results["numba"]["digests"] == results["numpy"]["digests"], (
        "backend outputs differ"
    )
    print(f"workload sized by --iterations {args.iterations}; outputs bit-identical\n")
    print(f"{'kernel':<20} {'numba':>10} {'numpy':>10} {'speedup':>9}")
    for name in results["numba"]["timings"]:
        t_jit = results["numba"]["timings"][name]
        t_py = results["numpy"]["timings"][name]
        print(f"{name:<20} {t_jit:>9.3f}s {t_py:>9.3f}s {t_py / t_jit:>8.1f}x")


if __name__ == "__main__":
    main()
