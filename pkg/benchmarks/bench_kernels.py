#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the three hot operations (single-input forward, backward, local SGD
loop) at federated-classifier and scheduler-net sizes, then a short
end-to-end training run per backend.

Run: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from uavfed import backend

CASES = {
    "classifier (20-10 logistic)": (20, 10),
    "scheduler actor (99-64-64-32-86)": (99, 64, 64, 32, 86),
    "scheduler actor, reference sizes (903-256-256-128-1656)": (903, 256, 256, 128, 1656),
}


def bench_kernels(impl, sizes, repeats):
    sizes = np.asarray(sizes, dtype=np.int64)
    rng = np.random.default_rng(0)
    params = rng.normal(size=backend.param_count(sizes))
    x = rng.normal(size=int(sizes[0]))
    acts = np.empty(backend.act_count(sizes))
    dout = rng.normal(size=int(sizes[-1]))
    grad = np.zeros_like(params)

    t0 = time.perf_counter()
    for _ in range(repeats):
        impl.dense_forward(params, sizes, x, acts)
    fwd = (time.perf_counter() - t0) / repeats

    t0 = time.perf_counter()
    for _ in range(repeats):
        impl.dense_backward(params, sizes, x, acts, dout, grad, 1.0)
    bwd = (time.perf_counter() - t0) / repeats

    features = np.ascontiguousarray(rng.normal(size=(64, int(sizes[0]))))
    labels = rng.integers(0, int(sizes[-1]), 64).astype(np.int64)
    order = rng.integers(0, 64, 10).astype(np.int64)
    p = params.copy()
    t0 = time.perf_counter()
    for _ in range(max(1, repeats // 10)):
        impl.sgd_dense_softmax(p, sizes, features, labels, order, 1e-4)
    sgd = (time.perf_counter() - t0) / max(1, repeats // 10)
    return fwd, bwd, sgd


def bench_training(pure_env: bool) -> float:
    code = (
        "import time, warnings\n"
        "warnings.simplefilter('ignore')\n"
        "from uavfed.config import SimConfig\n"
        "from uavfed.env import Env\n"
        "from uavfed import a3c, backend\n"
        "cfg = SimConfig.desk_rl()\n"
        "cfg.rl.episodes = 20\n"
        "t0 = time.time()\n"
        "a3c.train(cfg, env_factory=Env)\n"
        "print(backend.backend_name(), time.time() - t0)\n"
    )
    env = dict(os.environ)
    env["UAVFED_PURE"] = "1" if pure_env else "0"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env=env, check=True)
    name, seconds = out.stdout.split()
    assert name == ("pure" if pure_env else "fast")
    return float(seconds)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=2000)
    parser.add_argument("--skip-training", action="store_true")
    args = parser.parse_args()

    pure, fast = backend.implementations()
    if fast is None:
        print("compiled kernels unavailable; nothing to compare")
        return

    print(f"{'case':<55} {'op':<8} {'pure':>10} {'fast':>10} {'speedup':>8}")
    for name, sizes in CASES.items():
        reps = args.repeats if len(sizes) < 4 else max(50, args.repeats // 20)
        p = bench_kernels(pure, sizes, reps)
        f = bench_kernels(fast, sizes, reps)
        for op, tp, tf in zip(("forward", "backward", "sgd x10"), p, f):
            print(f"{name:<55} {op:<8} {tp * 1e6:>8.1f}us {tf * 1e6:>8.1f}us "
                  f"{tp / tf:>7.1f}x")

    if not args.skip_training:
        print("\nend-to-end: 20 desk-scale training episodes")
        t_fast = bench_training(pure_env=False)
        t_pure = bench_training(pure_env=True)
        print(f"  fast backend: {t_fast:.2f}s")
        print(f"  pure backend: {t_pure:.2f}s ({t_pure / t_fast:.2f}x slower)")


if __name__ == "__main__":
    main()
