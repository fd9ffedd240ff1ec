"""Timing comparison of the two sampling-kernel backends.

Builds a seeded model well above desk scale, samples the same trajectory
batch through the compiled extension and the pure-Python fallback, checks
the outputs are bit-identical, and prints the throughput of each.

Usage: python benchmarks/bench_kernels.py [--samples N] [--seed S]
"""

import argparse
import random
import time

import numpy as np

from kmdp._kernels import COMPILED_AVAILABLE
from kmdp.sim import sample_batch
from kmdp.verify import SizeCaps, random_markov_policy, random_model

BENCH_CAPS = SizeCaps(max_epochs=8, max_states=10, max_actions=6)


def time_backend(model, policy, samples, seed, backend, repeats=3):
    best = float("inf")
    payoffs = kills = None
    for _ in range(repeats):
        started = time.perf_counter()
        payoffs, kills, _ = sample_batch(model, None, policy, samples, seed, backend=backend)
        best = min(best, time.perf_counter() - started)
    return best, payoffs, kills


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=200_000)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    model = random_model(rng, BENCH_CAPS, min_epochs=BENCH_CAPS.max_epochs)
    policy = random_markov_policy(rng, model)
    states = sum(len(model.states[t]) for t in model.stages)
    actions = sum(len(model.actions[t]) for t in model.action_stages)
    print(f"model: {model.epochs} epochs, {states} states, {actions} actions")
    print(f"batch: {args.samples} trajectories, seed {args.seed}")

    py_time, py_payoffs, py_kills = time_backend(model, policy, args.samples, args.seed, "python")
    print(f"python   : {py_time:8.3f}s  ({args.samples / py_time:12.0f} traj/s)")

    if not COMPILED_AVAILABLE:
        print("compiled : extension not built (install without KMDP_PURE_PYTHON to compare)")
        return 0

    c_time, c_payoffs, c_kills = time_backend(model, policy, args.samples, args.seed, "compiled")
    print(f"compiled : {c_time:8.3f}s  ({args.samples / c_time:12.0f} traj/s)")
    print(f"speedup  : {py_time / c_time:8.1f}x")

    if not (np.array_equal(py_payoffs, c_payoffs) and np.array_equal(py_kills, c_kills)):
        print("ERROR: backends disagree bit-for-bit")
        return 1
    print("backends produce bit-identical batches")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
