"""Benchmark the numba kernels against the pure-numpy fallback.

Runs the same scenario in fresh subprocesses with IOTA_SIM_BACKEND set to
each backend, times the scenario (after a warm-up run so numba's JIT cost
is excluded), and checks that the loss curves agree.

Usage: python benchmarks/bench_backends.py [--steps 400] [--repeats 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json
import sys
import time

from iota_sim import kernels
from iota_sim.model import TrainConfig, reference_train

steps = int(sys.argv[1])
repeats = int(sys.argv[2])
cfg = TrainConfig(dims=(8, 64, 64, 4), seed=0, steps=steps)

kernels.warmup()
reference_train(TrainConfig(dims=(8, 64, 64, 4), seed=0, steps=5))  # warm run

timings = []
losses = None
for _ in range(repeats):
    t0 = time.perf_counter()
    losses = reference_train(cfg)
    timings.append(time.perf_counter() - t0)

print(json.dumps({
    "backend": kernels.BACKEND,
    "best_seconds": min(timings),
    "all_seconds": timings,
    "first_loss": float(losses[0]),
    "last_loss": float(losses[-1]),
}))
"""


def run_backend(backend: str, steps: int, repeats: int) -> dict:
    env = dict(os.environ, IOTA_SIM_BACKEND=backend)
    out = subprocess.run(
        [sys.executable, "-c", WORKER, str(steps), str(repeats)],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=400)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    results = {}
    for backend in ("numpy", "numba"):
        try:
            results[backend] = run_backend(backend, args.steps, args.repeats)
        except subprocess.CalledProcessError as exc:
            print(f"{backend}: unavailable ({exc.stderr.strip().splitlines()[-1]})")

    for backend, r in results.items():
        print(
            f"{backend:>6}: best {r['best_seconds']:.3f} s over {args.repeats} runs "
            f"({args.steps} steps), final loss {r['last_loss']:.6g}"
        )
    if len(results) == 2:
        a, b = results["numpy"], results["numba"]
        speedup = a["best_seconds"] / b["best_seconds"]
        match = abs(a["last_loss"] - b["last_loss"]) < 1e-12
        print(f"numba speedup: {speedup:.2f}x; loss curves match: {match}")


if __name__ == "__main__":
    main()
