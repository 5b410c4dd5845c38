"""Frame-loop throughput of the compiled and pure-Python kernels.

    python benchmarks/bench_kernel.py --frames 200000 --repeat 3
"""

from __future__ import annotations

import argparse
import time

from debtsched import kernels
from debtsched.engine import RunConfig, run
from debtsched.model import SystemConfig
from debtsched.policies import PolicySpec

CASES = {
    "mwdf n=2 tau=1": (SystemConfig(2, 1, (0.5, 0.5), (0.25, 0.25)), PolicySpec.mwdf()),
    "mdf-random n=2 tau=2": (SystemConfig(2, 2, (0.5, 0.5), (0.5, 0.5)), PolicySpec.mdf("random")),
    "mwdf n=8 tau=4": (SystemConfig(8, 4, (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95), (0.05,) * 8), PolicySpec.mwdf()),
}


def main() -> None:
    ap = argparse.ArgumentParser(description="compare kernel backends")
    ap.add_argument("--frames", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    available = kernels.backends()
    print(f"backends: {', '.join(sorted(available))}; frames per run: {args.frames}")
    print(f"{'case':<24}{'backend':>9}{'best s':>10}{'Mframes/s':>11}  fingerprint")
    for name, (cfg, policy) in CASES.items():
        rc = RunConfig(cfg, policy, args.frames, seed=1, record_stride=64, t_min=1000)
        prints = set()
        best_by = {}
        for label, mod in sorted(available.items()):
            best = float("inf")
            for _ in range(args.repeat):
                began = time.perf_counter()
                res = run(rc, backend=mod)
                best = min(best, time.perf_counter() - began)
            prints.add(res.fingerprint())
            best_by[label] = best
            print(f"{name:<24}{label:>9}{best:>10.4f}{args.frames / best / 1e6:>11.2f}  {res.fingerprint()[:12]}")
        if len(best_by) == 2:
            print(f"{'':<24}{'speedup':>9}{best_by['python'] / best_by['cython']:>10.1f}x  identical={len(prints) == 1}")


if __name__ == "__main__":
    main()
