"""How often a correct simulator lands in the symmetric-limit band over [1e3, 1e6].

On tau = 2, p = q = 1/2 the summed weighted debt sum_j d_j / p is an iid
walk with steps +2, 0, -2 (probabilities 1/4, 1/2, 1/4), so its running
extrema over a finite window can be sampled without the engine. The
printed rates give the chance that a seed passes the [0.5, 1.3] x sigma
band and, through a binomial tail, the chance of 16 or more passes in 20.
"""

from __future__ import annotations

import argparse
import math

import numpy as np
from scipy.stats import binom


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--frames", type=int, default=10**6)
    ap.add_argument("--t-min", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=12345)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    t = np.arange(1, args.frames + 1, dtype=np.float64)
    phi = np.sqrt(2 * t * np.log(np.log(np.maximum(t, 16.0))))
    sigma = math.sqrt(0.5) / 0.5
    steps = np.array([2.0, 0.0, 0.0, -2.0])
    mx = np.empty(args.reps)
    mn = np.empty(args.reps)
    for r in range(args.reps):
        x = (np.cumsum(steps[rng.integers(0, 4, args.frames)]) / phi)[args.t_min - 1 :]
        mx[r], mn[r] = x.max(), x.min()
    upper = (mx >= 0.5 * sigma) & (mx <= 1.3 * sigma)
    both = upper & (mn <= -0.5 * sigma) & (mn >= -1.3 * sigma)
    a, b = upper.mean(), both.mean()
    print(f"median running max / sigma: {np.median(mx) / sigma:.3f}")
    print(f"per-seed P(max in band) = {a:.3f}; P(>= 16 of 20) = {binom.sf(15, 20, a):.3f}")
    print(f"per-seed P(max and min in band) = {b:.3f}; P(>= 16 of 20) = {binom.sf(15, 20, b):.4f}")


if __name__ == "__main__":
    main()
