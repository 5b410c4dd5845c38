"""Acceptance criteria C1-C11, each at its stated tolerance.

Every criterion is a plain function returning (passed, detail); the
pytest wrappers record the verdict for the terminal summary, and running
this file as a script prints the same lines.

Configs:
  UNIT  tau = 1, p = (0.5, 0.5), q = (0.25, 0.25)
  FRAME tau = 2, p = (0.5, 0.5), q on the full-set face (0.5 each, since
        I_{1,2} = 0 there; see test_feasibility)
"""

from __future__ import annotations

import contextlib
import functools
import io
import itertools
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from debtsched import analysis, cli
from debtsched.distributions import (
    compare_full_delivery_forms,
    delivery_probabilities,
    idle_table,
    sigma_p_tau,
    symmetric_delivery_distribution,
)
from debtsched.engine import RunConfig, forced_outcomes, run, simulate_frame
from debtsched.feasibility import boundary_config
from debtsched.model import DebtState, SystemConfig
from debtsched.policies import PolicySpec

T = 1_000_000
SEEDS = tuple(range(20))
UNIT = SystemConfig(2, 1, (0.5, 0.5), (0.25, 0.25))
FRAME = boundary_config([0.5, 0.5], 2)
MWDF = PolicySpec.mwdf()
MDF = PolicySpec.mdf()
FIXED = PolicySpec.fixed_order((1, 2))
# start displaced far from the diagonal (d = (0, 1000)); from zero debts
# MWDF keeps Z in {0, 2} on UNIT and never crosses the threshold
DISPLACED = DebtState.from_counts(UNIT, 4000, (1000, 0))


@functools.lru_cache(maxsize=None)
def unit_run(policy: PolicySpec, seed: int, displaced: bool = False):
    rc = RunConfig(
        UNIT, policy, T, seed,
        record_stride=T,
        ssc_extra_edges=(10_000,),
        initial_state=DISPLACED if displaced else None,
    )
    return run(rc)


@functools.lru_cache(maxsize=None)
def frame_run(policy: PolicySpec, seed: int):
    return run(RunConfig(FRAME, policy, T, seed, record_stride=T))


def criterion_1():
    rng = np.random.default_rng(20240601)
    samples = 1_000_000
    began = time.perf_counter()
    checked = worst = 0
    bad = []
    for n in range(1, 5):
        for tau in (1, 2, 5, 10):
            ps = tuple(float(x) for x in rng.uniform(0.05, 1.0, n))
            cfg = SystemConfig(n, tau, ps, (0.01,) * n)
            draws = np.column_stack([rng.geometric(p, samples) for p in ps])
            for r in range(1, n + 1):
                for sub in itertools.combinations(range(1, n + 1), r):
                    total = draws[:, [i - 1 for i in sub]].sum(axis=1)
                    idle = np.maximum(tau - total, 0) / tau
                    mean, se = idle.mean(), idle.std(ddof=1) / math.sqrt(samples)
                    exact = idle_table(sub, cfg).idle_fraction
                    z = abs(mean - exact) / se if se > 0 else (0.0 if abs(mean - exact) < 1e-12 else math.inf)
                    worst = max(worst, z)
                    checked += 1
                    if z > 4:
                        bad.append((n, tau, sub, round(z, 2)))
    elapsed = time.perf_counter() - began
    ok = not bad and elapsed < 60
    return ok, f"{checked} subsets, worst |z| = {worst:.2f}, {len(bad)} beyond 4 SE, {elapsed:.1f} s (limit 60 s)"


def criterion_2():
    rng = np.random.default_rng(7)
    worst = 0.0
    identities = 0
    for n in range(1, 6):
        for tau in range(1, 11):
            ps = tuple(float(x) for x in rng.uniform(0.05, 1.0, n))
            cfg = SystemConfig(n, tau, ps, (0.01,) * n)
            for order in itertools.permutations(range(1, n + 1)) if n <= 3 else [tuple(rng.permutation(n) + 1) for _ in range(6)]:
                pi = delivery_probabilities(order, cfg)
                acc = 0.0
                for k, j in enumerate(order, start=1):
                    acc += pi[j - 1] / ps[j - 1]
                    worst = max(worst, abs(acc - tau * (1 - idle_table(order[:k], cfg).idle_fraction)))
                    identities += 1
    cases = [
        (SystemConfig(3, 3, (0.3, 0.6, 0.9), (0.01,) * 3), (2, 3, 1)),
        (SystemConfig(2, 2, (0.5, 0.5), (0.01,) * 2), (1, 2)),
        (SystemConfig(4, 5, (0.2, 0.5, 0.7, 0.95), (0.01,) * 4), (4, 1, 3, 2)),
    ]
    zmax = 0.0
    for i, (cfg, order) in enumerate(cases):
        res = run(RunConfig(cfg, PolicySpec.fixed_order(order), T, seed=i, record_stride=T))
        freq = np.array(res.final_state.delivered_counts) / T
        pi = delivery_probabilities(order, cfg)
        se = np.sqrt(pi * (1 - pi) / T)
        zmax = max(zmax, float(np.max(np.abs(freq - pi) / se)))
    ok = worst <= 1e-10 and zmax <= 4
    return ok, f"{identities} prefix identities, max error {worst:.2e} (limit 1e-10); fixed_order frequencies worst |z| = {zmax:.2f} over {len(cases)} configs"


def _brute_force_y(n: int, tau: int) -> np.ndarray:
    """counts[k, y]: outcome sequences with k successes delivering y packets."""
    cfg = SystemConfig(n, tau, (0.5,) * n, (0.01,) * n)
    state = DebtState.initial(cfg)
    order = tuple(range(1, n + 1))
    counts = np.zeros((tau + 1, n + 1), dtype=np.int64)
    for seq in itertools.product((True, False), repeat=tau):
        tr = simulate_frame(state, order, cfg, forced_outcomes(*seq))
        counts[sum(seq), sum(tr.deliveries)] += 1
    return counts


def criterion_3():
    ps = [round(0.1 * k, 1) for k in range(1, 10)]
    cells = agree_impl = 0
    for n in range(1, 7):
        for tau in range(1, 13):
            counts = _brute_force_y(n, tau)
            for p in ps:
                ks = np.arange(tau + 1)
                weights = p**ks * (1 - p) ** (tau - ks)
                pmf = (counts * weights[:, None]).sum(axis=0)
                cfg = SystemConfig(n, tau, (p,) * n, (0.01,) * n)
                impl = symmetric_delivery_distribution(cfg).pmf
                cells += 1
                agree_impl += bool(np.max(np.abs(pmf - impl)) <= 1e-12)
    rows = compare_full_delivery_forms(range(1, 7), range(1, 13), ps, atol=1e-12)
    ycn_bad = [r for r in rows if not r["y_choose_n_agrees"]]
    nb_bad = [r for r in rows if not r["negative_binomial_agrees"]]
    only_long_frames = all(r["tau"] > r["n"] for r in ycn_bad)

    # Monte Carlo tiebreak on the disagreeing cells N=1, tau=2 and N=2, tau=3 at p=0.5
    rng = np.random.default_rng(3)
    mc_sides = []
    for n, tau in ((1, 2), (2, 3)):
        freq = (rng.binomial(tau, 0.5, T) >= n).mean()
        se = math.sqrt(freq * (1 - freq) / T)
        row = next(r for r in rows if r["n"] == n and r["tau"] == tau and r["p"] == 0.5)
        mc_sides.append(abs(freq - row["binomial_tail"]) <= 4 * se and abs(freq - row["y_choose_n"]) > 4 * se)
    ok = agree_impl == cells and not nb_bad and only_long_frames and all(mc_sides)
    return ok, (
        f"min(N, Bin) pmf matches brute force in {agree_impl}/{cells} cells; "
        f"C(y, N) form of P(y=N) disagrees in {len(ycn_bad)}/{len(rows)} cells (all with tau > N), "
        f"C(y-1, N-1) form agrees everywhere; Monte Carlo sides with min(N, Bin) in {sum(mc_sides)}/2 probes"
    )


def criterion_4():
    worst = 0.0
    for cfg in (UNIT, FRAME):
        for seed in SEEDS:
            res = unit_run(MWDF, seed) if cfg is UNIT else frame_run(MWDF, seed)
            worst = max(worst, res.extrema.spread_max)
    ok = worst <= 1.0
    return ok, f"max_t (max_j d_j - min_j d_j) = {worst:g} over {len(SEEDS)} seeds x 2 configs x {T} frames (limit 1)"


def criterion_5():
    target = UNIT.q / UNIT.p
    tallies = {}
    worst = {}
    for pol in (MWDF, MDF, FIXED):
        errs = [float(np.max(np.abs(unit_run(pol, s).attempt_totals / T - target))) for s in range(10)]
        tallies[pol.label] = sum(e <= 0.01 for e in errs)
        worst[pol.label] = max(errs)
    ok = all(v == 10 for v in tallies.values())
    parts = ", ".join(f"{k} {tallies[k]}/10 (worst {worst[k]:.4f})" for k in tallies)
    return ok, f"|u/T - q/p| <= 0.01: {parts}"


def criterion_6():
    early = [analysis.ssc_stats(unit_run(MWDF, s)).value_at(10_000) for s in SEEDS]
    late = [analysis.ssc_stats(unit_run(MWDF, s)).value_at(T) for s in SEEDS]
    m0, m1 = float(np.median(early)), float(np.median(late))
    ok = m1 < 0.5 * m0
    return ok, f"median block max of gap/phi: {m0:.5f} at 1e4, {m1:.5f} at 1e6, ratio {m1 / m0:.3f} (limit 0.5)"


def criterion_7():
    limit = 1.25 * analysis.theoretical_bounds(UNIT)["mwdf_two_client"]
    passes = 0
    slowest = 0.0
    worst = -math.inf
    for s in SEEDS:
        res = unit_run(MWDF, s)
        stats = analysis.lil_stats(res)
        passes += bool(np.all(stats.debt_max <= limit))
        worst = max(worst, float(stats.debt_max.max()))
        slowest = max(slowest, res.wall_clock_s)
    ok = passes >= 18 and slowest < 5.0
    return ok, f"{passes}/20 seeds with max d_j/phi <= {limit[0]:.5f} (worst {worst:.4f}); slowest run {slowest:.2f} s (limit 5 s)"


def criterion_8():
    sigma = sigma_p_tau(FRAME)
    p = FRAME.reliabilities[0]
    target = sigma / FRAME.n_clients
    lo, hi = 0.5 * target, 1.3 * target
    debt_ok = sum_ok = 0
    values = []
    for s in SEEDS:
        res = frame_run(MWDF, s)
        v = analysis.lil_stats(res).debt_max / p
        values.append(float(v.min()))
        debt_ok += bool(np.all((v >= lo) & (v <= hi)))
        smax, smin = analysis.kolmogorov_sum_stats(res)
        sum_ok += bool(0.5 * sigma <= smax <= 1.3 * sigma and -1.3 * sigma <= smin <= -0.5 * sigma)
    ok = debt_ok >= 16 and sum_ok >= 16
    return ok, (
        f"q = {FRAME.throughputs[0]:g} (exact boundary), sigma/N = {target:.4f}: "
        f"{debt_ok}/20 seeds with max d_j/(p phi) in [{lo:.4f}, {hi:.4f}] (need 16), "
        f"{sum_ok}/20 with sum extrema in [0.5, 1.3] x (+/-sigma); lowest per-seed min_j v_j {min(values):.3f}"
    )


def criterion_9():
    runs = [unit_run(MWDF, s, displaced=True) for s in SEEDS]
    est = analysis.pooled_drift(runs)
    single = analysis.drift_estimate(runs[0])
    zero_start = analysis.drift_estimate(unit_run(MWDF, 0)).count
    predicted = analysis.boundary_drift_formula(UNIT, 1)
    ok = est.count >= 1000 and abs(est.mean - predicted) <= 0.1 and abs(single.mean - predicted) <= 0.1
    return ok, (
        f"kappa = {est.kappa:g}, pooled mean dZ = {est.mean:.4f} over {est.count} events "
        f"(seed 0 alone: {single.mean:.4f} over {single.count}); predicted {predicted:g} +/- 0.1; "
        f"zero-debt start gives {zero_start} events"
    )


def criterion_10():
    p = FRAME.reliabilities[0]
    wins = 0
    for s in SEEDS:
        mw = float(np.max(analysis.seed_cost(frame_run(MWDF, s), p)[0]))
        fx = float(np.max(analysis.seed_cost(frame_run(FIXED, s), p)[0]))
        wins += mw < fx
    table = analysis.policy_cost({"mwdf": [frame_run(MWDF, s) for s in SEEDS], "fixed_order": [frame_run(FIXED, s) for s in SEEDS]})
    cost, floor = table["mwdf"].cost, table["mwdf"].floor
    ok = wins >= 18 and abs(cost - floor) <= 0.3 * floor
    return ok, (
        f"MWDF cheaper than fixed_order in {wins}/20 paired seeds; MWDF cost {cost:.4f} vs floor {floor:.4f} "
        f"(ratio {cost / floor:.3f}, limit within 30%); fixed_order cost {table['fixed_order'].cost:.1f}"
    )


_EXPERIMENTS = {
    "unit": ("[0.5, 0.5]", 1, "throughputs = [0.25, 0.25]", ["mwdf", "mdf", "fixed_order"], ""),
    "frame": ("[0.5, 0.5]", 2, "split_weights = [0.5, 0.5]", ["mwdf", "fixed_order"], ""),
    "drift": ("[0.5, 0.5]", 1, "throughputs = [0.25, 0.25]", ["mwdf"], "initial_frame = 4000\ninitial_delivered = [1000, 0]\n"),
    "pi": ("[0.3, 0.6, 0.9]", 3, "throughputs = [0.01, 0.01, 0.01]", ["fixed_order"], ""),
}


def criterion_11(seeds=(0, 1)):
    identical = total = 0
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        for name, (ps, tau, q, policies, extra) in _EXPERIMENTS.items():
            n = ps.count(",") + 1
            text = f"[system]\nn_clients = {n}\nperiod = {tau}\nreliabilities = {ps}\n{q}\n"
            for pol in policies:
                text += f'\n[[policies]]\nkind = "{pol}"\n'
                if pol == "fixed_order":
                    text += f"order = {list(range(1, n + 1))}\n"
            text += f"\n[run]\nframes = {T}\nseeds = {list(seeds)}\nssc_extra_edges = [10000]\n{extra}"
            path = root / f"{name}.toml"
            path.write_text(text)
            for rep in ("a", "b"):
                with contextlib.redirect_stdout(io.StringIO()):
                    code = cli.main(["simulate", "--config", str(path), "--out", str(root / name / rep)])
                if code != 0:
                    return False, f"simulate failed for {name}"
            for csv in sorted((root / name / "a").glob("*.csv")):
                total += 1
                identical += csv.read_bytes() == (root / name / "b" / csv.name).read_bytes()
    ok = identical == total and total > 0
    return ok, f"{identical}/{total} CSV traces byte-identical on rerun (T = {T}, stride 64)"


CRITERIA = {f"C{i}": globals()[f"criterion_{i}"] for i in range(1, 12)}


@pytest.mark.parametrize("name", list(CRITERIA))
def test_criterion(name, acceptance):
    passed, detail = CRITERIA[name]()
    acceptance(name, passed, detail)
    print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    assert passed, detail


if __name__ == "__main__":
    failed = 0
    for name, fn in CRITERIA.items():
        passed, detail = fn()
        failed += not passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}", flush=True)
    sys.exit(1 if failed else 0)
