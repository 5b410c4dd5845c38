"""Iterated-logarithm diagnostics on simulated runs.

limsup / liminf are proxied by running extrema over [t_min, T]; the
engine maintains those every frame, so nothing here depends on the
recording stride unless a different ``t_min`` is requested.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from debtsched import engine
from debtsched.distributions import (
    delivery_probabilities,
    diffusion_constants,
    idle_table,
    sigma_p_tau,
)
from debtsched.feasibility import check_feasibility
from debtsched.model import ConfigError, SystemConfig

HYPERPLANE_TOLERANCE = 1e-9


@dataclass(eq=False)
class LilStats:
    t_min: int
    t_max: int
    debt_max: np.ndarray  # running max of d_j / phi
    debt_min: np.ndarray
    martingale_max: np.ndarray  # running max of M_j / phi
    sum_max: float  # running max of sum_j d_j / (p_j phi)
    sum_min: float
    bounds: dict[str, np.ndarray]  # per-client asymptotic values for d_j / phi
    martingale_limit: np.ndarray  # sqrt(c_j)
    decimated: bool = False  # True when recomputed from recorded rows only

    def within(self, name: str, factor: float = 1.0) -> np.ndarray:
        return self.debt_max <= factor * self.bounds[name]

    def to_dict(self) -> dict:
        return {
            "t_min": self.t_min,
            "t_max": self.t_max,
            "debt_max": self.debt_max.tolist(),
            "debt_min": self.debt_min.tolist(),
            "martingale_max": self.martingale_max.tolist(),
            "martingale_limit": self.martingale_limit.tolist(),
            "sum_max": self.sum_max,
            "sum_min": self.sum_min,
            "bounds": {k: v.tolist() for k, v in self.bounds.items()},
            # flagged, not enforced: finite windows can overshoot an asymptotic bound
            "exceeds": {k: (self.debt_max > v).tolist() for k, v in self.bounds.items()},
            "decimated": self.decimated,
        }


def theoretical_bounds(config: SystemConfig) -> dict[str, np.ndarray]:
    """Asymptotic values for limsup d_j / phi that apply to ``config``.

    ``mwdf_two_client``: p_j (sqrt c_1 + sqrt c_2) / 2, two clients, single-slot frames.
    ``mdf_two_client_frame``: p_j (sqrt c_1 + sqrt c_2 + sigma_I) / 2, two clients, tau > 1.
    ``mwdf_unit_frame``: p_j sum_k sqrt c_k / N, single-slot frames, N > 2.
    ``symmetric_limit``: p sigma_{p,tau} / N, equal reliabilities and throughputs (an equality).
    All are stated for throughputs on the full-set face.
    """
    p = config.p
    root_c = diffusion_constants(config).sqrt_c
    n, tau = config.n_clients, config.period
    out: dict[str, np.ndarray] = {}
    if n == 2 and tau == 1:
        out["mwdf_two_client"] = p * (root_c[0] + root_c[1]) / 2.0
    elif n == 2:
        sigma_idle = idle_table(config.clients, config).idle_std
        out["mdf_two_client_frame"] = p * (root_c[0] + root_c[1] + sigma_idle) / 2.0
    if tau == 1 and n > 2:
        out["mwdf_unit_frame"] = p * float(np.sum(root_c)) / n
    if config.is_symmetric:
        out["symmetric_limit"] = p * sigma_p_tau(config) / n
    return out


def lil_stats(result: engine.RunResult, config: SystemConfig | None = None, t_min: int | None = None) -> LilStats:
    config = config or result.system
    tracked = result.extrema
    t_min = tracked.t_min if t_min is None else int(t_min)
    if t_min < 16:
        raise ValueError(f"t_min must be >= 16, got {t_min}")
    t_max = result.final_state.frame_index
    if t_min == tracked.t_min:
        if tracked.empty:
            raise ValueError(f"no frames in the window [{t_min}, {t_max}]")
        dmax, dmin, mmax = tracked.debt_max.copy(), tracked.debt_min.copy(), tracked.martingale_max.copy()
        smax, smin = tracked.sum_max, tracked.sum_min
        decimated = False
    else:
        series = result.series
        keep = series.t >= t_min
        if not keep.any():
            raise ValueError(f"no recorded frames in the window [{t_min}, {t_max}]")
        ph = series.phi()[keep][:, None]
        d = series.debts(config)[keep] / ph
        m = series.martingale(config)[keep] / ph
        total = (series.debts(config)[keep] / config.p[None, :]).sum(axis=1) / ph[:, 0]
        dmax, dmin, mmax = d.max(axis=0), d.min(axis=0), m.max(axis=0)
        smax, smin = float(total.max()), float(total.min())
        decimated = result.run_config.stride > 1
    return LilStats(
        t_min=t_min,
        t_max=t_max,
        debt_max=dmax,
        debt_min=dmin,
        martingale_max=mmax,
        sum_max=smax,
        sum_min=smin,
        bounds=theoretical_bounds(config),
        martingale_limit=diffusion_constants(config).sqrt_c,
        decimated=decimated,
    )


@dataclass(eq=False)
class SscStats:
    """Block maxima of max_{j,k} |d_j/p_j - d_k/p_k| / phi(t) on a geometric grid.

    ``values[k]`` covers completed-frame counts in (grid[k-1], grid[k]]
    (the first block starts just after t_min).
    """

    grid: np.ndarray
    values: np.ndarray
    slope: float  # least-squares slope of log(value) against log(t)
    max_debt_gap: int | None  # symmetric configs: max_t (max_j d_j - min_j d_j)

    def value_at(self, t: int) -> float:
        hits = np.nonzero(self.grid == t)[0]
        if hits.size == 0:
            raise KeyError(f"{t} is not a grid point")
        return float(self.values[hits[0]])

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
            "slope": self.slope,
            "max_debt_gap": self.max_debt_gap,
        }


def _loglog_slope(t: np.ndarray, y: np.ndarray) -> float:
    keep = y > 0
    if keep.sum() < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(t[keep].astype(np.float64)), np.log(y[keep]), 1)
    return float(slope)


def ssc_stats(result: engine.RunResult, config: SystemConfig | None = None) -> SscStats:
    config = config or result.system
    grid = result.ssc_edges[1:]
    values = result.ssc_block_max[1:].copy()
    gap = None
    if config.is_symmetric:
        # equal throughputs: d_j - d_k = s_k - s_j is an integer
        gap = int(round(result.extrema.spread_max))
    return SscStats(grid, values, _loglog_slope(grid, values), gap)


@dataclass
class DriftSide:
    leader: int  # client whose weighted debt is ahead
    count: int
    mean: float | None
    stderr: float | None
    predicted: float

    @property
    def inconclusive(self) -> bool:
        return self.count == 0


@dataclass
class DriftEstimate:
    """Empirical E[Z(t+1) - Z(t) | Z(t) > kappa] for Z = |d_2/p_2 - d_1/p_1|."""

    kappa: float
    sides: list[DriftSide]
    count: int
    mean: float | None
    predicted: float | None  # pooled prediction when both sides agree

    @property
    def inconclusive(self) -> bool:
        return self.count == 0

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "count": self.count,
            "mean": self.mean,
            "predicted": self.predicted,
            "inconclusive": self.inconclusive,
            "sides": [dataclasses.asdict(s) for s in self.sides],
        }


def predicted_drift(config: SystemConfig, leader: int) -> float:
    """Exact E[Delta Z] when ``leader`` is served first and stays ahead.

    With order (leader, other): E[Delta Z] = (q_l - pi_l)/p_l - (q_o - pi_o)/p_o.
    """
    if config.n_clients != 2:
        raise ValueError("drift prediction is defined for two clients")
    other = 3 - leader
    pi = delivery_probabilities((leader, other), config)
    p, q = config.reliabilities, config.throughputs
    lead, trail = leader - 1, other - 1
    return float((q[lead] - pi[lead]) / p[lead] - (q[trail] - pi[trail]) / p[trail])


def boundary_drift_formula(config: SystemConfig, leader: int) -> float:
    """Closed-form drift on the full-set face.

    Single-slot frames: -2 q_o / p_o; longer frames: 2 (q_l/p_l - tau (1 - I_{leader})).
    """
    other = 3 - leader
    p, q = config.reliabilities, config.throughputs
    if config.period == 1:
        return -2.0 * q[other - 1] / p[other - 1]
    single = idle_table([leader], config).idle_fraction
    return 2.0 * (q[leader - 1] / p[leader - 1] - config.period * (1.0 - single))


def drift_estimate(source: engine.RunResult | engine.RunConfig, kappa: float | None = None) -> DriftEstimate:
    """Conditional drift of the two-client weighted-debt gap.

    ``source`` is a finished run (its tally must use the same threshold) or
    a RunConfig to simulate with threshold ``kappa``. Zero conditioning
    frames give an inconclusive estimate rather than an error.
    """
    if isinstance(source, engine.RunConfig):
        cfg = source if kappa is None else dataclasses.replace(source, drift_threshold=float(kappa))
        if cfg.kappa <= 0:
            raise ValueError("drift threshold must be > 0")
        source = engine.run(cfg)
    config = source.system
    tally = source.drift
    if kappa is not None and float(kappa) != tally.kappa:
        raise ValueError(f"run tallied drift above {tally.kappa}, not {kappa}; rerun with that threshold")
    return _estimate_from_tally(config, tally)


def pooled_drift(results: Sequence[engine.RunResult]) -> DriftEstimate:
    """Drift estimate from the summed tallies of several runs of one config."""
    if not results:
        raise ValueError("no runs to pool")
    config = results[0].system
    kappas = {r.drift.kappa for r in results}
    if len(kappas) != 1:
        raise ValueError(f"runs use different drift thresholds {sorted(kappas)}")
    tally = engine.DriftTally(
        kappas.pop(),
        sum(r.drift.count for r in results),
        sum(r.drift.total for r in results),
        sum(r.drift.total_sq for r in results),
    )
    return _estimate_from_tally(config, tally)


def _estimate_from_tally(config: SystemConfig, tally: engine.DriftTally) -> DriftEstimate:
    if config.n_clients != 2:
        raise ValueError("drift_estimate needs exactly two clients")
    if tally.kappa <= 0:
        raise ValueError("run was made with drift tallying disabled")
    sides = []
    for side, leader in ((0, 2), (1, 1)):
        n = int(tally.count[side])
        mean = stderr = None
        if n:
            mean = float(tally.total[side] / n)
            if n > 1:
                var = max(float(tally.total_sq[side] / n) - mean * mean, 0.0) * n / (n - 1)
                stderr = math.sqrt(var / n)
        sides.append(DriftSide(leader, n, mean, stderr, predicted_drift(config, leader)))
    count = int(tally.count.sum())
    mean = float(tally.total.sum() / count) if count else None
    preds = {round(s.predicted, 12) for s in sides}
    pooled = sides[0].predicted if len(preds) == 1 else None
    return DriftEstimate(tally.kappa, sides, count, mean, pooled)


def _require_hyperplane(config: SystemConfig) -> None:
    if not config.is_symmetric:
        raise ConfigError("needs equal reliabilities and throughputs")
    full = tuple(config.clients)
    slack = check_feasibility(config, subsets=[full]).slack[full]
    if abs(slack) > HYPERPLANE_TOLERANCE:
        raise ConfigError(f"throughputs are not on the full-set face (slack {slack:.3g})")


def kolmogorov_sum_stats(result: engine.RunResult, config: SystemConfig | None = None) -> tuple[float, float]:
    """Running (max, min) of sum_j d_j / (p phi(t)); both tend to +/- sigma_{p,tau}."""
    config = config or result.system
    _require_hyperplane(config)
    return result.extrema.sum_max, result.extrema.sum_min


@dataclass
class PolicyCost:
    policy: str
    v: np.ndarray  # seed-averaged running max of d_j / (p phi)
    w: np.ndarray  # seed-averaged running min
    cost: float  # max_j v_j
    per_seed_cost: list[float]
    floor: float  # sigma_{p,tau} / N
    seeds: int = field(default=0)

    @property
    def v_sum(self) -> float:
        return float(self.v.sum())

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "v": self.v.tolist(),
            "w": self.w.tolist(),
            "v_sum": self.v_sum,
            "cost": self.cost,
            "floor": self.floor,
            "cost_over_floor": self.cost / self.floor if self.floor > 0 else None,
            "per_seed_cost": self.per_seed_cost,
            "seeds": self.seeds,
        }


def seed_cost(result: engine.RunResult, p: float) -> tuple[np.ndarray, np.ndarray]:
    """(max, min) over the window of d_j / (p phi) for one run."""
    if result.extrema.empty:
        raise ValueError("run has no frames past t_min")
    return result.extrema.debt_max / p, result.extrema.debt_min / p


def policy_cost(
    results: Mapping[str, Sequence[engine.RunResult]], config: SystemConfig | None = None
) -> dict[str, PolicyCost]:
    """Fairness cost max_j v_j per policy, with the floor sigma_{p,tau} / N.

    ``results`` maps a policy label to its runs over seeds.
    """
    if len(results) < 2:
        raise ValueError("policy_cost compares at least two policies")
    if config is None:
        config = next(iter(results.values()))[0].system
    if not config.is_symmetric:
        raise ConfigError("policy_cost needs equal reliabilities and throughputs")
    p = config.reliabilities[0]
    floor = sigma_p_tau(config) / config.n_clients
    out = {}
    for label, runs in results.items():
        if not runs:
            raise ValueError(f"policy {label} has no runs")
        vs, ws = zip(*(seed_cost(r, p) for r in runs))
        v = np.mean(np.vstack(vs), axis=0)
        w = np.mean(np.vstack(ws), axis=0)
        per_seed = [float(np.max(x)) for x in vs]
        out[label] = PolicyCost(label, v, w, float(np.max(v)), per_seed, floor, len(runs))
    return out


def summarize(result: engine.RunResult, config: SystemConfig | None = None) -> dict:
    """JSON-ready analysis of one run: LIL extrema, SSC series, drift tally."""
    config = config or result.system
    out: dict = {}
    try:
        out["lil"] = lil_stats(result, config).to_dict()
    except ValueError as exc:
        out["lil"] = {"error": str(exc)}
    out["ssc"] = ssc_stats(result, config).to_dict()
    if config.n_clients == 2 and result.drift.kappa > 0:
        out["drift"] = drift_estimate(result).to_dict()
    if config.is_symmetric:
        try:
            _require_hyperplane(config)
        except ConfigError:
            pass
        else:
            smax, smin = kolmogorov_sum_stats(result, config)
            sigma = sigma_p_tau(config)
            out["kolmogorov"] = {"sum_max": smax, "sum_min": smin, "sigma_p_tau": sigma}
    return out


def trace_analysis(table, config: SystemConfig, t_min: int = engine.DEFAULT_T_MIN) -> dict:
    """Re-analysis of a recorded trace (a ``traces.TraceTable``).

    Only the recorded rows are visible, so extrema are over the recorded
    frame boundaries; for a decimated trace they under-read the per-frame
    values the engine tracks.
    """
    if table.n_clients != config.n_clients:
        raise ConfigError(f"trace has {table.n_clients} clients, config has {config.n_clients}")
    if t_min < 16:
        raise ValueError(f"t_min must be >= 16, got {t_min}")
    keep = table.t >= t_min
    if not keep.any():
        raise ValueError(f"no recorded frames in the window [{t_min}, {int(table.t[-1])}]")
    ph = table.phi[keep][:, None]
    d = table.d[keep]
    x = d / config.p[None, :]
    gaps = (x.max(axis=1) - x.min(axis=1)) / ph[:, 0]
    total = x.sum(axis=1) / ph[:, 0]
    strides = np.diff(table.t)
    return {
        "rows": int(len(table.t)),
        "t_first": int(table.t[0]),
        "t_last": int(table.t[-1]),
        "decimated": bool(strides.size and strides.max() > 1),
        "t_min": int(t_min),
        "debt_max": (d / ph).max(axis=0).tolist(),
        "debt_min": (d / ph).min(axis=0).tolist(),
        "martingale_max": (table.M[keep] / ph).max(axis=0).tolist(),
        "sum_max": float(total.max()),
        "sum_min": float(total.min()),
        "weighted_gap_max": float(gaps.max()),
        "weighted_gap_final": float(gaps[-1]),
        "spread_max": float((table.d.max(axis=1) - table.d.min(axis=1)).max()),
        "bounds": {k: v.tolist() for k, v in theoretical_bounds(config).items()},
        "martingale_limit": diffusion_constants(config).sqrt_c.tolist(),
    }
