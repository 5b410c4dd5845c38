"""Rate-region membership over all subset workload constraints."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from debtsched.distributions import AttemptSumPmf, idle_from_attempt_sum, truncated_attempt_sum
from debtsched.kernels import convolve_geometric
from debtsched.model import ConfigError, ResourceLimitError, SystemConfig

MAX_ENUMERATED_CLIENTS = 20
DEFAULT_TOLERANCE = 1e-9

Subset = tuple[int, ...]


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    slack: dict[Subset, float]
    tight_subsets: list[Subset]
    violated_subsets: list[Subset]
    tolerance: float = DEFAULT_TOLERANCE
    capacity: dict[Subset, float] = field(default_factory=dict)  # tau * (1 - I_S)

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "tolerance": self.tolerance,
            "subsets": [
                {"subset": list(s), "capacity": self.capacity.get(s), "slack": v}
                for s, v in self.slack.items()
            ],
            "tight_subsets": [list(s) for s in self.tight_subsets],
            "violated_subsets": [list(s) for s in self.violated_subsets],
        }


def subset_capacities(reliabilities: Sequence[float], period: int) -> dict[Subset, float]:
    """tau * (1 - I_S) for every subset, by depth-first incremental convolution.

    Each subset's attempt-sum pmf extends its parent's by one client, so
    only N pmfs are alive at a time. Keys are sorted 1-based id tuples in
    mask order.
    """
    n = len(reliabilities)
    out: dict[Subset, float] = {(): 0.0}
    start = np.zeros(period + 1)
    start[0] = 1.0

    def visit(first: int, ids: Subset, mass, overflow: float) -> None:
        for i in range(first, n):
            m, o = convolve_geometric(mass, overflow, float(reliabilities[i]))
            child = ids + (i + 1,)
            table = idle_from_attempt_sum(AttemptSumPmf(np.asarray(m), o))
            out[child] = period * (1.0 - table.idle_fraction)
            visit(i + 1, child, m, o)

    visit(0, (), start, 0.0)
    return dict(sorted(out.items(), key=lambda kv: sum(1 << (i - 1) for i in kv[0])))


def _capacities_for(config: SystemConfig, subsets: Iterable[Iterable[int]] | None) -> dict[Subset, float]:
    if subsets is None:
        if config.n_clients > MAX_ENUMERATED_CLIENTS:
            raise ResourceLimitError(
                f"exhaustive enumeration is capped at {MAX_ENUMERATED_CLIENTS} clients "
                f"(got {config.n_clients}); pass explicit candidate subsets"
            )
        return subset_capacities(config.reliabilities, config.period)
    caps: dict[Subset, float] = {(): 0.0}
    for raw in subsets:
        ids = tuple(sorted(set(int(i) for i in raw)))
        if any(not 1 <= i <= config.n_clients for i in ids):
            raise ValueError(f"subset {ids} has ids outside 1..{config.n_clients}")
        if ids in caps:
            continue
        pmf = truncated_attempt_sum([config.reliabilities[i - 1] for i in ids], config.period)
        caps[ids] = config.period * (1.0 - idle_from_attempt_sum(pmf).idle_fraction)
    return caps


def check_feasibility(
    config: SystemConfig,
    tolerance: float = DEFAULT_TOLERANCE,
    subsets: Iterable[Iterable[int]] | None = None,
) -> FeasibilityReport:
    """Slack tau(1 - I_S) - sum_{i in S} q_i/p_i for every subset S.

    All 2^N subsets are enumerated unless ``subsets`` is given. The empty
    subset always has zero slack and is never reported as tight.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    caps = _capacities_for(config, subsets)
    ratio = config.q / config.p
    slack: dict[Subset, float] = {}
    tight: list[Subset] = []
    violated: list[Subset] = []
    for ids, cap in caps.items():
        load = 0.0
        for i in ids:
            load += ratio[i - 1]
        value = cap - load
        slack[ids] = value
        if not ids:
            continue
        if value < -tolerance:
            violated.append(ids)
        elif abs(value) <= tolerance:
            tight.append(ids)
    return FeasibilityReport(not violated, slack, tight, violated, tolerance, caps)


@dataclass(frozen=True)
class BoundaryPoint:
    throughputs: tuple[float, ...]
    report: FeasibilityReport

    @property
    def other_tight_subsets(self) -> list[Subset]:
        full = tuple(range(1, len(self.throughputs) + 1))
        return [s for s in self.report.tight_subsets if s != full]


def boundary_throughputs(
    reliabilities: Sequence[float],
    period: int,
    split_weights: Sequence[float],
    tolerance: float = DEFAULT_TOLERANCE,
) -> BoundaryPoint:
    """Throughputs on the full-set face: q_j = w_j * tau * p_j * (1 - I_full).

    The full-set constraint then holds with equality. The attached report
    lists any other tight or violated subset so the caller can move the
    split weights inward.
    """
    p = np.asarray(reliabilities, dtype=np.float64)
    w = np.asarray(split_weights, dtype=np.float64)
    if w.shape != p.shape:
        raise ValueError(f"need {len(p)} split weights, got {len(w)}")
    if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-12:
        raise ValueError(f"split weights must be >= 0 and sum to 1, got {list(w)}")
    full = full_idle_fraction(p, period)
    capacity = period * (1.0 - full)
    q = w * capacity * p
    for i, qi in enumerate(q, start=1):
        if not 0.0 < qi < 1.0:
            raise ConfigError(f"boundary throughput for client {i} is {float(qi)!r}, outside (0, 1)")
    config = SystemConfig(len(p), period, tuple(p), tuple(float(x) for x in q))
    n = len(p)
    subsets = None if n <= MAX_ENUMERATED_CLIENTS else [tuple(range(1, n + 1))]
    return BoundaryPoint(config.throughputs, check_feasibility(config, tolerance, subsets))


def full_idle_fraction(reliabilities: Sequence[float], period: int) -> float:
    """Idle fraction I of the full client set."""
    return idle_from_attempt_sum(truncated_attempt_sum(reliabilities, period)).idle_fraction


def boundary_config(
    reliabilities: Sequence[float],
    period: int,
    split_weights: Sequence[float] | None = None,
    weights: Sequence[float] | None = None,
) -> SystemConfig:
    """A SystemConfig sitting on the full-set face (equal split by default)."""
    n = len(reliabilities)
    split = [1.0 / n] * n if split_weights is None else list(split_weights)
    point = boundary_throughputs(reliabilities, period, split)
    return SystemConfig(n, period, tuple(reliabilities), point.throughputs, weights)
