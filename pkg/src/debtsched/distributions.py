"""Exact finite distributions built from sums of independent geometric attempt counts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from debtsched.kernels import convolve_geometric
from debtsched.model import ConfigError, SystemConfig


class AttemptSumPmf(NamedTuple):
    """``mass[k] = P(X = k)`` for k = 0..tau; ``overflow = P(X > tau)``."""

    mass: np.ndarray
    overflow: float


@dataclass(frozen=True)
class SubsetIdleTable:
    subset: frozenset[int]
    idle_pmf: np.ndarray  # index k -> P(exactly k idle slots)
    idle_fraction: float
    idle_variance: float

    @property
    def idle_std(self) -> float:
        return math.sqrt(self.idle_variance)


@dataclass(frozen=True)
class DeliveryCountDistribution:
    pmf: np.ndarray  # index y -> P(y packets delivered in a frame)
    mean: float
    variance: float


@dataclass(frozen=True)
class DiffusionConstants:
    v: np.ndarray
    c: np.ndarray
    sqrt_c: np.ndarray


def _check_subset(subset: Iterable[int], config: SystemConfig) -> tuple[int, ...]:
    ids = tuple(sorted(set(int(i) for i in subset)))
    for i in ids:
        if not 1 <= i <= config.n_clients:
            raise ValueError(f"client id {i} outside 1..{config.n_clients}")
    return ids


def truncated_attempt_sum(reliabilities: Sequence[float], period: int) -> AttemptSumPmf:
    mass = np.zeros(period + 1)
    mass[0] = 1.0
    overflow = 0.0
    for p in reliabilities:
        mass, overflow = convolve_geometric(mass, overflow, float(p))
    return AttemptSumPmf(np.asarray(mass), float(overflow))


def attempt_sum_pmf(subset: Iterable[int], config: SystemConfig) -> AttemptSumPmf:
    ids = _check_subset(subset, config)
    if not ids:
        raise ValueError("attempt_sum_pmf needs a non-empty subset")
    return truncated_attempt_sum([config.reliabilities[i - 1] for i in ids], config.period)


def idle_from_attempt_sum(pmf: AttemptSumPmf, subset: frozenset[int] = frozenset()) -> SubsetIdleTable:
    tau = len(pmf.mass) - 1
    # k idle slots <=> X = tau - k; X >= tau all lands on k = 0
    idle = pmf.mass[::-1].copy()
    idle[0] += pmf.overflow
    ks = np.arange(tau + 1, dtype=np.float64)
    mean = 0.0
    second = 0.0
    for k in range(tau + 1):
        mean += ks[k] * idle[k]
    for k in range(tau + 1):
        second += (ks[k] - mean) ** 2 * idle[k]
    return SubsetIdleTable(frozenset(subset), idle, mean / tau, second)


def idle_table(subset: Iterable[int], config: SystemConfig) -> SubsetIdleTable:
    """Distribution of idle slots when only ``subset`` is served to completion.

    The empty subset idles the whole frame (I = 1, zero variance).
    """
    ids = _check_subset(subset, config)
    tau = config.period
    if not ids:
        pmf = np.zeros(tau + 1)
        pmf[tau] = 1.0
        return SubsetIdleTable(frozenset(), pmf, 1.0, 0.0)
    return idle_from_attempt_sum(attempt_sum_pmf(ids, config), frozenset(ids))


def delivery_probabilities(order: Sequence[int], config: SystemConfig) -> np.ndarray:
    """Per-client delivery probability under a fixed in-frame service order.

    The expected slots spent on the first k clients of ``order`` equal
    tau * (1 - I_prefix), and each client's expected slots are pi_j / p_j, so
    pi follows by differencing prefix idle fractions. Returned in client-id
    order (index j - 1).
    """
    order = tuple(int(o) for o in order)
    if sorted(order) != list(config.clients):
        raise ValueError(f"{order} is not a permutation of 1..{config.n_clients}")
    tau = config.period
    pi = np.zeros(config.n_clients)
    mass = np.zeros(tau + 1)
    mass[0] = 1.0
    overflow = 0.0
    busy_prev = 0.0  # tau * (1 - I_empty)
    for client in order:
        p = config.reliabilities[client - 1]
        mass, overflow = convolve_geometric(mass, overflow, p)
        busy = tau * (1.0 - idle_from_attempt_sum(AttemptSumPmf(np.asarray(mass), overflow)).idle_fraction)
        pi[client - 1] = p * (busy - busy_prev)
        busy_prev = busy
    return pi


def _binomial_pmf(n: int, k: int, p: float) -> float:
    return math.comb(n, k) * p**k * (1.0 - p) ** (n - k)


def symmetric_delivery_distribution(config: SystemConfig) -> DeliveryCountDistribution:
    """Packets delivered per frame under any non-idling policy, equal reliabilities.

    Each non-idle slot is an independent Bernoulli(p) trial, so the count is
    min(N, Binomial(tau, p)).
    """
    if len(set(config.reliabilities)) != 1:
        raise ConfigError("symmetric_delivery_distribution needs equal reliabilities")
    n, tau, p = config.n_clients, config.period, config.reliabilities[0]
    pmf = np.zeros(n + 1)
    for x in range(min(n, tau + 1)):
        pmf[x] = _binomial_pmf(tau, x, p)
    if tau >= n:
        tail = 0.0
        for x in range(n, tau + 1):
            tail += _binomial_pmf(tau, x, p)
        pmf[n] = tail
    ys = np.arange(n + 1, dtype=np.float64)
    mean = float(np.dot(ys, pmf))
    var = float(np.dot((ys - mean) ** 2, pmf))
    return DeliveryCountDistribution(pmf, mean, var)


def full_delivery_mass(n: int, tau: int, p: float, form: str = "binomial_tail") -> float:
    """P(all n packets delivered in a frame of tau slots), three candidate closed forms.

    ``binomial_tail``: P(Binomial(tau, p) >= n).
    ``negative_binomial``: sum_{y=n}^{tau} C(y-1, n-1) p^n (1-p)^(y-n).
    ``y_choose_n``: sum_{y=n}^{tau} C(y, n) p^n (1-p)^(y-n), a variant with
    C(y, n) coefficients that overcounts once tau > n; kept only so the
    disagreement can be tabulated.
    """
    if form == "binomial_tail":
        return sum(_binomial_pmf(tau, x, p) for x in range(n, tau + 1))
    if form == "negative_binomial":
        return sum(math.comb(y - 1, n - 1) * p**n * (1.0 - p) ** (y - n) for y in range(n, tau + 1))
    if form == "y_choose_n":
        return sum(math.comb(y, n) * p**n * (1.0 - p) ** (y - n) for y in range(n, tau + 1))
    raise ValueError(f"unknown form {form!r}")


def compare_full_delivery_forms(
    n_values: Iterable[int], tau_values: Iterable[int], p_values: Iterable[float], atol: float = 1e-12
) -> list[dict]:
    """Tabulate the three full-delivery forms over a grid and flag disagreements."""
    rows = []
    for n in n_values:
        for tau in tau_values:
            for p in p_values:
                ref = full_delivery_mass(n, tau, p, "binomial_tail")
                nb = full_delivery_mass(n, tau, p, "negative_binomial")
                ycn = full_delivery_mass(n, tau, p, "y_choose_n")
                rows.append(
                    {
                        "n": n,
                        "tau": tau,
                        "p": p,
                        "binomial_tail": ref,
                        "negative_binomial": nb,
                        "y_choose_n": ycn,
                        "negative_binomial_agrees": abs(nb - ref) <= atol,
                        "y_choose_n_agrees": abs(ycn - ref) <= atol,
                    }
                )
    return rows


def sigma_p_tau(config: SystemConfig) -> float:
    """Standard deviation of the per-frame change in sum_j d_j / p (symmetric case).

    That change is (N q - y) / p, so its spread is sqrt(Var y) / p. The
    standard deviation (not the variance) is what scales the iterated
    logarithm limit of the summed debts.
    """
    if not config.is_symmetric:
        raise ConfigError("sigma_p_tau needs equal reliabilities and throughputs")
    dist = symmetric_delivery_distribution(config)
    return math.sqrt(dist.variance) / config.reliabilities[0]


def diffusion_constants(config: SystemConfig) -> DiffusionConstants:
    p = config.p
    q = config.q
    v = (1.0 - p) / p
    c = (q / p) * v
    return DiffusionConstants(v, c, np.sqrt(c))
