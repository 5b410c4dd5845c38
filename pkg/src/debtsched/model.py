"""Problem instances, per-frame records and debt bookkeeping.

Client ids are 1-based everywhere in the public API; arrays are indexed
0-based internally (client ``j`` lives at index ``j - 1``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid problem instance or experiment definition."""


class ContractViolation(RuntimeError):
    """A caller broke an operation's precondition."""


class ResourceLimitError(RuntimeError):
    """The requested computation exceeds a documented size cap."""


def _as_tuple(values: Sequence[float], name: str, n: int) -> tuple[float, ...]:
    out = tuple(float(v) for v in values)
    if len(out) != n:
        raise ConfigError(f"{name}: expected {n} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class SystemConfig:
    """One problem instance: N clients sharing frames of ``period`` slots.

    ``reliabilities`` are the per-slot success probabilities p_i,
    ``throughputs`` the required delivery ratios q_i and ``weights`` the
    debt weights alpha_i (all ones unless given).
    """

    n_clients: int
    period: int
    reliabilities: tuple[float, ...]
    throughputs: tuple[float, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if int(self.n_clients) != self.n_clients or self.n_clients < 1:
            raise ConfigError(f"n_clients must be a positive integer, got {self.n_clients!r}")
        if int(self.period) != self.period or self.period < 1:
            raise ConfigError(f"period must be a positive integer, got {self.period!r}")
        n = int(self.n_clients)
        object.__setattr__(self, "n_clients", n)
        object.__setattr__(self, "period", int(self.period))
        p = _as_tuple(self.reliabilities, "reliabilities", n)
        q = _as_tuple(self.throughputs, "throughputs", n)
        w = (1.0,) * n if self.weights is None else _as_tuple(self.weights, "weights", n)
        for i, (pi, qi, wi) in enumerate(zip(p, q, w), start=1):
            if not 0.0 < pi <= 1.0:
                raise ConfigError(f"reliabilities[client {i}] = {pi!r} not in (0, 1]")
            if not 0.0 < qi < 1.0:
                raise ConfigError(f"throughputs[client {i}] = {qi!r} not in (0, 1)")
            if not (wi > 0.0 and np.isfinite(wi)):
                raise ConfigError(f"weights[client {i}] = {wi!r} must be positive")
        object.__setattr__(self, "reliabilities", p)
        object.__setattr__(self, "throughputs", q)
        object.__setattr__(self, "weights", w)

    @property
    def p(self) -> np.ndarray:
        return np.array(self.reliabilities, dtype=np.float64)

    @property
    def q(self) -> np.ndarray:
        return np.array(self.throughputs, dtype=np.float64)

    @property
    def alpha(self) -> np.ndarray:
        return np.array(self.weights, dtype=np.float64)

    @property
    def clients(self) -> range:
        return range(1, self.n_clients + 1)

    @property
    def is_symmetric(self) -> bool:
        """Equal reliabilities and equal throughputs across all clients."""
        return len(set(self.reliabilities)) == 1 and len(set(self.throughputs)) == 1

    def with_throughputs(self, throughputs: Sequence[float]) -> SystemConfig:
        return SystemConfig(self.n_clients, self.period, self.reliabilities, tuple(throughputs), self.weights)

    def to_dict(self) -> dict:
        return {
            "n_clients": self.n_clients,
            "period": self.period,
            "reliabilities": list(self.reliabilities),
            "throughputs": list(self.throughputs),
            "weights": list(self.weights),
        }


@dataclass(frozen=True)
class DebtState:
    """Debts at the start of frame ``frame_index`` (after that many frames).

    ``debts`` is always re-derived as ``t * q - s`` from the integer
    delivery counts, so it never accumulates rounding drift.
    """

    frame_index: int
    delivered_counts: tuple[int, ...]
    debts: tuple[float, ...] = field(default=())

    @classmethod
    def initial(cls, config: SystemConfig) -> DebtState:
        return cls.from_counts(config, 0, (0,) * config.n_clients)

    @classmethod
    def from_counts(cls, config: SystemConfig, frame_index: int, delivered_counts: Sequence[int]) -> DebtState:
        t = int(frame_index)
        s = tuple(int(x) for x in delivered_counts)
        if t < 0:
            raise ConfigError(f"frame_index must be >= 0, got {t}")
        if len(s) != config.n_clients:
            raise ConfigError(f"expected {config.n_clients} delivery counts, got {len(s)}")
        if any(x < 0 or x > t for x in s):
            raise ConfigError(f"delivery counts {s} must lie in [0, {t}]")
        return cls(t, s, debt_vector(config, t, s))

    @property
    def d(self) -> np.ndarray:
        return np.array(self.debts, dtype=np.float64)


def debt_vector(config: SystemConfig, frame_index: int, delivered_counts: Sequence[int]) -> tuple[float, ...]:
    t = float(frame_index)
    return tuple(t * q - float(s) for q, s in zip(config.throughputs, delivered_counts))


@dataclass(frozen=True)
class FrameTrace:
    frame_index: int
    priority_order: tuple[int, ...]
    attempts: tuple[int, ...]
    deliveries: tuple[int, ...]
    idle_slots: int

    def check(self, config: SystemConfig) -> None:
        """Raise ContractViolation if the record is not a possible frame outcome."""
        if sorted(self.priority_order) != list(config.clients):
            raise ContractViolation(f"priority order {self.priority_order} is not a permutation")
        if sum(self.attempts) + self.idle_slots != config.period:
            raise ContractViolation("attempts plus idle slots must fill the frame")
        for u, g in zip(self.attempts, self.deliveries):
            if g not in (0, 1) or (g == 1 and u < 1):
                raise ContractViolation("a delivery needs at least one attempt")
        if self.idle_slots > 0 and not all(self.deliveries):
            raise ContractViolation("idle slots while a packet is still pending")


def update_debts(state: DebtState, trace: FrameTrace, config: SystemConfig) -> DebtState:
    if trace.frame_index != state.frame_index:
        raise ContractViolation(
            f"trace is for frame {trace.frame_index} but state is at frame {state.frame_index}"
        )
    s = tuple(a + b for a, b in zip(state.delivered_counts, trace.deliveries))
    t = state.frame_index + 1
    return DebtState(t, s, debt_vector(config, t, s))


def weighted_debt(state: DebtState, config: SystemConfig, weights: Sequence[float] | None = None) -> np.ndarray:
    """d_j / alpha_j, using ``weights`` in place of the config's alphas when given."""
    alpha = config.alpha if weights is None else np.asarray(weights, dtype=np.float64)
    return state.d / alpha
