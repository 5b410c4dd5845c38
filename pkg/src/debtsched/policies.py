"""Frame-boundary priority orderings.

Every policy here is non-idling: the order fixed at the start of a frame
is served strictly (head-of-line client until delivered, then the next)
and never revisited mid-frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from debtsched import _pykernel
from debtsched.model import ConfigError, DebtState, SystemConfig

KINDS = ("weighted_debt", "mwdf", "mdf", "round_robin", "uniform_random", "fixed_order")
TIE_BREAKS = ("lowest_id", "random")


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    alphas: tuple[float, ...] | None = None
    order: tuple[int, ...] | None = None
    tie_break: str = "lowest_id"
    name: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}; expected one of {KINDS}")
        if self.tie_break not in TIE_BREAKS:
            raise ConfigError(f"unknown tie_break {self.tie_break!r}; expected one of {TIE_BREAKS}")
        if self.alphas is not None:
            object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
            if self.kind != "weighted_debt":
                raise ConfigError(f"alphas only apply to weighted_debt, not {self.kind}")
            if any(not a > 0 for a in self.alphas):
                raise ConfigError(f"weighted_debt alphas must be positive, got {self.alphas}")
        if self.order is not None:
            object.__setattr__(self, "order", tuple(int(o) for o in self.order))
            if self.kind != "fixed_order":
                raise ConfigError(f"order only applies to fixed_order, not {self.kind}")
            if sorted(self.order) != list(range(1, len(self.order) + 1)):
                raise ConfigError(f"fixed_order needs a permutation of 1..N, got {self.order}")
        elif self.kind == "fixed_order":
            raise ConfigError("fixed_order needs an explicit order")

    @classmethod
    def mwdf(cls, tie_break: str = "lowest_id") -> PolicySpec:
        return cls("mwdf", tie_break=tie_break)

    @classmethod
    def mdf(cls, tie_break: str = "lowest_id") -> PolicySpec:
        return cls("mdf", tie_break=tie_break)

    @classmethod
    def weighted_debt(cls, alphas: Sequence[float] | None = None, tie_break: str = "lowest_id") -> PolicySpec:
        return cls("weighted_debt", alphas=None if alphas is None else tuple(alphas), tie_break=tie_break)

    @classmethod
    def fixed_order(cls, order: Sequence[int]) -> PolicySpec:
        return cls("fixed_order", order=tuple(order))

    @classmethod
    def round_robin(cls) -> PolicySpec:
        return cls("round_robin")

    @classmethod
    def uniform_random(cls) -> PolicySpec:
        return cls("uniform_random")

    @property
    def label(self) -> str:
        return self.name or self.kind

    @property
    def needs_keys(self) -> bool:
        """Whether the policy consumes N uniforms per frame from the policy stream."""
        return self.kind == "uniform_random" or (self.is_debt_based and self.tie_break == "random")

    @property
    def is_debt_based(self) -> bool:
        return self.kind in ("weighted_debt", "mwdf", "mdf")

    def validate_for(self, config: SystemConfig) -> None:
        if self.alphas is not None and len(self.alphas) != config.n_clients:
            raise ConfigError(f"policy {self.label}: {len(self.alphas)} alphas for {config.n_clients} clients")
        if self.order is not None and len(self.order) != config.n_clients:
            raise ConfigError(f"policy {self.label}: order {self.order} does not cover {config.n_clients} clients")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "tie_break": self.tie_break}
        if self.name:
            out["name"] = self.name
        if self.alphas is not None:
            out["alphas"] = list(self.alphas)
        if self.order is not None:
            out["order"] = list(self.order)
        return out


def debt_weights(policy: PolicySpec, config: SystemConfig) -> np.ndarray:
    """The alpha vector a debt-based policy divides debts by."""
    if policy.kind == "mwdf":
        return config.p
    if policy.kind == "mdf":
        return np.ones(config.n_clients)
    if policy.kind == "weighted_debt":
        return config.alpha if policy.alphas is None else np.array(policy.alphas)
    raise ValueError(f"{policy.kind} does not rank by debt")


def kernel_encoding(policy: PolicySpec, config: SystemConfig) -> tuple[int, np.ndarray, np.ndarray, int]:
    """(policy code, alpha vector, 0-based fixed order, random-tie flag) for the kernels."""
    policy.validate_for(config)
    n = config.n_clients
    fixed = np.arange(n, dtype=np.int64)
    alpha = np.ones(n)
    if policy.is_debt_based:
        alpha = np.ascontiguousarray(debt_weights(policy, config), dtype=np.float64)
        code = _pykernel.WEIGHTED
    elif policy.kind == "fixed_order":
        fixed = np.array([o - 1 for o in policy.order], dtype=np.int64)
        code = _pykernel.FIXED
    elif policy.kind == "round_robin":
        code = _pykernel.ROUND_ROBIN
    else:
        code = _pykernel.UNIFORM_RANDOM
    tie_random = int(policy.is_debt_based and policy.tie_break == "random")
    return code, alpha, fixed, tie_random


def priority_order(
    policy: PolicySpec,
    state: DebtState,
    config: SystemConfig,
    keys: Sequence[float] | np.random.Generator | None = None,
) -> tuple[int, ...]:
    """Service order (1-based ids) for frame ``state.frame_index``.

    Debt-based kinds sort by d_j / alpha_j descending. ``keys`` supplies the
    frame's N policy-stream uniforms when the policy is randomized (random
    tie breaks or uniform_random); a Generator may be passed instead, in
    which case N uniforms are drawn from it.
    """
    policy.validate_for(config)
    n = config.n_clients
    t = state.frame_index
    if isinstance(keys, np.random.Generator):
        keys = keys.random(n) if policy.needs_keys else None
    if policy.needs_keys and (keys is None or len(keys) < n):
        raise ValueError(f"policy {policy.label} needs {n} random keys for this frame")

    ids = list(range(n))
    if policy.is_debt_based:
        alpha = debt_weights(policy, config)
        tf = float(t)
        w = [(tf * config.throughputs[j] - state.delivered_counts[j]) / alpha[j] for j in ids]
        if policy.tie_break == "random":
            ranked = sorted(ids, key=lambda j: (-w[j], keys[j]))
        else:
            ranked = sorted(ids, key=lambda j: (-w[j], j))
    elif policy.kind == "fixed_order":
        return tuple(policy.order)
    elif policy.kind == "round_robin":
        ranked = [(t + k) % n for k in ids]
    else:
        ranked = sorted(ids, key=lambda j: (keys[j], j))
    return tuple(j + 1 for j in ranked)
