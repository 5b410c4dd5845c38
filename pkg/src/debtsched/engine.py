"""Slot-level frame simulator.

Randomness comes from two independent numpy PCG64 streams spawned from the
run seed: the channel stream supplies exactly ``tau`` uniforms per frame
(one per slot, consumed in slot order, idle slots discard theirs) and the
policy stream supplies N uniforms per frame for randomized policies. A
frame's channel draws therefore do not depend on the policy, so runs of
different policies under one seed see the same channel realization.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from debtsched import _pykernel, kernels
from debtsched.model import ConfigError, DebtState, FrameTrace, SystemConfig
from debtsched.policies import PolicySpec, kernel_encoding

RNG_ALGORITHM = "numpy.PCG64 via SeedSequence(seed).spawn(2): [channel, policy]; Generator.random float64"
CHUNK_FRAMES = 1 << 16
SSC_GRID_RATIO = 1.5
DEFAULT_T_MIN = 1000


def phi(t: int) -> float:
    """sqrt(2 t ln ln t), with ln ln t frozen at ln ln 16 below t = 16."""
    if int(t) != t or t <= 0:
        raise ValueError(f"phi needs a positive integer, got {t!r}")
    return _pykernel.phi(int(t))


def forced_outcomes(*successes: bool) -> list[float]:
    """Slot draws that force each attempt to succeed (True) or fail (False).

    A draw succeeds when it is below p, and 0 < p <= 1, so 0.0 always
    succeeds and 1.0 never does.
    """
    return [0.0 if ok else 1.0 for ok in successes]


def simulate_frame(
    state: DebtState, order: Sequence[int], config: SystemConfig, outcomes: Sequence[float]
) -> FrameTrace:
    """Serve ``order`` through one frame using the per-slot draws in ``outcomes``."""
    tau = config.period
    if len(outcomes) < tau:
        raise ValueError(f"need {tau} slot draws, got {len(outcomes)}")
    n = config.n_clients
    u = [0] * n
    g = [0] * n
    pos = 0
    idle = 0
    for slot in range(tau):
        if pos == n:
            idle += 1
            continue
        c = order[pos] - 1
        u[c] += 1
        if outcomes[slot] < config.reliabilities[c]:
            g[c] = 1
            pos += 1
    return FrameTrace(state.frame_index, tuple(order), tuple(u), tuple(g), idle)


def make_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    channel, policy = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.Generator(np.random.PCG64(channel)), np.random.Generator(np.random.PCG64(policy))


def default_drift_threshold(config: SystemConfig) -> float:
    """1 + 1/min p for single-slot frames, 1 + 2/min p otherwise (two clients only)."""
    if config.n_clients != 2:
        return 0.0
    scale = 1.0 if config.period == 1 else 2.0
    return 1.0 + scale / min(config.reliabilities)


def ssc_grid(start: int, end: int, extra: Sequence[int] = (), ratio: float = SSC_GRID_RATIO) -> np.ndarray:
    """Block edges ceil(start * ratio^k) below ``end``, plus ``end`` and any extra points in range."""
    points = {int(start)}
    k = 1
    while True:
        e = math.ceil(start * ratio**k)
        if e >= end:
            break
        points.add(e)
        k += 1
    if end > start:
        points.add(int(end))
    points.update(int(e) for e in extra if start < e <= end)
    return np.array(sorted(points), dtype=np.int64)


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig
    policy: PolicySpec
    frames: int
    seed: int
    record_stride: int | None = None  # None: 64 when frames >= 10^6, else 1
    t_min: int = DEFAULT_T_MIN
    drift_threshold: float | None = None  # None: default_drift_threshold; 0 disables
    ssc_extra_edges: tuple[int, ...] = ()
    initial_state: DebtState | None = None

    def __post_init__(self) -> None:
        if int(self.frames) != self.frames or self.frames < 1:
            raise ConfigError(f"frames must be >= 1, got {self.frames!r}")
        if self.record_stride is not None and self.record_stride < 1:
            raise ConfigError(f"record_stride must be >= 1, got {self.record_stride!r}")
        if self.t_min < 1:
            raise ConfigError(f"t_min must be >= 1, got {self.t_min!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        self.policy.validate_for(self.system)
        if self.initial_state is not None and len(self.initial_state.delivered_counts) != self.system.n_clients:
            raise ConfigError("initial_state does not match the number of clients")

    @property
    def stride(self) -> int:
        if self.record_stride is not None:
            return int(self.record_stride)
        return 64 if self.frames >= 1_000_000 else 1

    @property
    def kappa(self) -> float:
        return default_drift_threshold(self.system) if self.drift_threshold is None else float(self.drift_threshold)

    @property
    def start_state(self) -> DebtState:
        return self.initial_state or DebtState.initial(self.system)


@dataclass(eq=False)
class Series:
    """Rows recorded every ``stride`` frames plus the last frame.

    ``t`` counts completed frames; the row holds the state after frame
    ``t - 1`` (0-based) and that frame's attempts, deliveries and idle slots.
    """

    t: np.ndarray
    delivered: np.ndarray  # cumulative s_j(t)
    attempted: np.ndarray  # cumulative sum of u_j
    attempts: np.ndarray  # u_j of the recorded frame
    deliveries: np.ndarray  # g_j of the recorded frame
    idle: np.ndarray
    idle_total: np.ndarray

    def debts(self, config: SystemConfig) -> np.ndarray:
        return self.t.astype(np.float64)[:, None] * config.q[None, :] - self.delivered.astype(np.float64)

    def martingale(self, config: SystemConfig) -> np.ndarray:
        """M_j(t) = sum of (u_j - g_j / p_j) since the start of the run."""
        return self.attempted.astype(np.float64) - self.delivered.astype(np.float64) / config.p[None, :]

    def predictable_variance(self, config: SystemConfig) -> np.ndarray:
        """S_j^2(t) = v_j * (cumulative attempts), v_j = (1 - p_j) / p_j."""
        v = (1.0 - config.p) / config.p
        return self.attempted.astype(np.float64) * v[None, :]

    def phi(self) -> np.ndarray:
        return np.array([_pykernel.phi(int(t)) for t in self.t])

    def __len__(self) -> int:
        return len(self.t)


@dataclass(eq=False)
class Extrema:
    """Per-frame running extrema over completed-frame counts t >= t_min."""

    t_min: int
    debt_max: np.ndarray  # max d_j(t) / phi(t)
    debt_min: np.ndarray
    martingale_max: np.ndarray  # max M_j(t) / phi(t)
    sum_max: float  # max sum_j d_j(t) / (p_j phi(t))
    sum_min: float
    spread_max: float  # max over every frame boundary of max_j d_j - min_j d_j

    @property
    def empty(self) -> bool:
        return not np.all(np.isfinite(self.debt_max))


@dataclass(eq=False)
class DriftTally:
    """Changes of Z = |d_2/p_2 - d_1/p_1| over frames that start with Z > kappa.

    Side 0 collects frames where client 2 leads (d_2/p_2 > d_1/p_1), side 1
    those where client 1 leads.
    """

    kappa: float
    count: np.ndarray
    total: np.ndarray
    total_sq: np.ndarray


@dataclass(eq=False)
class RunResult:
    run_config: RunConfig
    final_state: DebtState
    series: Series
    attempt_totals: np.ndarray
    idle_total: int
    extrema: Extrema
    ssc_edges: np.ndarray
    ssc_block_max: np.ndarray  # [k] = max gap/phi over (edges[k-1], edges[k]]; [0] unused
    drift: DriftTally
    backend: str
    rng_algorithm: str = RNG_ALGORITHM
    wall_clock_s: float = field(default=0.0)

    @property
    def system(self) -> SystemConfig:
        return self.run_config.system

    def fingerprint(self) -> str:
        """Hash of every simulated quantity (excludes timing metadata)."""
        h = hashlib.sha256()
        for arr in (
            self.series.t, self.series.delivered, self.series.attempted, self.series.attempts,
            self.series.deliveries, self.series.idle, self.series.idle_total, self.attempt_totals,
            self.extrema.debt_max, self.extrema.debt_min, self.extrema.martingale_max,
            np.array([self.extrema.sum_max, self.extrema.sum_min, self.extrema.spread_max]),
            self.ssc_edges, self.ssc_block_max, self.drift.count, self.drift.total, self.drift.total_sq,
        ):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr(self.final_state.delivered_counts).encode())
        return h.hexdigest()


def record_count(frames: int, stride: int) -> int:
    rows = -(-frames // stride)
    return rows if (frames - 1) % stride == 0 else rows + 1


def run(run_config: RunConfig, backend=None) -> RunResult:
    """Simulate ``run_config.frames`` frames; deterministic for a fixed seed.

    ``backend`` overrides the kernel module (used to cross-check the compiled
    and pure-Python paths).
    """
    kern = backend or kernels.impl
    backend_name = "cython" if kern is not _pykernel else "python"
    cfg = run_config.system
    n, tau = cfg.n_clients, cfg.period
    start = run_config.start_state
    t0 = start.frame_index
    frames = int(run_config.frames)
    t_last = t0 + frames
    stride = run_config.stride
    code, alpha, fixed, tie_random = kernel_encoding(run_config.policy, cfg)
    p = np.ascontiguousarray(cfg.p)
    q = np.ascontiguousarray(cfg.q)

    s = np.array(start.delivered_counts, dtype=np.int64)
    att = np.zeros(n, dtype=np.int64)
    idle_total = np.zeros(1, dtype=np.int64)

    rows = record_count(frames, stride)
    rec_t = np.zeros(rows, dtype=np.int64)
    rec_s = np.zeros((rows, n), dtype=np.int64)
    rec_att = np.zeros((rows, n), dtype=np.int64)
    rec_u = np.zeros((rows, n), dtype=np.int64)
    rec_g = np.zeros((rows, n), dtype=np.int64)
    rec_idle = np.zeros(rows, dtype=np.int64)
    rec_idle_total = np.zeros(rows, dtype=np.int64)
    rec_pos = np.zeros(1, dtype=np.int64)

    t_min = int(run_config.t_min)
    dmax = np.full(n, -np.inf)
    dmin = np.full(n, np.inf)
    mmax = np.full(n, -np.inf)
    d0 = start.d
    ext = np.array([-np.inf, np.inf, float(d0.max() - d0.min())])

    edge_start = max(t_min, t0)
    edges = ssc_grid(edge_start, t_last, run_config.ssc_extra_edges)
    block_max = np.zeros(len(edges))
    block_pos = np.ones(1, dtype=np.int64)

    kappa = run_config.kappa if n == 2 else 0.0
    drift_count = np.zeros(2, dtype=np.int64)
    drift_sum = np.zeros(2)
    drift_sumsq = np.zeros(2)

    channel, policy_rng = make_streams(run_config.seed)
    no_keys = np.zeros(0)
    began = time.perf_counter()
    done = 0
    while done < frames:
        chunk = min(CHUNK_FRAMES, frames - done)
        uniforms = channel.random(chunk * tau)
        keys = policy_rng.random(chunk * n) if run_config.policy.needs_keys else no_keys
        kern.run_frames(
            t0 + done, chunk, tau, p, q, alpha,
            code, fixed, tie_random, uniforms, keys,
            s, att, idle_total,
            t0 + 1, t_last, stride,
            rec_t, rec_s, rec_att, rec_u, rec_g, rec_idle, rec_idle_total, rec_pos,
            t_min, dmax, dmin, mmax, ext,
            edges, block_max, block_pos,
            kappa, drift_count, drift_sum, drift_sumsq,
        )
        done += chunk
    elapsed = time.perf_counter() - began
    assert rec_pos[0] == rows

    final = DebtState.from_counts(cfg, t_last, s.tolist())
    return RunResult(
        run_config=run_config,
        final_state=final,
        series=Series(rec_t, rec_s, rec_att, rec_u, rec_g, rec_idle, rec_idle_total),
        attempt_totals=att,
        idle_total=int(idle_total[0]),
        extrema=Extrema(t_min, dmax, dmin, mmax, float(ext[0]), float(ext[1]), float(ext[2])),
        ssc_edges=edges,
        ssc_block_max=block_max,
        drift=DriftTally(kappa, drift_count, drift_sum, drift_sumsq),
        backend=backend_name,
        wall_clock_s=elapsed,
    )
