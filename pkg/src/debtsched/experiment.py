"""Experiment definitions loaded from TOML.

Grammar (unknown keys anywhere are errors)::

    [system]
    n_clients = 2
    period = 1
    reliabilities = [0.5, 0.5]
    throughputs = [0.25, 0.25]     # or split_weights = [0.5, 0.5], not both
    weights = [1.0, 1.0]           # optional debt weights

    [[policies]]                   # one per policy; simulate and sweep need one
    kind = "mwdf"
    tie_break = "lowest_id"        # optional
    alphas = [1.0, 2.0]            # weighted_debt only
    order = [1, 2]                 # fixed_order only
    name = "mwdf"                  # optional file-name label

    [run]
    frames = 1000000
    seeds = [0, 1, 2]              # or seed_count = 20, meaning 0..19
    t_min = 1000
    record_stride = 64
    drift_threshold = 3.0
    ssc_extra_edges = [10000]
    initial_frame = 0              # optional displaced start, with
    initial_delivered = [0, 0]     # initial_delivered
    jobs = 1

    [output]
    directory = "runs/example"
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from debtsched.engine import DEFAULT_T_MIN, RunConfig
from debtsched.feasibility import boundary_throughputs
from debtsched.model import ConfigError, DebtState, SystemConfig
from debtsched.policies import PolicySpec

_SECTIONS = {"system", "policies", "run", "output"}
_SYSTEM_KEYS = {"n_clients", "period", "reliabilities", "throughputs", "split_weights", "weights"}
_POLICY_KEYS = {"kind", "tie_break", "alphas", "order", "name"}
_RUN_KEYS = {
    "frames", "seeds", "seed_count", "t_min", "record_stride", "drift_threshold",
    "ssc_extra_edges", "initial_frame", "initial_delivered", "jobs",
}
_OUTPUT_KEYS = {"directory"}


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig
    policies: tuple[PolicySpec, ...]
    frames: int
    seeds: tuple[int, ...]
    t_min: int = DEFAULT_T_MIN
    record_stride: int | None = None
    drift_threshold: float | None = None
    ssc_extra_edges: tuple[int, ...] = ()
    initial_frame: int | None = None
    initial_delivered: tuple[int, ...] | None = None
    split_weights: tuple[float, ...] | None = None
    jobs: int = 1
    output_dir: str | None = None
    source: str = field(default="<config>", compare=False)

    def __post_init__(self) -> None:
        labels = [p.label for p in self.policies]
        dup = {x for x in labels if labels.count(x) > 1}
        if dup:
            raise ConfigError(f"{self.source}: duplicate policy labels {sorted(dup)}; set distinct names")
        if not self.seeds:
            raise ConfigError(f"{self.source}: [run] needs at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"{self.source}: [run].seeds has duplicates")
        if self.jobs < 1:
            raise ConfigError(f"{self.source}: [run].jobs must be >= 1")
        if (self.initial_frame is None) != (self.initial_delivered is None):
            raise ConfigError(f"{self.source}: initial_frame and initial_delivered go together")
        for pol in self.policies:
            pol.validate_for(self.system)
        # validate run parameters once, up front
        self.run_config(self.policies[0] if self.policies else PolicySpec.mwdf(), self.seeds[0])

    def require_policies(self) -> None:
        if not self.policies:
            raise ConfigError(f"{self.source}: at least one [[policies]] table is required")

    def initial_state(self) -> DebtState | None:
        if self.initial_frame is None:
            return None
        try:
            return DebtState.from_counts(self.system, self.initial_frame, self.initial_delivered)
        except ValueError as exc:
            raise ConfigError(f"{self.source}: [run].initial_delivered: {exc}") from None

    def run_config(self, policy: PolicySpec, seed: int) -> RunConfig:
        return RunConfig(
            system=self.system,
            policy=policy,
            frames=self.frames,
            seed=seed,
            record_stride=self.record_stride,
            t_min=self.t_min,
            drift_threshold=self.drift_threshold,
            ssc_extra_edges=self.ssc_extra_edges,
            initial_state=self.initial_state(),
        )

    def runs(self) -> list[tuple[PolicySpec, int]]:
        return [(pol, seed) for pol in self.policies for seed in self.seeds]

    def to_dict(self) -> dict:
        run: dict[str, Any] = {
            "frames": self.frames,
            "seeds": list(self.seeds),
            "t_min": self.t_min,
            "record_stride": self.record_stride,
            "drift_threshold": self.drift_threshold,
            "ssc_extra_edges": list(self.ssc_extra_edges),
        }
        if self.initial_frame is not None:
            run["initial_frame"] = self.initial_frame
            run["initial_delivered"] = list(self.initial_delivered)
        return {
            "system": self.system.to_dict(),
            "split_weights": None if self.split_weights is None else list(self.split_weights),
            "policies": [p.to_dict() for p in self.policies],
            "run": run,
        }

    def config_hash(self) -> str:
        """sha256 of the canonical JSON of everything that affects results."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def override(
        self,
        frames: int | None = None,
        seeds: tuple[int, ...] | None = None,
        policies: tuple[PolicySpec, ...] | None = None,
        t_min: int | None = None,
        record_stride: int | None = None,
        jobs: int | None = None,
    ) -> ExperimentConfig:
        changes: dict[str, Any] = {}
        if frames is not None:
            changes["frames"] = frames
        if seeds is not None:
            changes["seeds"] = seeds
        if policies is not None:
            changes["policies"] = policies
        if t_min is not None:
            changes["t_min"] = t_min
        if record_stride is not None:
            changes["record_stride"] = record_stride
        if jobs is not None:
            changes["jobs"] = jobs
        try:
            return replace(self, **changes)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{self.source}: {exc}") from None


def _check_keys(table: Any, allowed: set[str], where: str, source: str) -> dict:
    if not isinstance(table, dict):
        raise ConfigError(f"{source}: {where} must be a table")
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"{source}: {where}: unknown key(s) {', '.join(unknown)}")
    return table


def _get(table: dict, key: str, kind, where: str, source: str, required: bool = False, default=None):
    if key not in table:
        if required:
            raise ConfigError(f"{source}: {where}.{key} is required")
        return default
    value = table[key]
    ok = {
        "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
        "real": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
        "str": lambda v: isinstance(v, str),
        "ints": lambda v: isinstance(v, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in v),
        "reals": lambda v: isinstance(v, list) and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v),
    }[kind](value)
    if not ok:
        raise ConfigError(f"{source}: {where}.{key} must be {kind.replace('reals', 'a list of numbers').replace('ints', 'a list of integers')}, got {value!r}")
    if kind == "reals":
        return tuple(float(x) for x in value)
    if kind == "ints":
        return tuple(value)
    return value


def _system(table: dict, source: str) -> tuple[SystemConfig, tuple[float, ...] | None]:
    w = "[system]"
    _check_keys(table, _SYSTEM_KEYS, w, source)
    n = _get(table, "n_clients", "int", w, source, required=True)
    tau = _get(table, "period", "int", w, source, required=True)
    p = _get(table, "reliabilities", "reals", w, source, required=True)
    q = _get(table, "throughputs", "reals", w, source)
    split = _get(table, "split_weights", "reals", w, source)
    alpha = _get(table, "weights", "reals", w, source)
    if (q is None) == (split is None):
        raise ConfigError(f"{source}: {w} needs exactly one of throughputs or split_weights")
    if len(p) != n:
        raise ConfigError(f"{source}: {w}.reliabilities has {len(p)} entries for n_clients = {n}")
    try:
        if split is not None:
            if len(split) != n:
                raise ConfigError(f"{w}.split_weights has {len(split)} entries for n_clients = {n}")
            if tau < 1 or any(not 0 < x <= 1 for x in p):
                SystemConfig(n, tau, p, (0.5,) * n)
            q = boundary_throughputs(p, tau, split).throughputs
        return SystemConfig(n, tau, p, q, alpha), split
    except ValueError as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith(source) else f"{source}: {msg}") from None


def _policy(table: dict, index: int, source: str) -> PolicySpec:
    w = f"[[policies]] #{index + 1}"
    _check_keys(table, _POLICY_KEYS, w, source)
    try:
        return PolicySpec(
            kind=_get(table, "kind", "str", w, source, required=True),
            alphas=_get(table, "alphas", "reals", w, source),
            order=_get(table, "order", "ints", w, source),
            tie_break=_get(table, "tie_break", "str", w, source, default="lowest_id"),
            name=_get(table, "name", "str", w, source),
        )
    except ConfigError as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith(source) else f"{source}: {w}: {msg}") from None


def parse_config(data: dict, source: str = "<config>") -> ExperimentConfig:
    """Build an ExperimentConfig from an already-parsed TOML document."""
    _check_keys(data, _SECTIONS, "top level", source)
    if "system" not in data:
        raise ConfigError(f"{source}: missing [system] section")
    system, split = _system(data["system"], source)

    raw_policies = data.get("policies", [])
    if not isinstance(raw_policies, list):
        raise ConfigError(f"{source}: policies must be an array of tables ([[policies]])")
    policies = tuple(_policy(t, i, source) for i, t in enumerate(raw_policies))

    run = _check_keys(data.get("run", {}), _RUN_KEYS, "[run]", source)
    w = "[run]"
    frames = _get(run, "frames", "int", w, source, default=10_000)
    seeds = _get(run, "seeds", "ints", w, source)
    count = _get(run, "seed_count", "int", w, source)
    if seeds is not None and count is not None:
        raise ConfigError(f"{source}: {w} takes seeds or seed_count, not both")
    if count is not None:
        if count < 1:
            raise ConfigError(f"{source}: {w}.seed_count must be >= 1")
        seeds = tuple(range(count))
    if seeds is None:
        seeds = (0,)
    drift = _get(run, "drift_threshold", "real", w, source)
    delivered = _get(run, "initial_delivered", "ints", w, source)

    output = _check_keys(data.get("output", {}), _OUTPUT_KEYS, "[output]", source)
    try:
        return ExperimentConfig(
            system=system,
            policies=policies,
            frames=frames,
            seeds=seeds,
            t_min=_get(run, "t_min", "int", w, source, default=DEFAULT_T_MIN),
            record_stride=_get(run, "record_stride", "int", w, source),
            drift_threshold=None if drift is None else float(drift),
            ssc_extra_edges=_get(run, "ssc_extra_edges", "ints", w, source, default=()),
            initial_frame=_get(run, "initial_frame", "int", w, source),
            initial_delivered=delivered,
            split_weights=split,
            jobs=_get(run, "jobs", "int", w, source, default=1),
            output_dir=_get(output, "directory", "str", "[output]", source),
            source=source,
        )
    except ConfigError as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith(source) else f"{source}: {msg}") from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror or exc}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, str(path))
