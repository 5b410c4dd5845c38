"""CSV trace and JSON summary files.

Reals are written with 17 significant digits so every double round-trips
exactly; files are written to a temporary name and renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from debtsched.engine import RunResult
from debtsched.model import SystemConfig


def fmt_real(x: float) -> str:
    return "%.17g" % x


def trace_header(n: int) -> list[str]:
    cols = ["t"]
    cols += [f"d_{j}" for j in range(1, n + 1)]
    cols += [f"u_{j}" for j in range(1, n + 1)]
    cols += [f"g_{j}" for j in range(1, n + 1)]
    cols += ["idle", "phi"]
    cols += [f"M_{j}" for j in range(1, n + 1)]
    cols += [f"scaled_d_{j}" for j in range(1, n + 1)]
    return cols


def write_atomic(path: Path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_trace(result: RunResult) -> str:
    cfg = result.system
    series = result.series
    n = cfg.n_clients
    d = series.debts(cfg)
    m = series.martingale(cfg)
    ph = series.phi()
    scaled = d / ph[:, None]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace_header(n))
    for i in range(len(series)):
        row = [str(int(series.t[i]))]
        row += [fmt_real(x) for x in d[i]]
        row += [str(int(x)) for x in series.attempts[i]]
        row += [str(int(x)) for x in series.deliveries[i]]
        row += [str(int(series.idle[i])), fmt_real(ph[i])]
        row += [fmt_real(x) for x in m[i]]
        row += [fmt_real(x) for x in scaled[i]]
        w.writerow(row)
    return buf.getvalue()


def write_trace(result: RunResult, path: Path) -> None:
    write_atomic(path, render_trace(result))


@dataclass(eq=False)
class TraceTable:
    """A parsed trace CSV; arrays are indexed [row] or [row, client]."""

    t: np.ndarray
    d: np.ndarray
    u: np.ndarray
    g: np.ndarray
    idle: np.ndarray
    phi: np.ndarray
    M: np.ndarray
    scaled_d: np.ndarray

    @property
    def n_clients(self) -> int:
        return self.d.shape[1]


def read_trace(path: Path) -> TraceTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    n = (len(header) - 3) // 5
    if header != trace_header(n):
        raise ValueError(f"{path}: unexpected trace header {header}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    ints = lambda a, b: np.array([[int(r[k]) for k in range(a, b)] for r in rows], dtype=np.int64)
    reals = lambda a, b: np.array([[float(r[k]) for k in range(a, b)] for r in rows], dtype=np.float64)
    c = 1
    t = ints(0, 1)[:, 0]
    d = reals(c, c + n); c += n
    u = ints(c, c + n); c += n
    g = ints(c, c + n); c += n
    idle = ints(c, c + 1)[:, 0]; c += 1
    ph = reals(c, c + 1)[:, 0]; c += 1
    m = reals(c, c + n); c += n
    scaled = reals(c, c + n)
    return TraceTable(t, d, u, g, idle, ph, m, scaled)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if x != x or x in (float("inf"), float("-inf")):
            return None
        return x
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(obj, path: Path) -> None:
    write_atomic(path, dumps(obj))


def run_metadata(result: RunResult, config_hash: str | None = None) -> dict:
    rc = result.run_config
    return {
        "config_hash": config_hash,
        "rng_algorithm": result.rng_algorithm,
        "backend": result.backend,
        "seed": rc.seed,
        "policy": rc.policy.to_dict(),
        "system": rc.system.to_dict(),
        "frames": rc.frames,
        "record_stride": rc.stride,
        "t_min": rc.t_min,
        "initial_frame": rc.start_state.frame_index,
        "final_frame": result.final_state.frame_index,
        "final_debts": list(result.final_state.debts),
        "delivered_counts": list(result.final_state.delivered_counts),
        "attempt_totals": result.attempt_totals.tolist(),
        "idle_total": result.idle_total,
        "rows": len(result.series),
        "wall_clock_s": result.wall_clock_s,
        "fingerprint": result.fingerprint(),
    }


def system_from_dict(data: dict) -> SystemConfig:
    return SystemConfig(
        data["n_clients"], data["period"], tuple(data["reliabilities"]), tuple(data["throughputs"]), tuple(data["weights"])
    )
