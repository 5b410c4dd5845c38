"""Command-line front end.

Exit codes: 0 success (or feasible), 1 usage/config/runtime error,
2 infeasible throughputs.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from debtsched import __version__, analysis, engine, kernels, traces
from debtsched.distributions import sigma_p_tau
from debtsched.experiment import ExperimentConfig, load_config
from debtsched.feasibility import check_feasibility
from debtsched.model import ConfigError, ResourceLimitError
from debtsched.policies import KINDS, PolicySpec

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2

OUT_ENV = "DEBTSCHED_OUT"
DEFAULT_OUT = "debtsched-out"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def parse_seeds(text: str) -> tuple[int, ...]:
    """'0-19', '3,5,8' or a mix such as '0-4,10'."""
    seeds: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = (int(x) for x in part.split("-", 1))
                if hi < lo:
                    raise ValueError
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}; use e.g. 0-19 or 1,2,3") from None
    if any(s < 0 for s in seeds) or len(set(seeds)) != len(seeds):
        raise argparse.ArgumentTypeError(f"seeds must be distinct and >= 0: {text!r}")
    return tuple(seeds)


def parse_policies(text: str) -> tuple[PolicySpec, ...]:
    """Comma-separated kind[:tie_break]; fixed_order uses the order 1..N."""
    out = []
    for item in text.split(","):
        kind, _, tie = item.strip().partition(":")
        if kind not in KINDS:
            raise argparse.ArgumentTypeError(f"unknown policy {kind!r}; choose from {', '.join(KINDS)}")
        out.append((kind, tie or "lowest_id"))
    return tuple(out)  # resolved against N later


def _resolve_policies(raw, n: int) -> tuple[PolicySpec, ...]:
    specs = []
    for kind, tie in raw:
        if kind == "fixed_order":
            specs.append(PolicySpec.fixed_order(range(1, n + 1)))
        elif kind in ("round_robin", "uniform_random"):
            specs.append(PolicySpec(kind))
        else:
            specs.append(PolicySpec(kind, tie_break=tie))
    return tuple(specs)


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="debtsched", description="Debt-based frame scheduling experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({kernels.BACKEND} kernel)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, runs: bool) -> None:
        p.add_argument("--config", required=True, help="experiment TOML file")
        p.add_argument("--out", help=f"output directory (default: [output].directory, ${OUT_ENV}, ./{DEFAULT_OUT})")
        if runs:
            p.add_argument("--seeds", type=parse_seeds, help="seed override, e.g. 0-19 or 1,5,9")
            p.add_argument("--frames", type=_positive, help="frames T override")
            p.add_argument("--policy", type=parse_policies, help="policy override, e.g. mwdf,fixed_order,mdf:random")
            p.add_argument("--stride", type=_positive, help="record stride override")
            p.add_argument("--jobs", type=_positive, help="parallel worker processes")
        p.add_argument("--t-min", type=_positive, dest="t_min", help="start of the extrema window")

    p = sub.add_parser("feasibility", help="check every subset constraint")
    p.add_argument("--config", required=True, help="experiment TOML file")
    p.add_argument("--out", help="also write feasibility.json here")
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--table", action="store_true", help="print a text table instead of JSON")

    p = sub.add_parser("simulate", help="one trace CSV and summary JSON per (policy, seed)")
    common(p, True)

    p = sub.add_parser("sweep", help="aggregate statistics across seeds")
    common(p, True)
    p.add_argument("--traces", action="store_true", help="also write the per-run CSV and JSON files")

    p = sub.add_parser("analyze", help="re-analyze existing trace CSVs")
    p.add_argument("--config", required=True, help="the experiment TOML the traces came from")
    p.add_argument("--out", help="write the analysis JSON here instead of stdout")
    p.add_argument("--t-min", type=_positive, dest="t_min", help="start of the window")
    p.add_argument("csv", nargs="+", help="trace CSV files")
    return parser


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    return Path(args.out or cfg.output_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _apply_overrides(args, cfg: ExperimentConfig) -> ExperimentConfig:
    policies = None if getattr(args, "policy", None) is None else _resolve_policies(args.policy, cfg.system.n_clients)
    return cfg.override(
        frames=getattr(args, "frames", None),
        seeds=getattr(args, "seeds", None),
        policies=policies,
        t_min=args.t_min,
        record_stride=getattr(args, "stride", None),
        jobs=getattr(args, "jobs", None),
    )


def _provenance(cfg: ExperimentConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "rng_algorithm": engine.RNG_ALGORITHM, "version": __version__}


def _err(msg: str) -> None:
    print(f"debtsched: {msg}", file=sys.stderr)


# feasibility

def cmd_feasibility(args) -> int:
    cfg = load_config(args.config)
    report = check_feasibility(cfg.system, tolerance=args.tolerance)
    doc = {**_provenance(cfg), "system": cfg.system.to_dict(), "report": report.to_dict()}
    if args.table:
        print(f"{'subset':<24} {'capacity':>14} {'slack':>14}")
        for ids, slack in report.slack.items():
            if ids:
                mark = " tight" if ids in report.tight_subsets else (" VIOLATED" if ids in report.violated_subsets else "")
                print(f"{'{' + ','.join(map(str, ids)) + '}':<24} {report.capacity[ids]:>14.10f} {slack:>14.6e}{mark}")
        print(f"feasible: {report.feasible}; tight: {[list(s) for s in report.tight_subsets]}")
    else:
        sys.stdout.write(traces.dumps(doc))
    if args.out:
        traces.write_json(doc, Path(args.out) / "feasibility.json")
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


# simulate / sweep workers (top level so process pools can pickle them)

def _simulate_one(cfg: ExperimentConfig, policy: PolicySpec, seed: int, out: Path, config_hash: str) -> list[str]:
    result = engine.run(cfg.run_config(policy, seed))
    return _write_run(result, policy, seed, out, config_hash)


def _write_run(result: engine.RunResult, policy: PolicySpec, seed: int, out: Path, config_hash: str) -> list[str]:
    stem = out / f"{policy.label}-{seed}"
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    traces.write_trace(result, csv_path)
    doc = {
        "config_hash": config_hash,
        "rng_algorithm": result.rng_algorithm,
        "run": traces.run_metadata(result, config_hash),
        **analysis.summarize(result),
    }
    traces.write_json(doc, json_path)
    return [str(csv_path), str(json_path)]


def _sweep_one(cfg: ExperimentConfig, policy: PolicySpec, seed: int, out: Path | None, config_hash: str):
    result = engine.run(cfg.run_config(policy, seed))
    if out is not None:
        _write_run(result, policy, seed, out, config_hash)
    return result


def _execute(fn, cfg: ExperimentConfig, jobs: int, *extra) -> list[tuple[PolicySpec, int, object, str | None]]:
    """Run fn for every (policy, seed); returns (policy, seed, value, error)."""
    pairs = cfg.runs()
    outcomes = []
    if jobs <= 1 or len(pairs) == 1:
        for pol, seed in pairs:
            try:
                outcomes.append((pol, seed, fn(cfg, pol, seed, *extra), None))
            except Exception as exc:  # reported per run
                outcomes.append((pol, seed, None, f"{type(exc).__name__}: {exc}"))
        return outcomes
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [(pol, seed, pool.submit(fn, cfg, pol, seed, *extra)) for pol, seed in pairs]
        for pol, seed, fut in futures:
            try:
                outcomes.append((pol, seed, fut.result(), None))
            except Exception as exc:
                outcomes.append((pol, seed, None, f"{type(exc).__name__}: {exc}"))
    return outcomes


def cmd_simulate(args) -> int:
    cfg = _apply_overrides(args, load_config(args.config))
    cfg.require_policies()
    out = _out_dir(args, cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _err(f"cannot create output directory {out}: {exc.strerror or exc}")
        return EXIT_ERROR
    outcomes = _execute(_simulate_one, cfg, cfg.jobs, out, cfg.config_hash())
    failed = 0
    for pol, seed, paths, error in outcomes:
        if error:
            failed += 1
            _err(f"{pol.label} seed {seed}: {error}")
        else:
            print(paths[0])
    return EXIT_ERROR if failed else EXIT_OK


def _quantiles(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    qs = np.quantile(arr, [0.0, 0.1, 0.5, 0.9, 1.0], axis=0)
    return {k: v.tolist() for k, v in zip(("min", "q10", "median", "q90", "max"), qs)}


def aggregate_policy(runs: Sequence[engine.RunResult]) -> dict:
    config = runs[0].system
    lils = [analysis.lil_stats(r) for r in runs]
    sscs = [analysis.ssc_stats(r) for r in runs]
    frames = float(runs[0].run_config.frames)
    out = {
        "runs": len(runs),
        "seeds": [r.run_config.seed for r in runs],
        "lil": {
            "t_min": lils[0].t_min,
            "debt_max": _quantiles([s.debt_max for s in lils]),
            "debt_min": _quantiles([s.debt_min for s in lils]),
            "martingale_max": _quantiles([s.martingale_max for s in lils]),
            "martingale_limit": lils[0].martingale_limit.tolist(),
            "sum_max": _quantiles([s.sum_max for s in lils]),
            "sum_min": _quantiles([s.sum_min for s in lils]),
            "bounds": {k: v.tolist() for k, v in lils[0].bounds.items()},
        },
        "ssc": {
            "grid": sscs[0].grid.tolist(),
            "median": np.median(np.vstack([s.values for s in sscs]), axis=0).tolist(),
            "slope_median": float(np.nanmedian([s.slope for s in sscs])) if any(np.isfinite(s.slope) for s in sscs) else None,
            "max_debt_gap": None if sscs[0].max_debt_gap is None else max(s.max_debt_gap for s in sscs),
        },
        "attempt_rate": _quantiles([r.attempt_totals / frames for r in runs]),
        "attempt_target": (config.q / config.p).tolist(),
    }
    if config.n_clients == 2 and runs[0].drift.kappa > 0:
        out["drift"] = analysis.pooled_drift(runs).to_dict()
    return out


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(args, load_config(args.config))
    cfg.require_policies()
    out = _out_dir(args, cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _err(f"cannot create output directory {out}: {exc.strerror or exc}")
        return EXIT_ERROR
    config_hash = cfg.config_hash()
    outcomes = _execute(_sweep_one, cfg, cfg.jobs, out if args.traces else None, config_hash)

    by_policy: dict[str, list[engine.RunResult]] = {p.label: [] for p in cfg.policies}
    failures = []
    for pol, seed, result, error in outcomes:
        if error:
            failures.append({"policy": pol.label, "seed": seed, "error": error})
            _err(f"{pol.label} seed {seed}: {error}")
        else:
            by_policy[pol.label].append(result)

    doc: dict = {
        **_provenance(cfg),
        "backend": kernels.BACKEND,
        "experiment": cfg.to_dict(),
        "bounds": {k: v.tolist() for k, v in analysis.theoretical_bounds(cfg.system).items()},
        "runs": len(outcomes),
        "failures": failures,
        "policies": {label: aggregate_policy(runs) for label, runs in by_policy.items() if runs},
    }
    done = {label: runs for label, runs in by_policy.items() if runs}
    if cfg.system.is_symmetric and len(done) >= 2:
        try:
            table = analysis.policy_cost(done, cfg.system)
        except ValueError as exc:
            doc["policy_cost"] = {"error": str(exc)}
        else:
            doc["policy_cost"] = {
                "floor": sigma_p_tau(cfg.system) / cfg.system.n_clients,
                "sigma_p_tau": sigma_p_tau(cfg.system),
                "table": [c.to_dict() for c in sorted(table.values(), key=lambda c: c.cost)],
            }
    path = out / "sweep.json"
    traces.write_json(doc, path)
    print(path)
    if failures and len(failures) == len(outcomes):
        return EXIT_ERROR
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    t_min = args.t_min or cfg.t_min
    results = {}
    for name in args.csv:
        table = traces.read_trace(Path(name))
        results[name] = analysis.trace_analysis(table, cfg.system, t_min)
    doc = {**_provenance(cfg), "traces": results}
    if args.out:
        path = Path(args.out)
        if path.suffix != ".json":
            path = path / "analysis.json"
        traces.write_json(doc, path)
        print(path)
    else:
        sys.stdout.write(traces.dumps(doc))
    return EXIT_OK


COMMANDS = {
    "feasibility": cmd_feasibility,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ResourceLimitError) as exc:
        _err(str(exc))
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
