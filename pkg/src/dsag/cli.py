"""Command-line interface: fit, predict, run, coded-bound.

All commands are deterministic given --seed, floats are written with 17
significant digits so outputs round-trip bit-exactly, and exit codes
follow a stable contract: 0 success, 2 usage or input error, 1 internal
error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .harness import (
    BalancerSettings,
    BurstEvent,
    ConfigError,
    ExperimentConfig,
    RunTrace,
    coded_bound_trace,
    prepare_dataset,
    run_experiment,
    share_rows,
)
from .latency import (
    Deterministic,
    WorkerProfile,
    comp_load,
    fit_gamma_from_moments,
    pool_profiles,
)
from .order_stats import mc_order_stat, sample_order_stat, simulate_iterations

__all__ = ["main"]

TRACE_COLUMNS = ("worker_id", "iteration", "total_latency_s", "compute_latency_s")
MILESTONES = (1e-2, 1e-4, 1e-8)


class InputError(Exception):
    """Bad input file or arguments; maps to exit code 2."""


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _write_csv(path: str | None, header: list[str], rows: list[list]) -> None:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([c if isinstance(c, str) else _fmt(c) for c in row])
    text = out.getvalue()
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# ---------------------------------------------------------------------------
# fit


def _parse_column_map(arg: str | None) -> dict[str, str]:
    # "ours=theirs,..." renames published-trace columns onto the TraceRow schema.
    mapping = {}
    if arg:
        for pair in arg.split(","):
            if "=" not in pair:
                raise InputError(f"--map entry {pair!r} is not of the form ours=theirs")
            ours, theirs = pair.split("=", 1)
            mapping[ours.strip()] = theirs.strip()
    return mapping


def _read_trace(path: str, column_map: dict[str, str]) -> dict[int, dict[str, list[float]]]:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise InputError(f"cannot read trace file: {err}") from err
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise InputError(f"{path}: empty file")
    names = {ours: column_map.get(ours, ours) for ours in TRACE_COLUMNS}
    missing = [theirs for theirs in names.values() if theirs not in reader.fieldnames]
    if missing:
        raise InputError(f"{path}: missing columns {missing} (have {reader.fieldnames})")
    bytes_col = column_map.get("bytes_b", "bytes_b")
    load_col = column_map.get("comp_load_c", "comp_load_c")

    workers: dict[int, dict[str, list[float]]] = {}
    bad_lines = []
    for lineno, row in enumerate(reader, start=2):
        try:
            wid = int(row[names["worker_id"]])
            total = float(row[names["total_latency_s"]])
            comp = float(row[names["compute_latency_s"]])
            if not (total >= comp >= 0):
                raise ValueError("need total >= compute >= 0")
            rec = workers.setdefault(
                wid, {"total": [], "comp": [], "bytes": [], "load": []}
            )
            rec["total"].append(total)
            rec["comp"].append(comp)
            if bytes_col in row and row[bytes_col] not in (None, ""):
                rec["bytes"].append(float(row[bytes_col]))
            if load_col in row and row[load_col] not in (None, ""):
                rec["load"].append(float(row[load_col]))
        except (ValueError, TypeError):
            bad_lines.append(lineno)
    if bad_lines:
        shown = ", ".join(map(str, bad_lines[:20]))
        raise InputError(f"{path}: malformed rows at lines {shown}")
    if not workers:
        raise InputError(f"{path}: no data rows")
    return workers


def cmd_fit(args) -> int:
    workers = _read_trace(args.trace, _parse_column_map(args.map))
    window = args.window if args.window is not None else math.inf
    header = [
        "worker_id", "samples",
        "comm_mean", "comm_var", "comm_shape", "comm_scale",
        "comp_mean", "comp_var", "comp_shape", "comp_scale",
        "bytes_b", "ref_load_c", "degenerate",
    ]
    rows = []
    for wid in sorted(workers):
        rec = workers[wid]
        total = np.array(rec["total"])
        comp = np.array(rec["comp"])
        # The trace carries no wall-clock timestamps; the moving window is
        # applied on the worker's own cumulative busy time.
        ts = np.cumsum(total)
        keep = ts >= ts[-1] - window
        total, comp = total[keep], comp[keep]
        comm = total - comp
        if len(total) < 2:
            raise InputError(
                f"worker {wid}: only {len(total)} samples inside the window"
            )
        stats = {}
        degenerate = 0
        for name, xs in (("comm", comm), ("comp", comp)):
            mean, var = float(xs.mean()), float(xs.var(ddof=1))
            if var > 0 and mean > 0:
                g = fit_gamma_from_moments(mean, var)
                shape, scale = g.shape, g.scale
            else:
                degenerate = 1
                shape, scale = math.nan, math.nan
            stats[name] = (mean, var, shape, scale)
        bytes_b = int(np.mean(rec["bytes"])) if rec["bytes"] else 0
        ref_load = float(np.mean(rec["load"])) if rec["load"] else 1.0
        rows.append(
            [wid, len(total), *stats["comm"], *stats["comp"], bytes_b, ref_load, degenerate]
        )
    _write_csv(args.out, header, rows)
    return 0


# ---------------------------------------------------------------------------
# predict


def _read_profiles(path: str) -> list[WorkerProfile]:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise InputError(f"cannot read profiles file: {err}") from err
    reader = csv.DictReader(io.StringIO(text))
    needed = ("worker_id", "comm_mean", "comm_var", "comp_mean", "comp_var")
    if reader.fieldnames is None or any(c not in reader.fieldnames for c in needed):
        raise InputError(f"{path}: expected columns {needed}")
    profiles = []
    for lineno, row in enumerate(reader, start=2):
        try:
            def dist(mean, var):
                return fit_gamma_from_moments(mean, var) if var > 0 else Deterministic(mean)

            profiles.append(
                WorkerProfile(
                    worker_id=int(row["worker_id"]),
                    comm=dist(float(row["comm_mean"]), float(row["comm_var"])),
                    comp=dist(float(row["comp_mean"]), float(row["comp_var"])),
                    bytes_b=int(float(row.get("bytes_b") or 0)),
                    ref_load_c=float(row.get("ref_load_c") or 1.0),
                )
            )
        except (ValueError, TypeError) as err:
            raise InputError(f"{path}: line {lineno}: {err}") from err
    if not profiles:
        raise InputError(f"{path}: no profiles")
    return profiles


def cmd_predict(args) -> int:
    profiles = _read_profiles(args.profiles)
    if not 1 <= args.w <= len(profiles):
        raise InputError(f"w={args.w} out of range [1, {len(profiles)}]")
    if args.iid:
        profiles = pool_profiles(profiles)
    rng = np.random.default_rng(args.seed)
    if args.mode == "order-stat":
        samples = sample_order_stat(profiles, args.w, args.samples, rng)
        est = float(samples.mean())
        se = float(samples.std(ddof=1) / math.sqrt(len(samples))) if len(samples) > 1 else 0.0
        q10, q50, q90 = (float(q) for q in np.quantile(samples, (0.1, 0.5, 0.9)))
        _write_csv(
            args.out,
            ["mode", "w", "samples", "mean_s", "stderr_s", "q10_s", "q50_s", "q90_s"],
            [["order-stat", args.w, args.samples, est, se, q10, q50, q90]],
        )
    else:
        timeline = simulate_iterations(
            profiles, args.w, args.iterations, rng, margin=args.margin
        )
        rows = [
            [t + 1, timeline.completion_times[t], timeline.fresh_counts[t]]
            for t in range(args.iterations)
        ]
        _write_csv(args.out, ["iteration", "time_s", "fresh_count"], rows)
    return 0


# ---------------------------------------------------------------------------
# run


def _load_config_dict(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise InputError(f"cannot read config: {err}") from err
    stripped = text.lstrip()
    if path.endswith(".json") or stripped.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as err:
            raise InputError(f"{path}: invalid JSON: {err}") from err
        if not isinstance(raw, dict):
            raise InputError(f"{path}: top level must be an object")
        return {str(k): {str(a): str(b) for a, b in v.items()} for k, v in raw.items()}
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise InputError(f"{path}: {err}") from err
    return {s: dict(parser.items(s)) for s in parser.sections()}


class _Schema:
    def __init__(self, raw: dict):
        self.raw = raw

    def get(self, section: str, key: str, kind, default=None, required=False):
        sec = self.raw.get(section, {})
        if key not in sec:
            if required:
                raise InputError(f"{section}.{key}: required field missing")
            return default
        value = sec[key]
        try:
            if kind is bool:
                lowered = str(value).strip().lower()
                if lowered in ("1", "true", "yes", "on"):
                    return True
                if lowered in ("0", "false", "no", "off"):
                    return False
                raise ValueError(f"not a boolean: {value!r}")
            return kind(value)
        except (ValueError, TypeError) as err:
            raise InputError(f"{section}.{key}: {err}") from err


def _parse_bursts(text: str) -> tuple[BurstEvent, ...]:
    # "worker:start:end:scale;..." with end possibly "inf"
    events = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 4:
            raise ValueError(f"burst {chunk!r} must be worker:start:end:scale")
        events.append(
            BurstEvent(
                worker_id=int(parts[0]),
                start=float(parts[1]),
                end=float(parts[2]),
                comp_mean_scale=float(parts[3]),
            )
        )
    return tuple(events)


def build_config(raw: dict) -> ExperimentConfig:
    """Turn a parsed config mapping into a validated ExperimentConfig."""
    schema = _Schema(raw)
    g = schema.get

    method = g("method", "name", str, required=True)
    kind = g("problem", "kind", str, required=True)
    if kind not in ("pca", "logreg"):
        raise InputError(f"problem.kind: unknown kind {kind!r}")
    n = g("problem", "n", int, required=True)
    d = g("problem", "d", int, required=True)
    components = g("problem", "components", int, 3)
    data_seed = g("problem", "seed", int, 0)
    label_noise = g("problem", "label_noise", float, 1.0)
    row_tail = g("problem", "row_tail", float, 1.0)
    stepsize = g("problem", "stepsize", float)
    if stepsize is None and method in ("gd", "coded"):
        stepsize = 1.0
    bundle = prepare_dataset(
        kind, n, d, data_seed,
        components=components, label_noise=label_noise, row_tail=row_tail,
        stepsize=stepsize,
    )

    workers = g("latency", "workers", int, required=True)
    if workers < 1:
        raise InputError("latency.workers: must be >= 1")
    comm_mean = g("latency", "comm_mean", float, 1e-3)
    comm_var = g("latency", "comm_var", float, 0.0)
    comp_mean = g("latency", "comp_mean", float, 1e-2)
    comp_var = g("latency", "comp_var", float, 0.0)
    slow_workers = g("latency", "slow_workers", int, 0)
    slow_factor = g("latency", "slow_factor", float, 1.0)
    bursts_text = g("latency", "bursts", str, "")
    try:
        bursts = _parse_bursts(bursts_text)
    except ValueError as err:
        raise InputError(f"latency.bursts: {err}") from err

    def dist(mean, var):
        if mean <= 0:
            raise InputError("latency: means must be positive")
        return fit_gamma_from_moments(mean, var) if var > 0 else Deterministic(mean)

    iterate_cols = components if kind == "pca" else 1
    profiles = []
    for i in range(workers):
        a, b = share_rows(n, workers, i + 1)
        factor = slow_factor if i >= workers - slow_workers else 1.0
        profiles.append(
            WorkerProfile(
                worker_id=i,
                comm=dist(comm_mean, comm_var),
                comp=dist(comp_mean * factor, comp_var * factor * factor),
                ref_load_c=comp_load(1.0, bundle.spec.d, iterate_cols, b - a + 1),
            )
        )

    settings = BalancerSettings(
        enabled=g("balancer", "enabled", bool, False),
        threshold=g("balancer", "threshold", float, 0.10),
        cadence=g("balancer", "cadence", int, 10),
        window_s=g("balancer", "window_s", float, 10.0),
        sim_budget=g("balancer", "sim_budget", int, 100),
        delay_s=g("balancer", "delay_s", float, 0.0),
    )

    config = ExperimentConfig(
        method=method,
        problem=bundle.spec,
        profiles=tuple(profiles),
        w=g("method", "w", int, workers),
        margin=g("method", "margin", float, 0.02),
        subpartitions=g("run", "subpartitions", int, 1),
        bursts=bursts,
        balancer=settings,
        iterations=g("run", "iterations", int, 100),
        time_budget_s=g("run", "time_budget_s", float, math.inf),
        code_rate=g("method", "code_rate", float),
        seed=g("run", "seed", int, 0),
    )
    try:
        return config.validate()
    except ConfigError as err:
        raise InputError(str(err)) from err


def trace_rows(trace: RunTrace, per_worker: bool) -> tuple[list[str], list[list]]:
    header = ["iteration", "time_s", "suboptimality", "xi", "fresh_count"]
    num_workers = trace.fresh_flags.shape[1]
    if per_worker:
        for i in range(num_workers):
            header += [f"fresh_{i}", f"p_{i}", f"comm_s_{i}", f"comp_s_{i}"]
    rows = []
    for t in range(len(trace.iterations)):
        row = [
            int(trace.iterations[t]),
            trace.times[t],
            trace.suboptimality[t],
            trace.xi[t],
            int(trace.fresh_counts[t]),
        ]
        if per_worker:
            for i in range(num_workers):
                row += [
                    int(trace.fresh_flags[t, i]),
                    int(trace.p_vectors[t, i]),
                    trace.worker_comm[t, i],
                    trace.worker_comp[t, i],
                ]
        rows.append(row)
    return header, rows


def _print_milestones(trace: RunTrace) -> None:
    for gap in MILESTONES:
        hit = np.nonzero(trace.suboptimality <= gap)[0]
        if len(hit):
            print(f"time to gap {gap:g}: {trace.times[hit[0]]:.17g} s")
        else:
            print(f"time to gap {gap:g}: not reached")


def cmd_run(args) -> int:
    config = build_config(_load_config_dict(args.config))
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    trace = run_experiment(config)
    header, rows = trace_rows(trace, args.per_worker)
    _write_csv(args.out, header, rows)
    if args.out is not None:
        _print_milestones(trace)
    return 0


# ---------------------------------------------------------------------------
# coded-bound


def _read_run_trace(path: str) -> RunTrace:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise InputError(f"cannot read trace: {err}") from err
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise InputError(f"{path}: empty file")
    rows = list(reader)
    if not rows:
        raise InputError(f"{path}: no data rows")
    worker_ids = sorted(
        int(c.split("_")[-1]) for c in reader.fieldnames if c.startswith("comm_s_")
    )
    if not worker_ids:
        raise InputError(
            f"{path}: per-worker latency columns missing (produce with --per-worker)"
        )
    ell, num_workers = len(rows), len(worker_ids)

    def col(name, dtype=float):
        return np.array([dtype(r[name]) for r in rows])

    trace = RunTrace(
        iterations=col("iteration", int),
        times=col("time_s"),
        suboptimality=col("suboptimality"),
        xi=col("xi"),
        fresh_counts=col("fresh_count", int),
        fresh_flags=np.array([[int(r[f"fresh_{i}"]) for i in worker_ids] for r in rows], dtype=bool),
        p_vectors=np.array([[int(r[f"p_{i}"]) for i in worker_ids] for r in rows]),
        worker_comm=np.array([[float(r[f"comm_s_{i}"]) for i in worker_ids] for r in rows]),
        worker_comp=np.array([[float(r[f"comp_s_{i}"]) for i in worker_ids] for r in rows]),
        optimum_value=math.nan,
    )
    if trace.worker_comm.shape != (ell, num_workers):
        raise InputError(f"{path}: ragged per-worker columns")
    return trace


def cmd_coded_bound(args) -> int:
    if not 0 < args.rate <= 1:
        raise InputError(f"code rate must be in (0, 1], got {args.rate}")
    trace = _read_run_trace(args.trace)
    try:
        rescaled = coded_bound_trace(trace, args.rate)
    except ValueError as err:
        raise InputError(str(err)) from err
    header, rows = trace_rows(rescaled, per_worker=True)
    _write_csv(args.out, header, rows)
    return 0


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsag",
        description="Straggler-resilient learning: latency fitting, prediction, "
        "simulated experiments, and the idealized coded-computing bound.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit per-worker gamma latency models from a trace CSV")
    p_fit.add_argument("trace", help="CSV with worker_id,iteration,total_latency_s,compute_latency_s")
    p_fit.add_argument("--window", type=float, default=None, help="trailing window in seconds of per-worker busy time")
    p_fit.add_argument("--map", default=None, help="column renames ours=theirs,... for externally published traces")
    p_fit.add_argument("--out", default=None, help="output CSV path (default stdout)")

    p_pred = sub.add_parser("predict", help="predict the latency of the w-th fastest worker")
    p_pred.add_argument("profiles", help="profiles CSV as produced by fit")
    p_pred.add_argument("--w", type=int, required=True)
    p_pred.add_argument("--mode", choices=("order-stat", "iterative"), default="order-stat")
    p_pred.add_argument("--samples", type=int, default=100_000)
    p_pred.add_argument("--iterations", type=int, default=100)
    p_pred.add_argument("--margin", type=float, default=0.0)
    p_pred.add_argument("--iid", action="store_true", help="pool all workers into one shared distribution")
    p_pred.add_argument("--seed", type=int, default=0)
    p_pred.add_argument("--out", default=None)

    p_run = sub.add_parser("run", help="run a simulated experiment from a config file")
    p_run.add_argument("config", help="INI or JSON config (see README for the schema)")
    p_run.add_argument("--seed", type=int, default=None, help="override run.seed")
    p_run.add_argument("--per-worker", action="store_true", help="include per-worker trace columns")
    p_run.add_argument("--out", default=None)

    p_cb = sub.add_parser("coded-bound", help="rescale a GD trace to the idealized MDS coded bound")
    p_cb.add_argument("trace", help="GD trace CSV produced by run --per-worker")
    p_cb.add_argument("--rate", type=float, required=True)
    p_cb.add_argument("--out", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "fit": cmd_fit,
        "predict": cmd_predict,
        "run": cmd_run,
        "coded-bound": cmd_coded_bound,
    }
    try:
        return handlers[args.command](args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # pragma: no cover - defensive
        print(f"internal error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
