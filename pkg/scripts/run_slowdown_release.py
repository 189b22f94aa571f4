#!/usr/bin/env python3
"""Artificial slowdown scenario with a partial release.

Every worker i of 8 is slowed by a factor 1 + 0.4*i/8; the three slowest
are released from the slowdown after one simulated second, mimicking
workers coming out of a latency burst. Compares GD, the idealized coded
bound at rate 45/49, SGD, SAG (w=N), and DSAG (w=N/2).
"""

import argparse
from pathlib import Path

import numpy as np

import dsag
from dsag.cli import _write_csv, trace_rows
from dsag.harness import (
    BurstEvent,
    ExperimentConfig,
    coded_bound_trace,
    prepare_dataset,
    run_experiment,
)
from dsag.latency import WorkerProfile, fit_gamma_from_moments


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/slowdown")
    parser.add_argument("--iterations", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=2)
    args = parser.parse_args()

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    num_workers = 8
    spec = prepare_dataset("logreg", 800, 10, seed=9, row_tail=0.0).spec
    profiles = tuple(
        WorkerProfile(
            i,
            fit_gamma_from_moments(1e-3, (2e-4) ** 2),
            fit_gamma_from_moments(0.02, 0.002**2),
            ref_load_c=dsag.comp_load(1.0, spec.d, 1, spec.n // num_workers),
        )
        for i in range(num_workers)
    )
    bursts = tuple(
        BurstEvent(i - 1, 0.0, 1.0 if i > num_workers - 3 else 1e9, 1 + 0.4 * i / num_workers)
        for i in range(1, num_workers + 1)
    )

    runs = {
        "gd": ("gd", num_workers, None),
        "sgd_w4": ("sgd", 4, None),
        "sag_w8": ("sag", 8, None),
        "dsag_w4": ("dsag", 4, None),
        "coded_r45_49": ("coded", num_workers, 45 / 49),
    }
    for name, (method, w, rate) in runs.items():
        cfg = ExperimentConfig(
            method=method, problem=spec, profiles=profiles, w=w, margin=0.02,
            subpartitions=1, bursts=bursts, iterations=args.iterations,
            code_rate=rate, seed=args.seed,
        )
        trace = run_experiment(cfg)
        header, rows = trace_rows(trace, per_worker=False)
        _write_csv(str(out_dir / f"{name}.csv"), header, rows)
        line = [f"{name:13s} final gap {trace.suboptimality[-1]:.2e}"]
        for gap in (1e-2, 1e-4, 1e-6):
            hit = np.nonzero(trace.suboptimality <= gap)[0]
            line.append(f"{gap:g}: {trace.times[hit[0]]:6.2f}s" if len(hit) else f"{gap:g}: -")
        print("  ".join(line))
    print(f"traces written to {out_dir}/")


if __name__ == "__main__":
    main()
