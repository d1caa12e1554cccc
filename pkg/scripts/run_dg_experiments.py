#!/usr/bin/env python3
"""Run the domain-generalization experiment battery.

Four runs on the reference design (n=300, p=60, 8x8 groups, ranks
(6,3,3), 5x5 body, size-5 arms, unit noise):

* ``method_comparison``: tensordg vs single-task ols, maximin, metalm.
* ``rank_sweep``: group-mode rank 2 -> 3 -> 4 (mode-0 rank twice that).
* ``arm_sweep``: arm generating-set size 4 -> 5 -> 6.
* ``body_sweep``: body size 4 -> 5 -> 6.

Each run writes ``<out-dir>/<name>.csv`` with per-replication rows
followed by mean/se summary rows, and prints the summary lines.
"""

import argparse
import pathlib
import time

from tensordg import ExperimentConfig, run_experiment, summarize, \
    write_metrics_csv


def build_configs(args):
    base = dict(replications=args.reps, seed=args.seed,
                workers=args.workers)
    return {
        "method_comparison": ExperimentConfig(
            name="method_comparison", sweep="default",
            methods=("tensordg", "ols", "maximin", "metalm"), **base),
        "rank_sweep": ExperimentConfig(
            name="rank_sweep", sweep="rank", values=(2, 3, 4),
            methods=("tensordg",), **base),
        "arm_sweep": ExperimentConfig(
            name="arm_sweep", sweep="arm", values=(4, 5, 6),
            methods=("tensordg",), **base),
        "body_sweep": ExperimentConfig(
            name="body_sweep", sweep="body", values=(4, 5, 6),
            methods=("tensordg",), **base),
    }


def print_summary(rows):
    for row in rows:
        if row["rep"] != "mean":
            continue
        cell = (f"{row['cell_param']}={row['cell_value']}"
                if row["cell_value"] else row["cell_param"])
        al2e = "nan" if row["al2e"] is None else f"{row['al2e']:.4f}"
        adge = "nan" if row["adge"] is None else f"{row['adge']:.4f}"
        print(f"  {cell:10s} {row['method']:9s} mean_al2e={al2e} "
              f"mean_adge={adge} failed={row['failed']}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="results",
                        help="directory for the metrics CSVs")
    parser.add_argument("--reps", type=int, default=100,
                        help="replications per cell (default: 100)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--only", choices=["method_comparison", "rank_sweep",
                                           "arm_sweep", "body_sweep"],
                        help="run a single battery entry")
    args = parser.parse_args()

    out_dir = pathlib.Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, cfg in build_configs(args).items():
        if args.only and name != args.only:
            continue
        start = time.perf_counter()
        records = run_experiment(cfg)
        path = out_dir / f"{name}.csv"
        write_metrics_csv(path, records)
        print(f"{name}: {len(records)} records in "
              f"{time.perf_counter() - start:.1f}s -> {path}")
        print_summary(summarize(records))


if __name__ == "__main__":
    main()
