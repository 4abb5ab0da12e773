"""Desk-scale convex comparison: all six methods on synthetic logistic and least-squares data.

Writes one trace CSV per run into ``--out`` plus a summary table per problem,
ready for external plotting of loss / gradient norm against epochs.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from bigbatch.harness import (RunConfig, best_per_method, compare_methods, expand_grid,
                              format_table, write_summary)

METHODS = ("gd", "sgd-decay", "sf", "bbs-fixed", "bbs-armijo", "bbs-bb")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--out", default="runs/compare")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--d", type=int, default=20)
    p.add_argument("--epochs", type=float, default=10)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)

    alpha_grid = [0.03, 0.1, 0.3, 1.0, 3.0]
    a_grid, b_grid = [0.1, 0.3, 1.0, 3.0, 10.0, 30.0], [1.0, 10.0, 100.0]
    for problem in ("logistic", "least-squares"):
        base = RunConfig(problem=problem, n=args.n, d=args.d, epochs=args.epochs)
        configs = expand_grid(base, METHODS, range(args.seeds), alpha_grid, a_grid, b_grid)
        # thin the per-update diagnostics of the 10-sample method
        configs = [dataclasses.replace(c, diag_every=50) if c.method == "sgd-decay" else c
                   for c in configs]
        out = Path(args.out) / problem
        rows = best_per_method(compare_methods(configs, args.workers, str(out)))
        print(f"== {problem} (n={args.n}, d={args.d}, {args.epochs:g} epochs)")
        sys.stdout.write(format_table(rows))
        with open(out / "summary.csv", "w") as fh:
            write_summary(rows, fh)


if __name__ == "__main__":
    main()
