#!/usr/bin/env python3
"""Plot a benchmark report CSV: metric vs tree count, one line per ntry.

Usage: python scripts/plot_report.py report.csv out.png [--metric missing_rate]

Reads the aggregate ('mean') rows straight off the report; no preprocessing
step is needed between the bench CLI and this script.
"""

from __future__ import annotations

import argparse
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from rpforest.bench import load_report


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("report", help="CSV written by rpforest-bench")
    parser.add_argument("out", help="output image path")
    parser.add_argument(
        "--metric",
        default="missing_rate",
        choices=["missing_rate", "normalized_discrepancy", "build_ms", "query_ms"],
    )
    args = parser.parse_args()

    rows = [r for r in load_report(args.report) if r.aggregate == "mean"]
    if not rows:
        raise SystemExit("report holds no aggregate rows")

    by_ntry: dict[int, list] = defaultdict(list)
    for row in rows:
        by_ntry[row.n_try].append(row)

    fig, ax = plt.subplots(figsize=(6, 4))
    for n_try in sorted(by_ntry):
        cell_rows = sorted(by_ntry[n_try], key=lambda r: r.n_trees)
        xs = [r.n_trees for r in cell_rows]
        ys = [getattr(r, args.metric) for r in cell_rows]
        errs = [getattr(r, args.metric + "_std", None) for r in cell_rows]
        if all(e is not None for e in errs):
            ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=3, label=f"ntry={n_try}")
        else:
            ax.plot(xs, ys, marker="o", label=f"ntry={n_try}")
    ax.set_xlabel("trees")
    ax.set_ylabel(args.metric)
    ax.set_title(f"{rows[0].dataset_id}  (n={rows[0].n}, D={rows[0].dim}, K={rows[0].k})")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
