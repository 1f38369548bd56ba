#!/usr/bin/env python3
"""Plots for wsod run directories.

  plot_metrics.py train  RUN_DIR  [-o out.png]   per-round objectives and CorLoc
  plot_metrics.py ablate RUN_DIR  [-o out.png]   variant mAP/CorLoc bars and sweeps
"""
import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_table(path, delimiter):
    with open(path, newline="") as f:
        return list(csv.DictReader(f, delimiter=delimiter))


def number(v):
    return float("nan") if v in ("", "NA") else float(v)


def plot_train(run, out):
    rows = read_table(run / "metrics.tsv", "\t")
    if not rows:
        sys.exit(f"{run / 'metrics.tsv'} has no rounds")
    rounds = [int(r["round"]) for r in rows]
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
    for key in ("cond_cross", "cond_self", "pred_objective", "disc"):
        left.plot(rounds, [number(r[key]) for r in rows], marker="o", label=key)
    left.set_xlabel("round")
    left.set_title("objective terms")
    left.legend()
    right.plot(rounds, [number(r["corloc"]) for r in rows], marker="o", color="black")
    right.set_xlabel("round")
    right.set_ylim(0, 1)
    right.set_title("CorLoc (monitor set)")
    fig.tight_layout()
    fig.savefig(out, dpi=120)


def plot_ablate(run, out):
    summary = read_table(run / "ablation_summary.csv", ",")
    sweeps_path = run / "sweeps.csv"
    sweeps = read_table(sweeps_path, ",") if sweeps_path.exists() else []
    fig, axes = plt.subplots(1, 2 if sweeps else 1, figsize=(11 if sweeps else 6, 4), squeeze=False)
    ax = axes[0][0]
    names = [r["variant"] for r in summary]
    x = range(len(names))
    ax.bar([i - 0.2 for i in x], [number(r["map_mean"]) for r in summary], 0.4,
           yerr=[number(r["map_sd"]) for r in summary], label="mAP")
    ax.bar([i + 0.2 for i in x], [number(r["corloc_mean"]) for r in summary], 0.4,
           yerr=[number(r["corloc_sd"]) for r in summary], label="CorLoc")
    ax.set_xticks(list(x), names)
    ax.set_ylim(0, 1)
    ax.legend()
    ax.set_title("ablation (mean ± sd over seeds)")
    if sweeps:
        ax = axes[0][1]
        grouped = defaultdict(lambda: defaultdict(list))
        for r in sweeps:
            grouped[r["parameter"]][number(r["value"])].append(number(r["map"]))
        for parameter, values in grouped.items():
            xs = sorted(values)
            ax.plot(xs, [sum(values[v]) / len(values[v]) for v in xs], marker="o", label=parameter)
        ax.set_xlabel("value")
        ax.set_ylabel("mean mAP")
        ax.set_title("sweeps")
        ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=120)


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("kind", choices=["train", "ablate"])
    parser.add_argument("run", type=Path)
    parser.add_argument("-o", "--out", type=Path)
    args = parser.parse_args()
    out = args.out or args.run / f"{args.kind}.png"
    (plot_train if args.kind == "train" else plot_ablate)(args.run, out)
    print(out)


if __name__ == "__main__":
    main()
