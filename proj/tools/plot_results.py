# Copyright 2026 The negtree Authors
# Licensed under the Apache License, Version 2.0 (the "License"); you may not
# use this file except in compliance with the License. You may obtain a copy
# at http://www.apache.org/licenses/LICENSE-2.0
"""Plot an experiment output directory: recall curves, TV decay and gradient bias.

Usage: python3 tools/plot_results.py <experiment dir> [--out plots]
"""
import argparse
import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_rows(path):
    if not os.path.exists(path):
        return []
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def plot_recall(rows, out):
    curves = defaultdict(list)
    for r in rows:
        curves[r["run"]].append((int(r["step"]), float(r["recall@1"])))
    fig, ax = plt.subplots()
    for run, pts in sorted(curves.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=run)
    ax.set_xlabel("step")
    ax.set_ylabel("recall@1")
    ax.legend()
    fig.savefig(os.path.join(out, "recall.png"), dpi=120)


def plot_tv(rows, out):
    by_instance = defaultdict(list)
    for r in rows:
        by_instance[r["instance"]].append(
            (int(r["s"]), float(r["empirical_tv"]), float(r["bound"])))
    fig, ax = plt.subplots()
    for inst, pts in sorted(by_instance.items()):
        pts.sort()
        line, = ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o")
        ax.plot([p[0] for p in pts], [p[2] for p in pts], ls="--", color=line.get_color())
    ax.set_yscale("log")
    ax.set_xlabel("chain length s")
    ax.set_ylabel("TV to target (dashed: bound)")
    fig.savefig(os.path.join(out, "tv_decay.png"), dpi=120)


def plot_bias(rows, out):
    fig, ax = plt.subplots()
    ax.scatter([float(r["bound"]) for r in rows], [float(r["error"]) for r in rows])
    hi = max(float(r["bound"]) for r in rows)
    ax.plot([0, hi], [0, hi], ls="--", color="gray")
    ax.set_xlabel("bound")
    ax.set_ylabel("measured gradient error")
    fig.savefig(os.path.join(out, "gradient_bias.png"), dpi=120)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("dir")
    p.add_argument("--out", default="plots")
    a = p.parse_args()
    os.makedirs(a.out, exist_ok=True)
    comparison = read_rows(os.path.join(a.dir, "comparison.csv"))
    tv = read_rows(os.path.join(a.dir, "tv.csv"))
    bias = read_rows(os.path.join(a.dir, "bias.csv"))
    if comparison:
        plot_recall(comparison, a.out)
    if tv:
        plot_tv(tv, a.out)
    if bias:
        plot_bias(bias, a.out)


if __name__ == "__main__":
    main()
