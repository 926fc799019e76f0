"""Benchmark aggregation and figure rendering.

Per-instance result rows are grouped Table-style by (type, customer count,
class, algorithm) into mean vehicles / distance / wall time / fulfilment, and
the report paths render matplotlib figures next to the delimited output:
training curves, per-algorithm computation-time bars and, when a best-known
reference table is supplied, relative distance-vs-vehicles scatter plots.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

from .instance_io import ResultRow

REPORT_FIELDS = [
    "type",
    "n",
    "class",
    "algorithm",
    "instances",
    "mean_vehicles",
    "mean_distance",
    "mean_wall_time_sec",
    "mean_fulfilment",
]


@dataclass(frozen=True)
class BenchRow:
    type: str
    n: int
    klass: str
    algorithm: str
    instances: int
    mean_vehicles: float
    mean_distance: float
    mean_wall_time_sec: float
    mean_fulfilment: float


def aggregate(rows: list[ResultRow]) -> list[BenchRow]:
    """Arithmetic means over every (type, n, class, algorithm) group, in sorted
    group order; recomputable exactly from the per-instance rows."""
    groups: dict[tuple, list[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.type, row.n, row.klass, row.algorithm), []).append(row)
    out = []
    for key in sorted(groups):
        members = groups[key]
        n = len(members)
        out.append(
            BenchRow(
                type=key[0],
                n=key[1],
                klass=key[2],
                algorithm=key[3],
                instances=n,
                mean_vehicles=sum(r.vehicles for r in members) / n,
                mean_distance=sum(r.distance for r in members) / n,
                mean_wall_time_sec=sum(r.wall_time_sec for r in members) / n,
                mean_fulfilment=sum(r.fulfilment for r in members) / n,
            )
        )
    return out


def write_report(rows: list[BenchRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_FIELDS)
        for r in rows:
            writer.writerow(
                [
                    r.type,
                    r.n,
                    r.klass,
                    r.algorithm,
                    r.instances,
                    f"{r.mean_vehicles:.4f}",
                    f"{r.mean_distance:.4f}",
                    f"{r.mean_wall_time_sec:.2f}",
                    f"{r.mean_fulfilment:.6f}",
                ]
            )


@dataclass(frozen=True)
class BestKnown:
    type: str
    n: int
    klass: str
    vehicles: float
    distance: float


def read_best_known(path) -> dict[tuple[str, int, str], BestKnown]:
    """Reference table of best-known class means: type,n,class,vehicles,distance."""
    out = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            bk = BestKnown(
                type=rec["type"],
                n=int(rec["n"]),
                klass=rec["class"],
                vehicles=float(rec["vehicles"]),
                distance=float(rec["distance"]),
            )
            out[(bk.type, bk.n, bk.klass)] = bk
    return out


def write_ratio_points(
    rows: list[ResultRow], best: dict[tuple[str, int, str], BestKnown], path
) -> list[tuple[float, float, str]]:
    """(vehicle ratio, distance ratio) per instance against the best-known class
    means, written as plot-data CSV; rows without a reference are skipped."""
    points = []
    for row in rows:
        ref = best.get((row.type, row.n, row.klass))
        if ref is None or ref.vehicles <= 0 or ref.distance <= 0:
            continue
        points.append((row.vehicles / ref.vehicles, row.distance / ref.distance, row.instance))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vehicle_ratio", "distance_ratio", "instance"])
        for x, y, name in points:
            writer.writerow([f"{x:.6f}", f"{y:.6f}", name])
    return points


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def training_curve_figure(curve, path) -> None:
    """Fulfilment/distance per episode on top, training loss below."""
    plt = _pyplot()
    episodes = [p.episode for p in curve]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(episodes, [p.fulfilment for p in curve], lw=0.8, label="fulfilment")
    ax1.set_ylabel("fulfilment")
    ax1.set_ylim(0, 1.05)
    ax1b = ax1.twinx()
    ax1b.plot(episodes, [p.distance for p in curve], lw=0.6, color="tab:orange", label="distance")
    ax1b.set_ylabel("distance")
    losses = [(p.episode, p.loss) for p in curve if p.loss is not None]
    if losses:
        ax2.plot([e for e, _ in losses], [l for _, l in losses], lw=0.8, color="tab:red")
        ax2.set_yscale("log")
    ax2.set_ylabel("batch loss")
    ax2.set_xlabel("episode")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def bench_time_figure(report: list[BenchRow], path) -> None:
    """Mean computation time per group, one bar cluster per algorithm."""
    plt = _pyplot()
    algorithms = sorted({r.algorithm for r in report})
    groups = sorted({(r.type, r.n, r.klass) for r in report})
    labels = [f"{t}/{n}/{k}" for t, n, k in groups]
    fig, ax = plt.subplots(figsize=(max(6, len(groups) * 0.9), 4))
    width = 0.8 / max(len(algorithms), 1)
    for ai, algo in enumerate(algorithms):
        times = []
        for g in groups:
            match = [r for r in report if (r.type, r.n, r.klass) == g and r.algorithm == algo]
            times.append(match[0].mean_wall_time_sec if match else 0.0)
        xs = [i + ai * width for i in range(len(groups))]
        ax.bar(xs, times, width=width, label=algo)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(groups))])
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("mean wall time (s)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def ratio_scatter_figure(points: list[tuple[float, float, str]], path) -> None:
    """Relative distance vs relative vehicle count against best-known values."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 5))
    if points:
        ax.scatter([p[0] for p in points], [p[1] for p in points], s=28, alpha=0.7)
    ax.axhline(1.0, color="grey", lw=0.8)
    ax.axvline(1.0, color="grey", lw=0.8)
    ax.set_xlabel("vehicles / best known")
    ax.set_ylabel("distance / best known")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
