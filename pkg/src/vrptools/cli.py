"""Command-line front end: train, solve, dynamic runs, instance generation,
validation, the exact oracle, MILP export and batch benchmarking.

Every command prints one machine-readable JSON status line on success and is
deterministic under --seed; wall-clock fields can be suppressed with
--timing off so output files are byte-reproducible.  Exit codes: 0 success,
2 usage, 3 parse/format error, 4 infeasibility/refusal, 5 validation failure.
"""
from __future__ import annotations

import json
import re
import sys
import time
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import agent, env, exact, ga, report
from .config import ConfigError, RunConfig, load_run_config
from .core import validate_solution
from .instance_io import (
    DynamicityConfig,
    GeneratorConfig,
    NativeFormatError,
    ParseError,
    ResultRow,
    apply_dynamicity,
    generate_training_instance,
    parse_solomon,
    read_instance_native,
    read_solution_native,
    write_instance_native,
    write_results,
    write_solution_native,
)
from .valuenet import WeightFormatError, load_weights, save_weights

EXIT_PARSE = 3
EXIT_INFEASIBLE = 4
EXIT_VALIDATION = 5


def _status(**kwargs) -> None:
    click.echo(json.dumps(kwargs, sort_keys=True))


def _fail(code: int, **kwargs) -> None:
    click.echo(json.dumps(kwargs, sort_keys=True))
    sys.exit(code)


def load_instance(path: str, first_n: int | None = None):
    """Native JSON by extension, Solomon text layout otherwise."""
    p = Path(path)
    try:
        if p.suffix.lower() == ".json":
            inst = read_instance_native(p)
            if first_n is not None:
                inst = replace(inst, customers=inst.customers[:first_n])
            return inst
        with open(p) as fh:
            return parse_solomon(fh, first_n=first_n)
    except FileNotFoundError:
        raise ParseError(f"no such file: {path}")


def instance_meta(name: str) -> tuple[str, str]:
    """(type, class) guessed from a benchmark name like C101 / R205 / RC103."""
    m = re.match(r"^(RC|R|C)(\d)", name.upper())
    if not m:
        return "-", "GEN"
    return m.group(2), m.group(1)


def _result_row(inst, name: str, algorithm: str, sol, timing: str) -> ResultRow:
    typ, klass = instance_meta(name)
    return ResultRow(
        instance=name,
        type=typ,
        klass=klass,
        n=inst.n_customers,
        algorithm=algorithm,
        vehicles=sol.vehicles_used,
        distance=sol.total_distance,
        fulfilment=sol.fulfilment,
        wall_time_sec=sol.wall_time_sec if timing == "wall" else 0.0,
    )


def _maybe_strip_time(sol, timing: str):
    return replace(sol, wall_time_sec=0.0) if timing == "off" else sol


@click.group()
def main():
    """Solvers and benchmark tooling for time-windowed fleet routing."""


def _handle(exc: Exception):
    if isinstance(exc, (ParseError, NativeFormatError, WeightFormatError, ConfigError)):
        _fail(EXIT_PARSE, status="error", kind="parse", message=str(exc))
    if isinstance(exc, (exact.ExactLimitError, exact.ExportError, env.InfeasiblePairError)):
        _fail(EXIT_INFEASIBLE, status="error", kind="infeasible", message=str(exc))
    raise exc


@main.command()
@click.option("--n", "n_customers", default=20, show_default=True)
@click.option("--vehicles", default=4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--coord-range", nargs=2, type=float, default=(-100.0, 100.0), show_default=True)
@click.option("--depot-range", nargs=2, type=float, default=(-25.0, 25.0), show_default=True)
@click.option("--demand-rate", default=0.1, show_default=True)
@click.option("--capacity", default=200.0, show_default=True)
@click.option("--speed", default=10.0, show_default=True)
@click.option("--tw-start", nargs=2, type=float, default=(0.0, 200.0), show_default=True)
@click.option("--tw-width-mean", default=35.0, show_default=True)
@click.option("--tw-width-std", default=5.0, show_default=True)
@click.option("--tw-width-min", default=1.0, show_default=True)
@click.option("--service", default=0.0, show_default=True)
@click.option("--dynamicity", default=0.0, show_default=True, help="Fraction of customers revealed late.")
@click.option("--reveal-seed", default=0, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path())
def generate(n_customers, vehicles, seed, coord_range, depot_range, demand_rate, capacity,
             speed, tw_start, tw_width_mean, tw_width_std, tw_width_min, service,
             dynamicity, reveal_seed, output):
    """Generate a random instance (training distribution by default)."""
    try:
        cfg = GeneratorConfig(
            n_customers=n_customers,
            n_vehicles=vehicles,
            coord_range=tuple(coord_range),
            depot_range=tuple(depot_range),
            demand_rate=demand_rate,
            capacity=capacity,
            speed=speed,
            tw_start_range=tuple(tw_start),
            tw_width_mean=tw_width_mean,
            tw_width_std=tw_width_std,
            tw_width_min=tw_width_min,
            service_duration=service,
            seed=seed,
        )
        inst = generate_training_instance(cfg)
        if dynamicity > 0:
            inst = apply_dynamicity(inst, DynamicityConfig(fraction=dynamicity, seed=reveal_seed))
        write_instance_native(inst, output)
    except Exception as exc:  # noqa: BLE001
        _handle(exc)
    _status(status="ok", command="generate", customers=inst.n_customers,
            vehicles=inst.fleet.count, dynamic=sum(1 for c in inst.customers if c.reveal_time > 0),
            path=str(output))


@main.command()
@click.argument("instance", type=click.Path(exists=True))
@click.argument("solution", type=click.Path(exists=True))
@click.option("--first-n", type=int, default=None)
def validate(instance, solution, first_n):
    """Check a solution file against the constraint set of an instance."""
    try:
        inst = load_instance(instance, first_n)
        sol = read_solution_native(solution)
    except Exception as exc:  # noqa: BLE001
        _handle(exc)
    rep = validate_solution(inst, sol)
    if rep.ok:
        _status(status="ok", command="validate", fulfilment=sol.fulfilment)
    else:
        _fail(
            EXIT_VALIDATION,
            status="invalid",
            command="validate",
            violations=sorted(rep.labels()),
            messages=[v.message for v in rep.violations][:20],
            structural=rep.structural[:20],
        )


@main.command()
@click.argument("instance", type=click.Path(exists=True))
@click.option("--first-n", type=int, default=None)
@click.option("--max-customers", default=8, show_default=True)
@click.option("-o", "--output", type=click.Path(), default=None)
def oracle(instance, first_n, max_customers, output):
    """Exhaustive optimal solver for tiny instances (full service, min distance)."""
    try:
        inst = load_instance(instance, first_n)
        t0 = time.perf_counter()
        result = exact.brute_force_optimal(inst, max_customers=max_customers)
        elapsed = time.perf_counter() - t0
    except Exception as exc:  # noqa: BLE001
        _handle(exc)
    if isinstance(result, exact.InfeasibilityWitness):
        _fail(EXIT_INFEASIBLE, status="infeasible", command="oracle",
              reason=result.reason, customer=result.customer_id)
    if output:
        write_solution_native(result, output, instance_name=inst.name)
    _status(status="ok", command="oracle", distance=round(result.total_distance, 6),
            vehicles=result.vehicles_used, seconds=round(elapsed, 2))


@main.command("export-milp")
@click.argument("instance", type=click.Path(exists=True))
@click.option("--first-n", type=int, default=None)
@click.option("-o", "--output", required=True, type=click.Path())
def export_milp(instance, first_n, output):
    """Write the exact formulation as an LP-format text file."""
    try:
        inst = load_instance(instance, first_n)
        exact.export_milp(inst, output)
    except Exception as exc:  # noqa: BLE001
        _handle(exc)
    n, k = inst.n_customers, inst.fleet.count
    _status(status="ok", command="export-milp", path=str(output),
            binaries=n * (n - 1) * k + 2 * n * k, continuous=n * k)


def _load_run_config(config_path) -> RunConfig:
    return load_run_config(config_path) if config_path else RunConfig()


@main.command()
@click.argument("instance", type=click.Path(exists=True))
@click.option("--first-n", type=int, default=None)
@click.option("--algorithm", type=click.Choice(["rl", "ga"]), default="rl", show_default=True)
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None,
              help="Value-network weights (rl).")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--output", type=click.Path(), default=None, help="Solution file.")
@click.option("--results-csv", type=click.Path(), default=None, help="One-row results table.")
@click.option("--timing", type=click.Choice(["wall", "off"]), default="wall", show_default=True)
def solve(instance, first_n, algorithm, weights_path, config_path, seed, output,
          results_csv, timing):
    """Solve a static instance with the learned dispatcher or the GA baseline."""
    try:
        inst = load_instance(instance, first_n)
        run_cfg = _load_run_config(config_path)
        if algorithm == "rl":
            if not weights_path:
                raise click.UsageError("--weights is required for the rl algorithm")
            net = load_weights(weights_path)
            sol = agent.solve(inst, net, mode="static").solution
        else:
            ga_cfg = replace(run_cfg.ga, seed=seed)
            sol = ga.run_ga(inst, ga_cfg).solution
    except click.UsageError:
        raise
    except Exception as exc:  # noqa: BLE001
        _handle(exc)
    sol = _maybe_strip_time(sol, timing)
    if output:
        write_solution_native(sol, output, instance_name=inst.name)
    if results_csv:
        write_results([_result_row(inst, inst.name, algorithm, sol, timing)], results_csv)
    _status(status="ok", command="solve", algorithm=algorithm, instance=inst.name,
            fulfilment=round(sol.fulfilment, 6), distance=round(sol.total_distance, 4),
            vehicles=sol.vehicles_used,
            seconds=round(sol.wall_time_sec, 2))


def _percentile(values: list[float], q: float) -> float:
    if not values:
        return 0.0
    return float(np.percentile(np.array(values), q))


@main.command()
@click.argument("instance", type=click.Path(exists=True))
@click.option("--first-n", type=int, default=None)
@click.option("--algorithm", type=click.Choice(["rl", "ga"]), default="rl", show_default=True)
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--dynamicity", type=float, default=None,
              help="Hide this fraction of customers (applied to a static instance).")
@click.option("--reveal-seed", default=0, show_default=True)
@click.option("-o", "--output", type=click.Path(), default=None)
@click.option("--results-csv", type=click.Path(), default=None)
@click.option("--timing", type=click.Choice(["wall", "off"]), default="wall", show_default=True)
def dynamic(instance, first_n, algorithm, weights_path, config_path, seed, dynamicity,
            reveal_seed, output, results_csv, timing):
    """Solve with late-revealed customers (per instance reveal times, or by
    applying a dynamicity fraction first)."""
    try:
        inst = load_instance(instance, first_n)
        if dynamicity is not None:
            inst = apply_dynamicity(inst, DynamicityConfig(fraction=dynamicity, seed=reveal_seed))
        run_cfg = _load_run_config(config_path)
        extra: dict = {}
        if algorithm == "rl":
            if not weights_path:
                raise click.UsageError("--weights is required for the rl algorithm")
            net = load_weights(weights_path)
            res = agent.solve(inst, net, mode="dynamic")
            sol = res.solution
            lat = res.epoch_latencies
            extra = {
                "epochs": len(lat),
                "latency_p50_ms": round(_percentile(lat, 50) * 1e3, 3),
                "latency_p90_ms": round(_percentile(lat, 90) * 1e3, 3),
                "latency_max_ms": round(max(lat) * 1e3, 3) if lat else 0.0,
            }
        else:
            ga_cfg = replace(run_cfg.ga, seed=seed)
            res = ga.run_ga_dynamic(inst, ga_cfg)
            sol = res.solution
            extra = {
                "replans": len(res.replan_secs),
                "initial_plan_sec": round(res.initial_plan_sec, 2),
                "replan_sec_total": round(sum(res.replan_secs), 2),
            }
    except click.UsageError:
        raise
    except Exception as exc:  # noqa: BLE001
        _handle(exc)
    sol = _maybe_strip_time(sol, timing)
    if output:
        write_solution_native(sol, output, instance_name=inst.name)
    if results_csv:
        write_results([_result_row(inst, inst.name, algorithm, sol, timing)], results_csv)
    _status(status="ok", command="dynamic", algorithm=algorithm, instance=inst.name,
            fulfilment=round(sol.fulfilment, 6), distance=round(sol.total_distance, 4),
            vehicles=sol.vehicles_used, seconds=round(sol.wall_time_sec, 2), **extra)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", default=1, show_default=True)
@click.option("--episodes", type=int, default=None, help="Override the configured episode count.")
@click.option("--resume", "resume_path", type=click.Path(exists=True), default=None,
              help="Continue from saved weights.")
@click.option("--start-episode", default=0, show_default=True,
              help="Episode numbering offset when resuming.")
@click.option("-o", "--out-weights", required=True, type=click.Path())
@click.option("--curve", "curve_path", type=click.Path(), default=None)
@click.option("--figure", "figure_path", type=click.Path(), default=None)
def train(config_path, seed, episodes, resume_path, start_episode, out_weights,
          curve_path, figure_path):
    """Train the value network on randomised instances."""
    try:
        run_cfg = _load_run_config(config_path)
        cfg = replace(run_cfg.train, master_seed=seed, start_episode=start_episode)
        if episodes is not None:
            cfg = replace(cfg, n_episodes=episodes)
        initial = load_weights(resume_path) if resume_path else None
        result = agent.train(cfg, weights=run_cfg.reward, initial_net=initial)
        save_weights(result.net, out_weights)
        if curve_path:
            _write_curve(result.curve, curve_path)
        if figure_path:
            report.training_curve_figure(result.curve, figure_path)
    except Exception as exc:  # noqa: BLE001
        _handle(exc)
    tail = result.curve[-50:]
    mean_f = sum(p.fulfilment for p in tail) / len(tail) if tail else 0.0
    _status(status="ok", command="train", episodes=len(result.curve),
            final_epsilon=round(result.curve[-1].epsilon, 4) if result.curve else None,
            mean_fulfilment_last50=round(mean_f, 4), weights=str(out_weights))


def _write_curve(curve, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "fulfilment", "distance", "loss", "epsilon"])
        for p in curve:
            writer.writerow(
                [
                    p.episode,
                    f"{p.fulfilment:.6f}",
                    f"{p.distance:.4f}",
                    "" if p.loss is None else f"{p.loss:.8g}",
                    f"{p.epsilon:.6f}",
                ]
            )


@main.command()
@click.option("--instances-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--glob", "pattern", default="*", show_default=True)
@click.option("--first-n", type=int, default=None)
@click.option("--algorithms", default="rl,ga", show_default=True)
@click.option("--weights", "weights_path", type=click.Path(exists=True), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--repetitions", default=1, show_default=True)
@click.option("--dynamicity", type=float, default=None)
@click.option("--reveal-seed", default=0, show_default=True)
@click.option("--best-known", "best_known_path", type=click.Path(exists=True), default=None)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--timing", type=click.Choice(["wall", "off"]), default="wall", show_default=True)
def bench(instances_dir, pattern, first_n, algorithms, weights_path, config_path, seed,
          repetitions, dynamicity, reveal_seed, best_known_path, out_dir, timing):
    """Run algorithms over a directory of instances and report grouped means,
    with per-instance rows, figures and optional best-known ratio plots."""
    try:
        paths = sorted(Path(instances_dir).glob(pattern))
        if not paths:
            raise ParseError(f"no instances match {pattern!r} in {instances_dir}")
        algos = [a.strip() for a in algorithms.split(",") if a.strip()]
        run_cfg = _load_run_config(config_path)
        net = load_weights(weights_path) if "rl" in algos else None
        if "rl" in algos and net is None:
            raise click.UsageError("--weights is required when benchmarking rl")

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows: list[ResultRow] = []
        for path in paths:
            inst = load_instance(str(path), first_n)
            if dynamicity is not None:
                inst = apply_dynamicity(
                    inst, DynamicityConfig(fraction=dynamicity, seed=reveal_seed)
                )
            dynamic_mode = any(c.reveal_time > 0 for c in inst.customers)
            for algo in algos:
                for rep in range(repetitions):
                    name = inst.name if repetitions == 1 else f"{inst.name}#r{rep}"
                    if algo == "rl":
                        sol = agent.solve(
                            inst, net, mode="dynamic" if dynamic_mode else "static"
                        ).solution
                    elif algo == "ga":
                        ga_seed = int(
                            np.random.default_rng((seed, rep, hash(inst.name) & 0xFFFF)).integers(2**62)
                        )
                        ga_cfg = replace(run_cfg.ga, seed=ga_seed)
                        if dynamic_mode:
                            sol = ga.run_ga_dynamic(inst, ga_cfg).solution
                        else:
                            sol = ga.run_ga(inst, ga_cfg).solution
                    else:
                        raise click.UsageError(f"unknown algorithm {algo!r}")
                    rows.append(_result_row(inst, name, algo, sol, timing))
        write_results(rows, out / "per_instance.csv")
        grouped = report.aggregate(rows)
        report.write_report(grouped, out / "report.csv")
        report.bench_time_figure(grouped, out / "times.png")
        ratio_points = None
        if best_known_path:
            best = report.read_best_known(best_known_path)
            ratio_points = report.write_ratio_points(rows, best, out / "ratios.csv")
            report.ratio_scatter_figure(ratio_points, out / "ratios.png")
    except click.UsageError:
        raise
    except Exception as exc:  # noqa: BLE001
        _handle(exc)
    _status(status="ok", command="bench", instances=len(paths), rows=len(rows),
            groups=len(grouped), out_dir=str(out),
            ratio_points=None if ratio_points is None else len(ratio_points))


if __name__ == "__main__":
    main()
