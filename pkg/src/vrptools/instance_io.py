"""Instance and result file handling.

Covers the Solomon/Gehring benchmark text layout (read-only), the randomised
training-instance generator, the dynamicity transformer that hides a fraction
of the customers until a reveal time, and the native JSON formats for
instances, solutions and result tables.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .core import Customer, FleetSpec, Instance, Location, Route, Solution, Visit, distance

INSTANCE_FORMAT = "vrptools.instance/1"
SOLUTION_FORMAT = "vrptools.solution/1"

RESULT_FIELDS = [
    "instance",
    "type",
    "class",
    "n",
    "algorithm",
    "vehicles",
    "distance",
    "fulfilment",
    "wall_time_sec",
]


class ParseError(ValueError):
    """Raised for malformed benchmark files; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        suffix = f" (line {line})" if line is not None else ""
        super().__init__(message + suffix)


class NativeFormatError(ValueError):
    """Raised when a native file violates its schema; names the field path."""


def parse_solomon(source: str | IO[str], first_n: int | None = None) -> Instance:
    """Parse a Solomon-layout benchmark file (Gehring-Homberger uses the same layout).

    Row 0 of the customer table is the depot; its due time becomes the depot
    due time.  Vehicle speed is 1 distance unit per time unit by convention.
    ``first_n`` keeps only the first n customer rows, matching the usual
    25/50-customer subsets of the 100-customer files.
    """
    text = source.read() if hasattr(source, "read") else source
    lines = text.splitlines()

    name = ""
    vehicle_header_at = None
    for idx, line in enumerate(lines):
        stripped = line.strip()
        if not name and stripped:
            name = stripped.split()[0]
        if stripped.upper().startswith("VEHICLE"):
            vehicle_header_at = idx
            break
    if vehicle_header_at is None:
        raise ParseError("missing VEHICLE section")

    count = capacity = None
    header_line = None
    for idx in range(vehicle_header_at + 1, len(lines)):
        tokens = lines[idx].split()
        if not tokens:
            continue
        if tokens[0].upper().startswith("NUMBER"):
            continue
        if tokens[0].upper().startswith("CUST"):
            raise ParseError("missing vehicle count/capacity row", idx + 1)
        try:
            count, capacity = int(float(tokens[0])), float(tokens[1])
        except (ValueError, IndexError):
            raise ParseError("bad vehicle count/capacity row", idx + 1)
        header_line = idx
        break
    if count is None or capacity is None:
        raise ParseError("missing vehicle count/capacity row")

    customer_header_at = None
    for idx in range(header_line + 1, len(lines)):
        if lines[idx].strip().upper().startswith("CUSTOMER"):
            customer_header_at = idx
            break
    if customer_header_at is None:
        raise ParseError("missing CUSTOMER section")

    rows: list[tuple[int, list[float]]] = []
    for idx in range(customer_header_at + 1, len(lines)):
        tokens = lines[idx].split()
        if not tokens:
            continue
        if tokens[0].upper().startswith("CUST"):
            continue
        try:
            values = [float(t) for t in tokens]
        except ValueError:
            raise ParseError(f"non-numeric cell in customer row: {lines[idx].strip()!r}", idx + 1)
        if len(values) < 7:
            raise ParseError("customer row has fewer than 7 columns", idx + 1)
        rows.append((idx + 1, values))

    if not rows:
        raise ParseError("no depot row in CUSTOMER section")

    _, depot_row = rows[0]
    depot = Location(depot_row[1], depot_row[2])
    depot_due = depot_row[5]

    customer_rows = rows[1:]
    if first_n is not None:
        if first_n < 0:
            raise ParseError("first_n must be non-negative")
        if len(customer_rows) < first_n:
            raise ParseError(
                f"file has {len(customer_rows)} customer rows, fewer than first_n={first_n}"
            )
        customer_rows = customer_rows[:first_n]

    customers = []
    for line_no, vals in customer_rows:
        cid, x, y, demand, ready, due, service = vals[:7]
        if not due > ready:
            raise ParseError(f"customer {int(cid)} has empty time window", line_no)
        customers.append(
            Customer(
                id=int(cid),
                loc=Location(x, y),
                demand=demand,
                tw_min=ready,
                tw_max=due,
                service_duration=service,
                reveal_time=0.0,
            )
        )

    return Instance(
        name=name,
        depot=depot,
        customers=tuple(customers),
        fleet=FleetSpec(count=count, capacity=capacity, speed=1.0),
        depot_due=depot_due,
    )


@dataclass(frozen=True)
class GeneratorConfig:
    """Randomised-instance parameters; the defaults reproduce the training setup
    (20 customers, 4 vehicles, coordinates on [-100,100], exponential demand with
    rate 0.1, capacity 200, speed 10, window starts on [0,200], widths ~N(35,5)
    clipped at 1)."""

    n_customers: int = 20
    n_vehicles: int = 4
    coord_range: tuple[float, float] = (-100.0, 100.0)
    depot_range: tuple[float, float] = (-25.0, 25.0)
    demand_rate: float = 0.1
    capacity: float = 200.0
    speed: float = 10.0
    tw_start_range: tuple[float, float] = (0.0, 200.0)
    tw_width_mean: float = 35.0
    tw_width_std: float = 5.0
    tw_width_min: float = 1.0
    service_duration: float = 0.0
    seed: int = 0


def generate_training_instance(cfg: GeneratorConfig) -> Instance:
    """Draw one random instance.  Sampling order is fixed (depot x/y, then per
    customer: x, y, demand, window start, window width) so a seed pins the
    instance bit-for-bit."""
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.depot_range
    depot = Location(float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi)))
    clo, chi = cfg.coord_range
    customers = []
    for i in range(cfg.n_customers):
        x = float(rng.uniform(clo, chi))
        y = float(rng.uniform(clo, chi))
        demand = float(rng.exponential(1.0 / cfg.demand_rate))
        tw_min = float(rng.uniform(*cfg.tw_start_range))
        width = max(cfg.tw_width_min, float(rng.normal(cfg.tw_width_mean, cfg.tw_width_std)))
        customers.append(
            Customer(
                id=i + 1,
                loc=Location(x, y),
                demand=demand,
                tw_min=tw_min,
                tw_max=tw_min + width,
                service_duration=cfg.service_duration,
                reveal_time=0.0,
            )
        )
    return Instance(
        name=f"rand-n{cfg.n_customers}-s{cfg.seed}",
        depot=depot,
        customers=tuple(customers),
        fleet=FleetSpec(count=cfg.n_vehicles, capacity=cfg.capacity, speed=cfg.speed),
        depot_due=None,
    )


@dataclass(frozen=True)
class DynamicityConfig:
    fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("dynamicity fraction must lie in [0, 1]")


def apply_dynamicity(inst: Instance, cfg: DynamicityConfig) -> Instance:
    """Hide round(fraction * n) customers behind positive reveal times.

    Reveal times are drawn uniformly on (0, tw_min - travel(depot, i)], so a
    customer is revealed while a depot vehicle can still reach its window; when
    that interval is empty the reveal is an epsilon after the start.  Only the
    reveal_time field changes.
    """
    n = inst.n_customers
    k = int(math.floor(cfg.fraction * n + 0.5))
    rng = np.random.default_rng(cfg.seed)
    chosen = set()
    if k > 0:
        chosen = set(int(i) for i in rng.choice(n, size=k, replace=False))
    customers = []
    # Reveal draws happen in ascending customer position so the seed fixes them.
    for pos, cust in enumerate(inst.customers):
        if pos in chosen:
            ub = max(0.0, cust.tw_min - distance(inst.depot, cust.loc) / inst.fleet.speed)
            draw = float(rng.uniform(0.0, ub)) if ub > 0 else 0.0
            reveal = draw if draw > 0 else 1e-9
            customers.append(
                Customer(
                    id=cust.id,
                    loc=cust.loc,
                    demand=cust.demand,
                    tw_min=cust.tw_min,
                    tw_max=cust.tw_max,
                    service_duration=cust.service_duration,
                    reveal_time=reveal,
                )
            )
        else:
            customers.append(cust)
    return Instance(
        name=inst.name,
        depot=inst.depot,
        customers=tuple(customers),
        fleet=inst.fleet,
        depot_due=inst.depot_due,
    )


def strip_reveals(inst: Instance) -> Instance:
    """Return a copy with every reveal time reset to 0 (static view)."""
    if all(c.reveal_time == 0.0 for c in inst.customers):
        return inst
    customers = tuple(
        Customer(c.id, c.loc, c.demand, c.tw_min, c.tw_max, c.service_duration, 0.0)
        for c in inst.customers
    )
    return Instance(inst.name, inst.depot, customers, inst.fleet, inst.depot_due)


# --- native JSON formats -------------------------------------------------

def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise NativeFormatError(f"{path}.{key}: missing field")
    return obj[key]


def write_instance_native(inst: Instance, path) -> None:
    payload = {
        "format": INSTANCE_FORMAT,
        "name": inst.name,
        "depot": {"x": inst.depot.x, "y": inst.depot.y},
        "depot_due": inst.depot_due,
        "fleet": {
            "count": inst.fleet.count,
            "capacity": inst.fleet.capacity,
            "speed": inst.fleet.speed,
        },
        "customers": [
            {
                "id": c.id,
                "x": c.loc.x,
                "y": c.loc.y,
                "demand": c.demand,
                "tw_min": c.tw_min,
                "tw_max": c.tw_max,
                "service": c.service_duration,
                "reveal": c.reveal_time,
            }
            for c in inst.customers
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_instance_native(path) -> Instance:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NativeFormatError(f"$: not valid JSON ({exc})")
    if payload.get("format") != INSTANCE_FORMAT:
        raise NativeFormatError(f"$.format: expected {INSTANCE_FORMAT!r}")
    depot = _require(payload, "depot", "$")
    fleet = _require(payload, "fleet", "$")
    customers = []
    for i, row in enumerate(_require(payload, "customers", "$")):
        path_i = f"$.customers[{i}]"
        try:
            customers.append(
                Customer(
                    id=int(_require(row, "id", path_i)),
                    loc=Location(float(_require(row, "x", path_i)), float(_require(row, "y", path_i))),
                    demand=float(_require(row, "demand", path_i)),
                    tw_min=float(_require(row, "tw_min", path_i)),
                    tw_max=float(_require(row, "tw_max", path_i)),
                    service_duration=float(_require(row, "service", path_i)),
                    reveal_time=float(_require(row, "reveal", path_i)),
                )
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, NativeFormatError):
                raise
            raise NativeFormatError(f"{path_i}: {exc}")
    try:
        return Instance(
            name=str(_require(payload, "name", "$")),
            depot=Location(float(_require(depot, "x", "$.depot")), float(_require(depot, "y", "$.depot"))),
            customers=tuple(customers),
            fleet=FleetSpec(
                count=int(_require(fleet, "count", "$.fleet")),
                capacity=float(_require(fleet, "capacity", "$.fleet")),
                speed=float(_require(fleet, "speed", "$.fleet")),
            ),
            depot_due=payload.get("depot_due"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, NativeFormatError):
            raise
        raise NativeFormatError(f"$: {exc}")


def write_solution_native(sol: Solution, path, instance_name: str = "") -> None:
    payload = {
        "format": SOLUTION_FORMAT,
        "instance": instance_name,
        "routes": [
            {
                "vehicle_id": r.vehicle_id,
                "depot_departure": r.depot_departure,
                "depot_return": r.depot_return,
                "load": r.load,
                "distance": r.distance,
                "visits": [
                    {
                        "customer_id": v.customer_id,
                        "arrival": v.arrival,
                        "service_start": v.service_start,
                        "departure": v.departure,
                    }
                    for v in r.visits
                ],
            }
            for r in sol.routes
        ],
        "unserved": sorted(sol.unserved),
        "total_distance": sol.total_distance,
        "vehicles_used": sol.vehicles_used,
        "fulfilment": sol.fulfilment,
        "wall_time_sec": sol.wall_time_sec,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_solution_native(path) -> Solution:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NativeFormatError(f"$: not valid JSON ({exc})")
    if payload.get("format") != SOLUTION_FORMAT:
        raise NativeFormatError(f"$.format: expected {SOLUTION_FORMAT!r}")
    routes = []
    for i, row in enumerate(_require(payload, "routes", "$")):
        path_i = f"$.routes[{i}]"
        visits = tuple(
            Visit(
                customer_id=int(_require(v, "customer_id", f"{path_i}.visits[{j}]")),
                arrival=float(_require(v, "arrival", f"{path_i}.visits[{j}]")),
                service_start=float(_require(v, "service_start", f"{path_i}.visits[{j}]")),
                departure=float(_require(v, "departure", f"{path_i}.visits[{j}]")),
            )
            for j, v in enumerate(_require(row, "visits", path_i))
        )
        routes.append(
            Route(
                vehicle_id=int(_require(row, "vehicle_id", path_i)),
                visits=visits,
                depot_departure=float(_require(row, "depot_departure", path_i)),
                depot_return=float(_require(row, "depot_return", path_i)),
                load=float(_require(row, "load", path_i)),
                distance=float(_require(row, "distance", path_i)),
            )
        )
    return Solution(
        routes=tuple(routes),
        unserved=frozenset(int(c) for c in _require(payload, "unserved", "$")),
        total_distance=float(_require(payload, "total_distance", "$")),
        vehicles_used=int(_require(payload, "vehicles_used", "$")),
        fulfilment=float(_require(payload, "fulfilment", "$")),
        wall_time_sec=float(_require(payload, "wall_time_sec", "$")),
    )


@dataclass(frozen=True)
class ResultRow:
    """One per-instance result in a Table-3-style results file."""

    instance: str
    type: str
    klass: str
    n: int
    algorithm: str
    vehicles: float
    distance: float
    fulfilment: float
    wall_time_sec: float


def write_results(rows: Iterable[ResultRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_FIELDS)
        for r in rows:
            writer.writerow(
                [
                    r.instance,
                    r.type,
                    r.klass,
                    r.n,
                    r.algorithm,
                    f"{r.vehicles:.4f}",
                    f"{r.distance:.4f}",
                    f"{r.fulfilment:.6f}",
                    f"{r.wall_time_sec:.2f}",
                ]
            )


def read_results(path) -> list[ResultRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(
                ResultRow(
                    instance=rec["instance"],
                    type=rec["type"],
                    klass=rec["class"],
                    n=int(rec["n"]),
                    algorithm=rec["algorithm"],
                    vehicles=float(rec["vehicles"]),
                    distance=float(rec["distance"]),
                    fulfilment=float(rec["fulfilment"]),
                    wall_time_sec=float(rec["wall_time_sec"]),
                )
            )
    return rows
