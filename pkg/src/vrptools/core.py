"""Domain types for time-windowed fleet routing, plus the independent solution validator.

All types are immutable after construction and safe to share between workers.
Times, loads and distances are continuous (floats); the validator compares them
with a fixed tolerance because timestamps are built from floating-point leg sums.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

# Tolerance used by the validator for every time / load comparison.
VALIDATION_TOL = 1e-6


@dataclass(frozen=True)
class Location:
    x: float
    y: float


def distance(a: Location, b: Location) -> float:
    """Euclidean distance between two locations."""
    dx = a.x - b.x
    dy = a.y - b.y
    return math.sqrt(dx * dx + dy * dy)


@dataclass(frozen=True)
class Customer:
    id: int
    loc: Location
    demand: float
    tw_min: float
    tw_max: float
    service_duration: float = 0.0
    reveal_time: float = 0.0

    def __post_init__(self):
        if not (self.tw_min < self.tw_max):
            raise ValueError(f"customer {self.id}: tw_min must be < tw_max")
        if self.demand < 0:
            raise ValueError(f"customer {self.id}: negative demand")
        if self.reveal_time < 0:
            raise ValueError(f"customer {self.id}: negative reveal_time")


@dataclass(frozen=True)
class FleetSpec:
    count: int
    capacity: float
    speed: float

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("fleet count must be >= 1")
        if self.capacity <= 0 or self.speed <= 0:
            raise ValueError("fleet capacity and speed must be positive")


@dataclass(frozen=True)
class Instance:
    """Immutable problem description.

    ``horizon`` is the latest customer window close (or the depot due time when
    one is given) and normalises all time features; ``diagonal`` is the bounding
    box diagonal of every location including the depot and normalises distances.
    Both are derived, never stored in files.
    """

    name: str
    depot: Location
    customers: tuple[Customer, ...]
    fleet: FleetSpec
    depot_due: float | None = None
    horizon: float = field(init=False)
    diagonal: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "customers", tuple(self.customers))
        ids = [c.id for c in self.customers]
        if len(ids) != len(set(ids)):
            raise ValueError("customer ids must be unique")
        if self.depot_due is not None:
            horizon = float(self.depot_due)
        elif self.customers:
            horizon = max(c.tw_max for c in self.customers)
        else:
            horizon = 0.0
        xs = [self.depot.x] + [c.loc.x for c in self.customers]
        ys = [self.depot.y] + [c.loc.y for c in self.customers]
        diag = math.sqrt((max(xs) - min(xs)) ** 2 + (max(ys) - min(ys)) ** 2)
        # Degenerate single-point instances would otherwise divide by zero;
        # every distance is then 0 so the floor value never leaks into features.
        object.__setattr__(self, "horizon", max(horizon, 1e-12))
        object.__setattr__(self, "diagonal", max(diag, 1e-12))

    @property
    def n_customers(self) -> int:
        return len(self.customers)

    def customer(self, cid: int) -> Customer:
        return self._by_id()[cid]

    def has_customer(self, cid: int) -> bool:
        return cid in self._by_id()

    def _by_id(self) -> dict[int, Customer]:
        cache = self.__dict__.get("_id_cache")
        if cache is None:
            cache = {c.id: c for c in self.customers}
            self.__dict__["_id_cache"] = cache
        return cache


@dataclass(frozen=True)
class Visit:
    customer_id: int
    arrival: float
    service_start: float
    departure: float


@dataclass(frozen=True)
class Route:
    vehicle_id: int
    visits: tuple[Visit, ...]
    depot_departure: float
    depot_return: float
    load: float
    distance: float

    def __post_init__(self):
        object.__setattr__(self, "visits", tuple(self.visits))


@dataclass(frozen=True)
class Solution:
    routes: tuple[Route, ...]
    unserved: frozenset[int]
    total_distance: float
    vehicles_used: int
    fulfilment: float
    wall_time_sec: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "routes", tuple(self.routes))
        object.__setattr__(self, "unserved", frozenset(self.unserved))


@dataclass(frozen=True)
class Violation:
    """One violated constraint, labelled by the formulation's equation number."""

    constraint: str  # "eq2".."eq8", "depot_due", "fleet" or "metrics"
    message: str


@dataclass
class ValidationReport:
    ok: bool
    violations: list[Violation]
    structural: list[str]

    def labels(self) -> set[str]:
        return {v.constraint for v in self.violations}


def route_metrics(inst: Instance, route: Route) -> tuple[float, float, float]:
    """Recompute (distance, load, duration) for a route from first principles.

    Distance covers depot -> first, the inter-customer legs and last -> depot.
    """
    if not route.visits:
        return 0.0, 0.0, 0.0
    dist = 0.0
    load = 0.0
    prev = inst.depot
    for visit in route.visits:
        cust = inst.customer(visit.customer_id)
        dist += distance(prev, cust.loc)
        load += cust.demand
        prev = cust.loc
    dist += distance(prev, inst.depot)
    duration = route.depot_return - route.depot_departure
    return dist, load, duration


def validate_solution(inst: Instance, sol: Solution) -> ValidationReport:
    """Check a solution against the full constraint set of the formulation.

    Returns a report listing each violated constraint by equation label:
    uniqueness (eq2), time windows (eq3), flow/timestamp continuity (eq4),
    depot return (eq5), capacity (eq6), travel-time feasibility (eq7/eq8)
    and the depot due time when the instance has one.  References to unknown
    customer ids are structural errors, reported separately from constraint
    violations.
    """
    tol = VALIDATION_TOL
    violations: list[Violation] = []
    structural: list[str] = []

    known = {c.id for c in inst.customers}
    for route in sol.routes:
        for visit in route.visits:
            if visit.customer_id not in known:
                structural.append(
                    f"route {route.vehicle_id}: unknown customer id {visit.customer_id}"
                )
    for cid in sol.unserved:
        if cid not in known:
            structural.append(f"unserved set: unknown customer id {cid}")
    if structural:
        return ValidationReport(False, violations, structural)

    # eq2: every customer either unserved or visited exactly once overall.
    counts: dict[int, int] = {c.id: 0 for c in inst.customers}
    for route in sol.routes:
        for visit in route.visits:
            counts[visit.customer_id] += 1
    for cid, cnt in counts.items():
        in_unserved = cid in sol.unserved
        if in_unserved and cnt > 0:
            violations.append(
                Violation("eq2", f"customer {cid} marked unserved but visited {cnt} time(s)")
            )
        elif not in_unserved and cnt != 1:
            violations.append(
                Violation("eq2", f"customer {cid} visited {cnt} time(s), expected exactly 1")
            )

    if len(sol.routes) > inst.fleet.count:
        violations.append(
            Violation(
                "fleet",
                f"{len(sol.routes)} routes exceed fleet size {inst.fleet.count}",
            )
        )
    seen_vehicles = set()
    for route in sol.routes:
        if route.vehicle_id in seen_vehicles:
            violations.append(
                Violation("fleet", f"vehicle {route.vehicle_id} appears in two routes")
            )
        seen_vehicles.add(route.vehicle_id)

    speed = inst.fleet.speed
    for route in sol.routes:
        if not route.visits:
            continue
        rid = route.vehicle_id
        # eq7: first visit cannot occur before travel from the depot allows.
        first = route.visits[0]
        first_cust = inst.customer(first.customer_id)
        depot_leg = distance(inst.depot, first_cust.loc) / speed
        if first.arrival < depot_leg - tol:
            violations.append(
                Violation("eq7", f"route {rid}: arrival at {first.customer_id} precedes depot travel time")
            )
        if first.arrival < route.depot_departure + depot_leg - tol:
            violations.append(
                Violation("eq7", f"route {rid}: arrival at {first.customer_id} inconsistent with depot departure")
            )
        if route.depot_departure < -tol:
            violations.append(Violation("eq7", f"route {rid}: negative depot departure"))

        prev_visit: Visit | None = None
        prev_cust: Customer | None = None
        for visit in route.visits:
            cust = inst.customer(visit.customer_id)
            # eq3: service must start inside the customer's window.
            if visit.service_start < cust.tw_min - tol or visit.service_start > cust.tw_max + tol:
                violations.append(
                    Violation(
                        "eq3",
                        f"route {rid}: service at {cust.id} starts {visit.service_start:.6f} "
                        f"outside window [{cust.tw_min}, {cust.tw_max}]",
                    )
                )
            # eq4: timestamps along the route must chain consistently.
            expected_start = max(visit.arrival, cust.tw_min)
            if abs(visit.service_start - expected_start) > tol:
                violations.append(
                    Violation("eq4", f"route {rid}: service start at {cust.id} != max(arrival, tw_min)")
                )
            if abs(visit.departure - (visit.service_start + cust.service_duration)) > tol:
                violations.append(
                    Violation("eq4", f"route {rid}: departure at {cust.id} != service start + service time")
                )
            if prev_visit is not None and prev_cust is not None:
                # eq8: travel time between consecutive customers.
                leg = distance(prev_cust.loc, cust.loc) / speed
                if visit.arrival < prev_visit.departure + leg - tol:
                    violations.append(
                        Violation(
                            "eq8",
                            f"route {rid}: arrival at {cust.id} violates travel time from {prev_cust.id}",
                        )
                    )
            prev_visit, prev_cust = visit, cust

        # eq5: the vehicle must end its trip back at the depot.
        last = route.visits[-1]
        last_cust = inst.customer(last.customer_id)
        return_leg = distance(last_cust.loc, inst.depot) / speed
        if route.depot_return < last.departure + return_leg - tol:
            violations.append(
                Violation("eq5", f"route {rid}: depot return earlier than travel from {last_cust.id} allows")
            )
        # eq6: capacity.
        dist, load, _ = route_metrics(inst, route)
        if load > inst.fleet.capacity + tol:
            violations.append(
                Violation("eq6", f"route {rid}: load {load:.6f} exceeds capacity {inst.fleet.capacity}")
            )
        if abs(load - route.load) > tol:
            violations.append(Violation("metrics", f"route {rid}: stored load differs from visit sum"))
        if abs(dist - route.distance) > 1e-6:
            violations.append(Violation("metrics", f"route {rid}: stored distance differs from leg sum"))
        if inst.depot_due is not None and route.depot_return > inst.depot_due + tol:
            violations.append(
                Violation("depot_due", f"route {rid}: depot return {route.depot_return:.6f} after due {inst.depot_due}")
            )

    total = sum(r.distance for r in sol.routes)
    if abs(total - sol.total_distance) > 1e-6:
        violations.append(Violation("metrics", "total_distance differs from route sum"))
    used = sum(1 for r in sol.routes if r.visits)
    if used != sol.vehicles_used:
        violations.append(Violation("metrics", "vehicles_used differs from non-empty route count"))
    n = inst.n_customers
    expected_fulfilment = 1.0 if n == 0 else (n - len(sol.unserved)) / n
    if abs(sol.fulfilment - expected_fulfilment) > 1e-9:
        violations.append(Violation("metrics", "fulfilment differs from served ratio"))

    return ValidationReport(not violations and not structural, violations, structural)
