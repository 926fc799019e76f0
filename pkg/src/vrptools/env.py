"""Event-driven simulation of the fleet world.

The clock only stops at decision epochs: episode start, a vehicle finishing a
service, or a reveal that wakes a vehicle still waiting to depart.  Between
epochs every vehicle follows its single outstanding commitment.  A vehicle
assigned to a customer whose window is not yet open stays at its current
location until the latest departure time that still reaches the window start,
and remains reroutable until that departure.  Once a vehicle returns to the
depot it is retired (one trip per vehicle).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .core import Customer, Instance, Location, Route, Solution, Visit, distance

FEAS_EPS = 1e-9


class EnvError(RuntimeError):
    pass


class InfeasiblePairError(EnvError):
    """Raised when an assignment violates capacity, window or due-time checks."""


class TerminalStateError(EnvError):
    pass


class VehicleStatus(Enum):
    AT_DEPOT = "at_depot"
    EN_ROUTE = "en_route"
    SERVING = "serving"
    IDLE_AT_CUSTOMER = "idle_at_customer"
    RETIRED = "retired"


@dataclass
class Commitment:
    customer_id: int
    depart_time: float  # leaving the current settled location
    arrival: float      # equals service start (departure is deferred, not early)
    free_at: float      # service completion
    from_loc: Location


@dataclass
class VehicleState:
    id: int
    base_loc: Location
    free_at: float
    remaining_capacity: float
    last_customer: int | None = None
    visits_so_far: int = 0
    outstanding: Commitment | None = None
    retired: bool = False

    @property
    def committed_customer(self) -> int | None:
        return self.outstanding.customer_id if self.outstanding else None

    def is_free(self) -> bool:
        return not self.retired and self.outstanding is None

    def projected(self, inst: Instance, clock: float) -> tuple[Location, float]:
        """Location and time at which the vehicle is next available."""
        if self.outstanding is not None:
            return inst.customer(self.outstanding.customer_id).loc, self.outstanding.free_at
        return self.base_loc, max(self.free_at, clock)

    def status(self, clock: float) -> VehicleStatus:
        if self.retired:
            return VehicleStatus.RETIRED
        settled = (
            VehicleStatus.AT_DEPOT if self.last_customer is None else VehicleStatus.IDLE_AT_CUSTOMER
        )
        if self.outstanding is None:
            return settled
        out = self.outstanding
        if clock < out.depart_time:
            return settled
        if clock < out.arrival:
            return VehicleStatus.EN_ROUTE
        if clock < out.free_at:
            return VehicleStatus.SERVING
        return VehicleStatus.IDLE_AT_CUSTOMER  # completion not yet settled by advance()


@dataclass
class _RecordedVisit:
    visit: Visit
    depart_time: float  # departure from the previous location toward this visit


@dataclass
class _RouteLog:
    visits: list[_RecordedVisit] = field(default_factory=list)
    depot_return: float | None = None


@dataclass
class AdvanceResult:
    clock: float
    freed: list[int]
    revealed: list[int]
    cancelled: list[tuple[int, int]]  # (vehicle_id, customer_id) commitments undone


class _InstanceArrays:
    """Static numpy views of an instance, shared by all clones of a state."""

    def __init__(self, inst: Instance):
        n = inst.n_customers
        self.ids = np.array([c.id for c in inst.customers], dtype=np.int64)
        self.index = {c.id: k for k, c in enumerate(inst.customers)}
        self.xy = np.array([[c.loc.x, c.loc.y] for c in inst.customers], dtype=float).reshape(n, 2)
        self.demand = np.array([c.demand for c in inst.customers], dtype=float)
        self.tw_min = np.array([c.tw_min for c in inst.customers], dtype=float)
        self.tw_max = np.array([c.tw_max for c in inst.customers], dtype=float)
        self.service = np.array([c.service_duration for c in inst.customers], dtype=float)
        dxy = self.xy - np.array([inst.depot.x, inst.depot.y])
        self.depot_dist = np.sqrt(dxy[:, 0] * dxy[:, 0] + dxy[:, 1] * dxy[:, 1])
        dx = self.xy[:, 0][:, None] - self.xy[:, 0][None, :]
        dy = self.xy[:, 1][:, None] - self.xy[:, 1][None, :]
        self.cust_dist = np.sqrt(dx * dx + dy * dy)


@dataclass
class SimState:
    clock: float
    instance: Instance
    vehicles: list[VehicleState]
    active: set[int]
    pending: list[int]  # customer ids, sorted by (reveal_time, id)
    served: set[int]
    dropped: set[int]
    route_logs: dict[int, _RouteLog]
    arrays: _InstanceArrays
    trace: list[str] | None = None

    def free_vehicles(self) -> list[int]:
        return [v.id for v in self.vehicles if v.is_free()]

    def vehicle(self, vid: int) -> VehicleState:
        return self.vehicles[vid]

    def assigned_customers(self) -> set[int]:
        return {v.outstanding.customer_id for v in self.vehicles if v.outstanding is not None}

    def customer_partition(self) -> dict[str, set[int]]:
        return {
            "pending": set(self.pending),
            "active": set(self.active),
            "assigned": self.assigned_customers(),
            "served": set(self.served),
            "dropped": set(self.dropped),
        }

    def _trace(self, line: str) -> None:
        if self.trace is not None:
            self.trace.append(line)


def reset(inst: Instance, trace: bool = False) -> SimState:
    """Fresh state at clock 0: all vehicles at the depot, statically revealed
    customers active, the rest pending ordered by reveal time."""
    vehicles = [
        VehicleState(
            id=k,
            base_loc=inst.depot,
            free_at=0.0,
            remaining_capacity=inst.fleet.capacity,
        )
        for k in range(inst.fleet.count)
    ]
    active = {c.id for c in inst.customers if c.reveal_time <= 0.0}
    pending = [c.id for c in inst.customers if c.reveal_time > 0.0]
    pending.sort(key=lambda cid: (inst.customer(cid).reveal_time, cid))
    state = SimState(
        clock=0.0,
        instance=inst,
        vehicles=vehicles,
        active=active,
        pending=pending,
        served=set(),
        dropped=set(),
        route_logs={k: _RouteLog() for k in range(inst.fleet.count)},
        arrays=_InstanceArrays(inst),
        trace=[] if trace else None,
    )
    state._trace(f"0.000000 reset active={len(active)} pending={len(pending)}")
    sweep_unservable(state)
    return state


def clone_for_soft(s: SimState) -> SimState:
    """Deep, independent copy for soft updates; instance arrays are shared
    (immutable) and the event trace is not carried into clones."""
    vehicles = [
        VehicleState(
            id=v.id,
            base_loc=v.base_loc,
            free_at=v.free_at,
            remaining_capacity=v.remaining_capacity,
            last_customer=v.last_customer,
            visits_so_far=v.visits_so_far,
            outstanding=replace(v.outstanding) if v.outstanding else None,
            retired=v.retired,
        )
        for v in s.vehicles
    ]
    logs = {
        k: _RouteLog(visits=list(log.visits), depot_return=log.depot_return)
        for k, log in s.route_logs.items()
    }
    return SimState(
        clock=s.clock,
        instance=s.instance,
        vehicles=vehicles,
        active=set(s.active),
        pending=list(s.pending),
        served=set(s.served),
        dropped=set(s.dropped),
        route_logs=logs,
        arrays=s.arrays,
        trace=None,
    )


class FeasibilityGrid:
    """Vectorised feasibility of every (non-retired vehicle, active customer)
    pair, from the vehicles' post-commitment projections.  This is the single
    source of truth for pair feasibility; the feature builder reads its arrays.
    """

    def __init__(self, s: SimState):
        inst = s.instance
        arr = s.arrays
        self.state = s
        self.veh_ids = [v.id for v in s.vehicles if not v.retired]
        self.cust_rows = sorted(arr.index[cid] for cid in s.active)
        self.cust_ids = [int(arr.ids[r]) for r in self.cust_rows]
        K, A = len(self.veh_ids), len(self.cust_rows)
        self.veh_proj = np.zeros((K, 2))
        self.veh_free = np.zeros(K)
        self.veh_cap = np.zeros(K)
        for row, vid in enumerate(self.veh_ids):
            loc, when = s.vehicles[vid].projected(inst, s.clock)
            self.veh_proj[row] = (loc.x, loc.y)
            self.veh_free[row] = when
            self.veh_cap[row] = s.vehicles[vid].remaining_capacity
        rows = self.cust_rows
        self.demand = arr.demand[rows]
        self.tw_min = arr.tw_min[rows]
        self.tw_max = arr.tw_max[rows]
        self.service = arr.service[rows]
        self.cust_xy = arr.xy[rows]
        self.cust_depot = arr.depot_dist[rows]

        dx = self.veh_proj[:, 0][:, None] - self.cust_xy[:, 0][None, :]
        dy = self.veh_proj[:, 1][:, None] - self.cust_xy[:, 1][None, :]
        dist = np.sqrt(dx * dx + dy * dy)
        self.dist = dist
        speed = inst.fleet.speed
        self.arrival = self.veh_free[:, None] + dist / speed
        self.completion = np.maximum(self.arrival, self.tw_min[None, :]) + self.service[None, :]
        feasible = (self.veh_cap[:, None] >= self.demand[None, :] - FEAS_EPS) & (
            self.arrival <= self.tw_max[None, :] + FEAS_EPS
        )
        if inst.depot_due is not None:
            feasible &= (
                self.completion + self.cust_depot[None, :] / speed <= inst.depot_due + FEAS_EPS
            )
        self.feasible = feasible
        self._vrow = {vid: row for row, vid in enumerate(self.veh_ids)}
        self._crow = {cid: row for row, cid in enumerate(self.cust_ids)}

    def pairs(self) -> list[tuple[int, int]]:
        out = []
        for krow, vid in enumerate(self.veh_ids):
            frow = self.feasible[krow]
            out.extend((vid, self.cust_ids[arow]) for arow in np.nonzero(frow)[0])
        return out

    def rows(self, vid: int, cid: int) -> tuple[int, int]:
        return self._vrow[vid], self._crow[cid]

    def is_feasible(self, vid: int, cid: int) -> bool:
        if vid not in self._vrow or cid not in self._crow:
            return False
        return bool(self.feasible[self._vrow[vid], self._crow[cid]])


def feasible_pairs(s: SimState) -> list[tuple[int, int]]:
    """All (vehicle, customer) pairs that can be served given commitments.

    Busy vehicles participate through their post-commitment projection, so the
    decision logic can weigh sending a soon-to-be-free vehicle instead of a
    free one.  Retired vehicles never appear.
    """
    return FeasibilityGrid(s).pairs()


def _check_pair(s: SimState, vid: int, cid: int) -> tuple[Location, float, Customer]:
    """Scalar feasibility recheck with the same arithmetic as the grid."""
    inst = s.instance
    v = s.vehicles[vid]
    if v.retired:
        raise InfeasiblePairError(f"vehicle {vid} is retired")
    if cid not in s.active:
        raise InfeasiblePairError(f"customer {cid} is not active")
    cust = inst.customer(cid)
    if v.remaining_capacity < cust.demand - FEAS_EPS:
        raise InfeasiblePairError(f"vehicle {vid} lacks capacity for customer {cid}")
    loc, when = v.projected(inst, s.clock)
    arrival = when + distance(loc, cust.loc) / inst.fleet.speed
    if arrival > cust.tw_max + FEAS_EPS:
        raise InfeasiblePairError(f"vehicle {vid} cannot reach customer {cid} inside its window")
    if inst.depot_due is not None:
        completion = max(arrival, cust.tw_min) + cust.service_duration
        if completion + distance(cust.loc, inst.depot) / inst.fleet.speed > inst.depot_due + FEAS_EPS:
            raise InfeasiblePairError(
                f"serving customer {cid} with vehicle {vid} would miss the depot due time"
            )
    return loc, when, cust


def _settle_commitment(s: SimState, v: VehicleState) -> None:
    """Fold the outstanding commitment into the vehicle's settled state and
    record the executed visit."""
    out = v.outstanding
    assert out is not None
    cust = s.instance.customer(out.customer_id)
    visit = Visit(
        customer_id=out.customer_id,
        arrival=out.arrival,
        service_start=out.arrival,
        departure=out.free_at,
    )
    s.route_logs[v.id].visits.append(_RecordedVisit(visit=visit, depart_time=out.depart_time))
    s.served.add(out.customer_id)
    v.base_loc = cust.loc
    v.free_at = out.free_at
    v.last_customer = out.customer_id
    v.outstanding = None


def apply_assignment(s: SimState, vid: int, cid: int) -> None:
    """Commit vehicle ``vid`` to customer ``cid``.

    Departure is deferred so the vehicle never arrives before the window opens;
    until that departure the commitment can still be cancelled by a reveal.
    Assigning to a busy vehicle (soft chains on clones) first settles the
    current commitment, then chains from its completion point.
    """
    _check_pair(s, vid, cid)
    inst = s.instance
    v = s.vehicles[vid]
    if v.outstanding is not None:
        _settle_commitment(s, v)
    cust = inst.customer(cid)
    travel = distance(v.base_loc, cust.loc) / inst.fleet.speed
    earliest = max(v.free_at, s.clock)
    depart = max(earliest, cust.tw_min - travel)
    arrival = depart + travel
    v.outstanding = Commitment(
        customer_id=cid,
        depart_time=depart,
        arrival=arrival,
        free_at=arrival + cust.service_duration,
        from_loc=v.base_loc,
    )
    v.remaining_capacity -= cust.demand
    if v.remaining_capacity < -FEAS_EPS:
        raise InfeasiblePairError(f"vehicle {vid} capacity went negative")
    v.remaining_capacity = max(v.remaining_capacity, 0.0)
    v.visits_so_far += 1
    s.active.discard(cid)
    s._trace(
        f"{s.clock:.6f} assign veh={vid} cust={cid} depart={depart:.6f} arrive={arrival:.6f}"
    )


def send_to_depot(s: SimState, vid: int) -> None:
    """Retire a free vehicle: it travels back to the depot (zero distance when
    it never left) and receives no further assignments."""
    v = s.vehicles[vid]
    if v.retired:
        raise EnvError(f"vehicle {vid} is already retired")
    if v.outstanding is not None:
        raise EnvError(f"vehicle {vid} has an outstanding commitment")
    depart = max(v.free_at, s.clock)
    if v.visits_so_far > 0:
        back = distance(v.base_loc, s.instance.depot) / s.instance.fleet.speed
        s.route_logs[vid].depot_return = depart + back
    v.retired = True
    s._trace(f"{s.clock:.6f} retire veh={vid} visits={v.visits_so_far}")


def is_terminal(s: SimState) -> bool:
    """True when no customer can still change state: nothing active, nothing
    pending and no commitment in flight."""
    if s.active or s.pending:
        return False
    return all(v.outstanding is None for v in s.vehicles)


def advance(s: SimState) -> AdvanceResult:
    """Jump the clock to the next event (vehicle-free or reveal), settle due
    commitments, activate due reveals and wake not-yet-departed vehicles so the
    next decision epoch can reroute them.  Ties are processed in ascending
    time, then vehicle id, then customer id."""
    if is_terminal(s):
        raise TerminalStateError("advance() called on a terminal state")

    next_free = min(
        (v.outstanding.free_at for v in s.vehicles if v.outstanding is not None),
        default=None,
    )
    next_reveal = None
    if s.pending:
        next_reveal = s.instance.customer(s.pending[0]).reveal_time
    candidates = [t for t in (next_free, next_reveal) if t is not None]
    if not candidates:
        # Active customers with every vehicle busy-free would have produced an
        # event; reaching here means the unservable sweep is out of date.
        raise EnvError("no future event but state is not terminal")
    t = max(min(candidates), s.clock)
    s.clock = t

    freed: list[int] = []
    for v in sorted(s.vehicles, key=lambda v: v.id):
        if v.outstanding is not None and v.outstanding.free_at <= t + FEAS_EPS:
            _settle_commitment(s, v)
            freed.append(v.id)
            s._trace(f"{t:.6f} free veh={v.id} at_cust={v.last_customer}")

    revealed: list[int] = []
    while s.pending and s.instance.customer(s.pending[0]).reveal_time <= t + FEAS_EPS:
        cid = s.pending.pop(0)
        s.active.add(cid)
        revealed.append(cid)
        s._trace(f"{t:.6f} reveal cust={cid}")

    cancelled: list[tuple[int, int]] = []
    if revealed:
        for v in sorted(s.vehicles, key=lambda v: v.id):
            out = v.outstanding
            if out is not None and out.depart_time > t + FEAS_EPS:
                cust = s.instance.customer(out.customer_id)
                v.outstanding = None
                v.remaining_capacity += cust.demand
                v.visits_so_far -= 1
                s.active.add(out.customer_id)
                cancelled.append((v.id, out.customer_id))
                s._trace(f"{t:.6f} wake veh={v.id} released_cust={out.customer_id}")

    sweep_unservable(s)
    return AdvanceResult(clock=t, freed=freed, revealed=revealed, cancelled=cancelled)


def sweep_unservable(s: SimState) -> list[int]:
    """Drop active customers no vehicle can ever serve.

    The check is deliberately optimistic: a vehicle still waiting to depart is
    treated as if its commitment could be cancelled (reveals may do exactly
    that), so only truly hopeless customers are dropped.  Because projected
    arrival times never decrease, a customer hopeless now stays hopeless.
    """
    inst = s.instance
    dropped_now: list[int] = []
    for cid in sorted(s.active):
        cust = inst.customer(cid)
        servable = False
        for v in s.vehicles:
            if v.retired:
                continue
            out = v.outstanding
            if out is not None and out.depart_time > s.clock + FEAS_EPS:
                # Waiting vehicle: could be rerouted from where it stands.
                loc, when = v.base_loc, max(v.free_at, s.clock)
                cap = v.remaining_capacity + inst.customer(out.customer_id).demand
            else:
                loc, when = v.projected(inst, s.clock)
                cap = v.remaining_capacity
            if cap < cust.demand - FEAS_EPS:
                continue
            arrival = when + distance(loc, cust.loc) / inst.fleet.speed
            if arrival > cust.tw_max + FEAS_EPS:
                continue
            if inst.depot_due is not None:
                completion = max(arrival, cust.tw_min) + cust.service_duration
                if completion + distance(cust.loc, inst.depot) / inst.fleet.speed > inst.depot_due + FEAS_EPS:
                    continue
            servable = True
            break
        if not servable:
            s.active.discard(cid)
            s.dropped.add(cid)
            dropped_now.append(cid)
            s._trace(f"{s.clock:.6f} drop cust={cid}")
    return dropped_now


def finalize(s: SimState, wall_time_sec: float = 0.0) -> Solution:
    """Send every remaining vehicle home and assemble the Solution.

    Requires that no commitment is still in flight (run the episode to a
    terminal state first).  Vehicles that never left the depot count as unused
    and contribute no route.
    """
    if any(v.outstanding is not None for v in s.vehicles):
        raise EnvError("finalize() with commitments still in flight")
    for v in s.vehicles:
        if not v.retired:
            send_to_depot(s, v.id)

    inst = s.instance
    routes = []
    for v in sorted(s.vehicles, key=lambda v: v.id):
        log = s.route_logs[v.id]
        if not log.visits:
            continue
        dist = 0.0
        load = 0.0
        prev = inst.depot
        for rec in log.visits:
            cust = inst.customer(rec.visit.customer_id)
            dist += distance(prev, cust.loc)
            load += cust.demand
            prev = cust.loc
        dist += distance(prev, inst.depot)
        routes.append(
            Route(
                vehicle_id=v.id,
                visits=tuple(rec.visit for rec in log.visits),
                depot_departure=log.visits[0].depart_time,
                depot_return=log.depot_return if log.depot_return is not None else s.clock,
                load=load,
                distance=dist,
            )
        )
    unserved = set(s.dropped) | set(s.active) | set(s.pending)
    n = inst.n_customers
    fulfilment = 1.0 if n == 0 else (n - len(unserved)) / n
    return Solution(
        routes=tuple(routes),
        unserved=frozenset(unserved),
        total_distance=sum(r.distance for r in routes),
        vehicles_used=len(routes),
        fulfilment=fulfilment,
        wall_time_sec=wall_time_sec,
    )
