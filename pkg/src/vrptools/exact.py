"""Ground truth for tiny instances: an exhaustive branch-and-bound solver that
minimises total distance subject to full service, and an exporter of the exact
formulation to the standard LP text format (big-M linearised time links).

The solver is the reference the metaheuristic and the learned dispatcher are
measured against; it refuses instances above a small customer count because the
search is exhaustive.
"""
from __future__ import annotations

from dataclasses import dataclass

from .core import Instance, Route, Solution, Visit, distance

EPS = 1e-9


class ExactLimitError(ValueError):
    pass


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class InfeasibilityWitness:
    """Why no full-service solution exists: either one customer is unreachable
    on its own, or the exhaustive search ran out of candidates."""

    reason: str
    customer_id: int | None = None


@dataclass
class _Search:
    inst: Instance
    ids: list[int]
    best_cost: float
    best_routes: tuple[tuple[int, ...], ...] | None


def brute_force_optimal(
    inst: Instance, max_customers: int = 8
) -> Solution | InfeasibilityWitness:
    """Minimal total distance over all solutions serving every customer.

    Prunes on capacity, windows, the depot due time, partial distance plus a
    minimum-spanning-tree bound, and a canonical route order (routes sorted by
    their first customer) to kill vehicle symmetry.  Ties prefer the
    lexicographically smallest route encoding, making the result deterministic.
    """
    n = inst.n_customers
    if n > max_customers:
        raise ExactLimitError(
            f"{n} customers exceed the exhaustive search limit of {max_customers}"
        )
    if any(c.reveal_time > 0 for c in inst.customers):
        raise ExactLimitError("the oracle solves static instances only")

    speed = inst.fleet.speed
    for c in inst.customers:
        arrival = distance(inst.depot, c.loc) / speed
        if arrival > c.tw_max + EPS:
            return InfeasibilityWitness("window closes before any vehicle can arrive", c.id)
        if c.demand > inst.fleet.capacity + EPS:
            return InfeasibilityWitness("demand exceeds vehicle capacity", c.id)
        if inst.depot_due is not None:
            back = max(arrival, c.tw_min) + c.service_duration + arrival
            if back > inst.depot_due + EPS:
                return InfeasibilityWitness("cannot be served and return by the depot due time", c.id)

    if n == 0:
        return Solution((), frozenset(), 0.0, 0, 1.0)

    ids = [c.id for c in inst.customers]
    search = _Search(inst, ids, float("inf"), None)
    _branch(search, routes=[], route_state=None, remaining=set(ids), partial=0.0)
    if search.best_routes is None:
        return InfeasibilityWitness("exhaustive search found no full-service plan")
    return _assemble(inst, search.best_routes)


@dataclass
class _OpenRoute:
    seq: list[int]
    loc_id: int
    time: float  # service completion at the last customer
    load: float


def _branch(search: _Search, routes, route_state: _OpenRoute | None, remaining, partial):
    inst = search.inst
    speed = inst.fleet.speed

    # Keep exploring cost ties so the lexicographic argmin is deterministic.
    if partial + _mst_bound(search, routes, route_state, remaining) > search.best_cost + 1e-12:
        return

    if not remaining:
        total = partial
        done = [tuple(r) for r in routes]
        if route_state is not None:
            here = inst.customer(route_state.loc_id).loc
            back = distance(here, inst.depot)
            if inst.depot_due is not None and route_state.time + back / speed > inst.depot_due + EPS:
                return
            total += back
            done = done + [tuple(route_state.seq)]
        key = tuple(done)
        if total < search.best_cost - 1e-12 or (
            total <= search.best_cost + 1e-12
            and (search.best_routes is None or key < search.best_routes)
        ):
            search.best_cost = min(total, search.best_cost)
            search.best_routes = key
        return

    candidates = sorted(
        remaining,
        key=lambda cid: (
            distance(
                inst.customer(route_state.loc_id).loc if route_state else inst.depot,
                inst.customer(cid).loc,
            ),
            cid,
        ),
    )

    if route_state is not None:
        here = inst.customer(route_state.loc_id).loc
        for cid in candidates:
            c = inst.customer(cid)
            if route_state.load + c.demand > inst.fleet.capacity + EPS:
                continue
            leg = distance(here, c.loc)
            arrival = route_state.time + leg / speed
            if arrival > c.tw_max + EPS:
                continue
            start = max(arrival, c.tw_min)
            finish = start + c.service_duration
            if inst.depot_due is not None and finish + distance(c.loc, inst.depot) / speed > inst.depot_due + EPS:
                continue
            remaining.discard(cid)
            _branch(
                search,
                routes,
                _OpenRoute(route_state.seq + [cid], cid, finish, route_state.load + c.demand),
                remaining,
                partial + leg,
            )
            remaining.add(cid)
        # Close the current route and return to the depot.
        back = distance(here, inst.depot)
        if inst.depot_due is None or route_state.time + back / speed <= inst.depot_due + EPS:
            _branch(
                search,
                routes + [route_state.seq],
                None,
                remaining,
                partial + back,
            )
        return

    # Open a new route.  Canonical form: route first-customers are increasing,
    # which removes permutations of identical vehicles from the search space.
    if len(routes) >= inst.fleet.count:
        return
    floor = routes[-1][0] if routes else -1
    for cid in candidates:
        if cid <= floor:
            continue
        c = inst.customer(cid)
        if c.demand > inst.fleet.capacity + EPS:
            continue
        leg = distance(inst.depot, c.loc)
        arrival = leg / speed
        if arrival > c.tw_max + EPS:
            continue
        start = max(arrival, c.tw_min)
        finish = start + c.service_duration
        if inst.depot_due is not None and finish + leg / speed > inst.depot_due + EPS:
            continue
        remaining.discard(cid)
        _branch(
            search,
            routes,
            _OpenRoute([cid], cid, finish, c.demand),
            remaining,
            partial + leg,
        )
        remaining.add(cid)


def _mst_bound(search: _Search, routes, route_state: _OpenRoute | None, remaining) -> float:
    """Admissible lower bound on the remaining distance: the minimum spanning
    tree over the unvisited customers, the depot and the open route's end.
    Every completion's future legs form a connected graph over those points."""
    if not remaining:
        if route_state is None:
            return 0.0
        return distance(search.inst.customer(route_state.loc_id).loc, search.inst.depot)
    inst = search.inst
    points = [inst.depot] + [inst.customer(cid).loc for cid in sorted(remaining)]
    if route_state is not None:
        points.append(inst.customer(route_state.loc_id).loc)
    m = len(points)
    in_tree = [False] * m
    dist = [float("inf")] * m
    dist[0] = 0.0
    total = 0.0
    for _ in range(m):
        u = min((d, i) for i, d in enumerate(dist) if not in_tree[i])[1]
        total += dist[u]
        in_tree[u] = True
        pu = points[u]
        for v in range(m):
            if not in_tree[v]:
                d = distance(pu, points[v])
                if d < dist[v]:
                    dist[v] = d
    return total


def _assemble(inst: Instance, route_seqs: tuple[tuple[int, ...], ...]) -> Solution:
    speed = inst.fleet.speed
    routes = []
    for vid, seq in enumerate(route_seqs):
        t = 0.0
        loc = inst.depot
        load = 0.0
        dist = 0.0
        visits = []
        for cid in seq:
            c = inst.customer(cid)
            leg = distance(loc, c.loc)
            arrival = t + leg / speed
            start = max(arrival, c.tw_min)
            t = start + c.service_duration
            dist += leg
            load += c.demand
            loc = c.loc
            visits.append(Visit(cid, arrival, start, t))
        back = distance(loc, inst.depot)
        routes.append(
            Route(
                vehicle_id=vid,
                visits=tuple(visits),
                depot_departure=0.0,
                depot_return=t + back / speed,
                load=load,
                distance=dist + back,
            )
        )
    return Solution(
        routes=tuple(routes),
        unserved=frozenset(),
        total_distance=sum(r.distance for r in routes),
        vehicles_used=len(routes),
        fulfilment=1.0,
    )


# --- LP export ---------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def export_milp(inst: Instance, path) -> None:
    """Write the exact formulation as a standard LP-format text file.

    Variable naming: a_i_j_k (vehicle k travels directly from customer i to j),
    f_i_k (i first on k's route), l_i_k (i last), t_i_k (service start time,
    continuous).  Time links are linearised with per-constraint big-M values of
    the form window-close + service + travel.  Service durations and the depot
    due time are included when the instance carries them; only static instances
    can be exported.
    """
    if any(c.reveal_time > 0 for c in inst.customers):
        raise ExportError("only static instances can be exported")
    customers = list(inst.customers)
    n = len(customers)
    K = inst.fleet.count
    speed = inst.fleet.speed
    horizon = inst.horizon

    def a(i, j, k):
        return f"a_{i}_{j}_{k}"

    def f(i, k):
        return f"f_{i}_{k}"

    def l(i, k):
        return f"l_{i}_{k}"

    def t(i, k):
        return f"t_{i}_{k}"

    obj_terms = []
    for k in range(1, K + 1):
        for ci in customers:
            d_oi = distance(inst.depot, ci.loc)
            obj_terms.append(f"{_fmt(d_oi)} {f(ci.id, k)}")
            obj_terms.append(f"{_fmt(d_oi)} {l(ci.id, k)}")
            for cj in customers:
                if ci.id == cj.id:
                    continue
                obj_terms.append(f"{_fmt(distance(ci.loc, cj.loc))} {a(ci.id, cj.id, k)}")

    constraints: list[str] = []

    def serve_terms(i, k, sign=""):
        terms = [f"{sign}{f(i, k)}"]
        terms += [f"{sign}{a(cj.id, i, k)}" for cj in customers if cj.id != i]
        return terms

    # eq2: each customer served exactly once across all vehicles.
    for ci in customers:
        lhs = []
        for k in range(1, K + 1):
            lhs.extend(serve_terms(ci.id, k))
        constraints.append(f" eq2_{ci.id}: " + " + ".join(lhs) + " = 1")

    for k in range(1, K + 1):
        for ci in customers:
            i = ci.id
            serve = serve_terms(i, k)
            # eq3 lower: t >= tw_min * serve.
            lhs = [t(i, k)] + [f"- {_fmt(ci.tw_min)} {term}" for term in serve]
            constraints.append(f" eq3lo_{i}_{k}: " + " ".join(lhs) + " >= 0")
            # eq3 upper: t <= tw_max + M (1 - serve).
            big = horizon
            lhs = [t(i, k)] + [f"+ {_fmt(big)} {term}" for term in serve]
            constraints.append(
                f" eq3hi_{i}_{k}: " + " ".join(lhs) + f" <= {_fmt(ci.tw_max + big)}"
            )
            # eq4: leaving matches serving.
            lhs = [l(i, k)] + [f"+ {a(i, cj.id, k)}" for cj in customers if cj.id != i]
            rhs = serve_terms(i, k, sign="- ")
            constraints.append(f" eq4_{i}_{k}: " + " ".join(lhs + rhs) + " = 0")
            # eq7: departure from the depot respects travel time.
            d_oi = distance(inst.depot, ci.loc) / speed
            constraints.append(
                f" eq7_{i}_{k}: {t(i, k)} - {_fmt(d_oi)} {f(i, k)} >= 0"
            )
            if inst.depot_due is not None:
                # Last visit must allow the return leg before the due time.
                ret = ci.service_duration + distance(ci.loc, inst.depot) / speed
                big = ci.tw_max + ret
                constraints.append(
                    f" due_{i}_{k}: {t(i, k)} + {_fmt(big)} {l(i, k)} <= "
                    f"{_fmt(inst.depot_due - ret + big)}"
                )
        # eq5: a vehicle that starts must end (and starts at most once).
        firsts = " + ".join(f(ci.id, k) for ci in customers)
        lasts = " - ".join(l(ci.id, k) for ci in customers)
        constraints.append(f" eq5a_{k}: " + firsts + " - " + lasts + " = 0")
        constraints.append(f" eq5b_{k}: " + firsts + " <= 1")
        # eq6: capacity.
        terms = [f"{_fmt(ci.demand)} {f(ci.id, k)}" for ci in customers]
        for ci in customers:
            for cj in customers:
                if ci.id == cj.id:
                    continue
                terms.append(f"{_fmt(cj.demand)} {a(ci.id, cj.id, k)}")
        constraints.append(f" eq6_{k}: " + " + ".join(terms) + f" <= {_fmt(inst.fleet.capacity)}")
        # eq8: consecutive-visit time links, big-M per arc.
        for cj in customers:
            for ci in customers:
                if ci.id == cj.id:
                    continue
                hop = cj.service_duration + distance(cj.loc, ci.loc) / speed
                big = cj.tw_max + hop
                constraints.append(
                    f" eq8_{cj.id}_{ci.id}_{k}: {t(ci.id, k)} - {t(cj.id, k)} - "
                    f"{_fmt(big)} {a(cj.id, ci.id, k)} >= {_fmt(hop - big)}"
                )

    binaries = []
    bounds = []
    for k in range(1, K + 1):
        for ci in customers:
            binaries.append(f(ci.id, k))
            binaries.append(l(ci.id, k))
            bounds.append(f" 0 <= {t(ci.id, k)} <= {_fmt(max(horizon, ci.tw_max))}")
            for cj in customers:
                if ci.id != cj.id:
                    binaries.append(a(ci.id, cj.id, k))

    with open(path, "w") as fh:
        fh.write(f"\\ exact formulation of instance {inst.name}\n")
        fh.write(f"\\ customers={n} vehicles={K}\n")
        fh.write("Minimize\n obj: ")
        if obj_terms:
            fh.write(" + ".join(obj_terms))
        else:
            fh.write("0 dummy")
        fh.write("\nSubject To\n")
        for line in constraints:
            fh.write(line + "\n")
        fh.write("Bounds\n")
        for line in bounds:
            fh.write(line + "\n")
        fh.write("Binary\n")
        for name in binaries:
            fh.write(f" {name}\n")
        fh.write("End\n")
