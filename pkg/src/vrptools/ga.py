"""Genetic-algorithm baseline for the static problem and a re-planning wrapper
for the dynamic one.

A chromosome is the whole tour: one customer sequence per vehicle slot.  Every
chromosome in every generation is feasible; fitness is total distance plus a
weight per vehicle used (distances on these instances run two orders of
magnitude above vehicle counts, hence the default weight of 100).  Selection is
binary tournament, crossover preserves routes sharing the largest common node
set or arc set, mutation applies one feasible relocate or swap with probability
0.10, and the loop stops after 50 generations without improvement of the best.

For dynamic runs the plan is executed until a reveal arrives, committed legs
are frozen, and the GA re-plans the remaining customers from each vehicle's
projected state; wall time accumulates over the initial plan and every re-plan.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Instance, Location, Route, Solution, Visit, distance
from .env import _InstanceArrays

EPS = 1e-9


@dataclass(frozen=True)
class GaConfig:
    population: int = 50
    vehicle_weight: float = 100.0
    mutation_prob: float = 0.10
    stall_generations: int = 50
    seed: int = 0
    elite: int = 1
    max_generations: int | None = None  # safety valve; None follows the stall rule only

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")


@dataclass(frozen=True)
class VehicleProfile:
    """Starting condition of one vehicle slot: where it becomes available, when,
    with how much capacity.  Fresh profiles are undispatched vehicles at the
    depot; only they add to the vehicle count term of the fitness."""

    loc: Location
    earliest: float
    capacity: float
    fresh: bool = True


class GaProblem:
    """Instance view the GA operates on: a customer pool and vehicle profiles."""

    def __init__(
        self,
        inst: Instance,
        pool: list[int] | None = None,
        profiles: list[VehicleProfile] | None = None,
        vehicle_weight: float = 100.0,
    ):
        self.inst = inst
        self.arrays = _InstanceArrays(inst)
        self.pool = list(pool) if pool is not None else [c.id for c in inst.customers]
        if profiles is None:
            profiles = [
                VehicleProfile(inst.depot, 0.0, inst.fleet.capacity, fresh=True)
                for _ in range(inst.fleet.count)
            ]
        self.profiles = profiles
        self.vehicle_weight = vehicle_weight
        self._dist_from_profile = [
            np.sqrt(
                (self.arrays.xy[:, 0] - p.loc.x) ** 2 + (self.arrays.xy[:, 1] - p.loc.y) ** 2
            )
            for p in profiles
        ]

    def cust(self, cid: int):
        return self.inst.customer(cid)

    def d_cust(self, a: int, b: int) -> float:
        return float(self.arrays.cust_dist[self.arrays.index[a], self.arrays.index[b]])

    def d_depot(self, cid: int) -> float:
        return float(self.arrays.depot_dist[self.arrays.index[cid]])

    def d_profile(self, slot: int, cid: int) -> float:
        return float(self._dist_from_profile[slot][self.arrays.index[cid]])


@dataclass
class RouteEval:
    distance: float
    finish: float
    load: float
    visits: list[Visit]


def simulate_route(problem: GaProblem, slot: int, custs: list[int]) -> RouteEval | None:
    """Schedule customers from the slot's profile; None when infeasible.

    Vehicles may arrive before a window opens and wait; service starts at
    max(arrival, window start).  The route must respect capacity and, when the
    instance has one, return to the depot by the due time.
    """
    profile = problem.profiles[slot]
    inst = problem.inst
    speed = inst.fleet.speed
    t = profile.earliest
    load = 0.0
    dist = 0.0
    visits: list[Visit] = []
    prev: int | None = None
    for cid in custs:
        c = problem.cust(cid)
        load += c.demand
        if load > profile.capacity + EPS:
            return None
        leg = problem.d_profile(slot, cid) if prev is None else problem.d_cust(prev, cid)
        arrival = t + leg / speed
        if arrival > c.tw_max + EPS:
            return None
        start = max(arrival, c.tw_min)
        t = start + c.service_duration
        dist += leg
        visits.append(Visit(cid, arrival, start, t))
        prev = cid
    if prev is None:
        return RouteEval(0.0, profile.earliest, 0.0, [])
    back = problem.d_depot(prev)
    finish = t + back / speed
    if inst.depot_due is not None and finish > inst.depot_due + EPS:
        return None
    return RouteEval(dist + back, finish, load, visits)


@dataclass
class Individual:
    routes: list[list[int]]
    fitness: float


def fitness(problem: GaProblem, routes: list[list[int]]) -> float:
    """Weighted sum of total (added) distance and the number of vehicles used;
    lower is better.  Raises on an infeasible chromosome."""
    total = 0.0
    vehicles = 0
    for slot, custs in enumerate(routes):
        ev = simulate_route(problem, slot, custs)
        if ev is None:
            raise ValueError(f"infeasible route in slot {slot}: {custs}")
        total += ev.distance
        if custs and problem.profiles[slot].fresh:
            vehicles += 1
    return total + problem.vehicle_weight * vehicles


def _evaluate(problem: GaProblem, routes: list[list[int]]) -> Individual:
    return Individual(routes, fitness(problem, routes))


def _copy_routes(routes: list[list[int]]) -> list[list[int]]:
    return [list(r) for r in routes]


def singleton_feasible(problem: GaProblem, cid: int) -> bool:
    return any(
        simulate_route(problem, slot, [cid]) is not None
        for slot in range(len(problem.profiles))
    )


def _feasible_insertions(
    problem: GaProblem, routes: list[list[int]], cid: int, slots: list[int] | None = None
) -> list[tuple[int, int, float]]:
    """(slot, position, distance increase) of every feasible insertion point."""
    out = []
    slots = slots if slots is not None else range(len(routes))
    for slot in slots:
        base = simulate_route(problem, slot, routes[slot])
        base_d = base.distance if base is not None else None
        if base_d is None:
            continue
        for pos in range(len(routes[slot]) + 1):
            trial = routes[slot][:pos] + [cid] + routes[slot][pos:]
            ev = simulate_route(problem, slot, trial)
            if ev is not None:
                out.append((slot, pos, ev.distance - base_d))
    return out


def init_population(
    problem: GaProblem, cfg: GaConfig, rng: np.random.Generator
) -> tuple[list[Individual], list[int]]:
    """Nearest-neighbour construction from random seed customers.

    Customers that cannot be served alone from any profile are excluded and
    returned for reporting; the population covers everything else.
    """
    servable = [c for c in problem.pool if singleton_feasible(problem, c)]
    excluded = [c for c in problem.pool if c not in set(servable)]
    population = []
    for _ in range(cfg.population):
        routes = _nearest_neighbour_build(problem, servable, rng)
        population.append(_evaluate(problem, routes))
    return population, excluded


def _nearest_neighbour_build(
    problem: GaProblem, servable: list[int], rng: np.random.Generator
) -> list[list[int]]:
    unrouted = set(servable)
    routes: list[list[int]] = [[] for _ in problem.profiles]
    slot_order = list(rng.permutation(len(problem.profiles)))
    for slot in slot_order:
        if not unrouted:
            break
        seeds = [c for c in sorted(unrouted) if simulate_route(problem, slot, [c]) is not None]
        if not seeds:
            continue
        current = [int(seeds[rng.integers(len(seeds))])]
        unrouted.discard(current[0])
        while True:
            last = current[-1]
            candidates = sorted(unrouted, key=lambda c: (problem.d_cust(last, c), c))
            appended = False
            for c in candidates:
                if simulate_route(problem, slot, current + [c]) is not None:
                    current.append(c)
                    unrouted.discard(c)
                    appended = True
                    break
            if not appended:
                break
        routes[slot] = current
    # Anything left could not start its own route; try plain insertion.
    for c in sorted(unrouted):
        options = _feasible_insertions(problem, routes, c)
        if options:
            slot, pos, _ = options[int(rng.integers(len(options)))]
            routes[slot].insert(pos, c)
        # else: leave it out; caller treats pool-wide exclusions separately.
    return routes


def improve_by_insertion(problem: GaProblem, ind: Individual) -> Individual:
    """Break up the least-loaded route and push its customers into the others
    at the cheapest feasible spots; customers that fit nowhere restore a route
    in their original order.  Route count never increases; the original is kept
    unless fitness improves."""
    nonempty = [s for s, r in enumerate(ind.routes) if r]
    if len(nonempty) <= 1:
        return ind
    loads = {
        s: sum(problem.cust(c).demand for c in ind.routes[s]) for s in nonempty
    }
    victim = min(nonempty, key=lambda s: (loads[s], s))
    pool = list(ind.routes[victim])
    routes = _copy_routes(ind.routes)
    routes[victim] = []
    leftovers: list[int] = []
    for cid in sorted(pool, key=lambda c: (-problem.cust(c).demand, c)):
        options = _feasible_insertions(
            problem, routes, cid, slots=[s for s in nonempty if s != victim]
        )
        if options:
            slot, pos, _ = min(options, key=lambda o: (o[2], o[0], o[1]))
            routes[slot].insert(pos, cid)
        else:
            leftovers.append(cid)
    if leftovers:
        routes[victim] = [c for c in pool if c in set(leftovers)]
    try:
        candidate = _evaluate(problem, routes)
    except ValueError:
        return ind
    return candidate if candidate.fitness < ind.fitness - EPS else ind


def tournament_select(pop: list[Individual], rng: np.random.Generator) -> Individual:
    """Binary tournament: draw two, keep the lower fitness (ties keep the
    first draw)."""
    if len(pop) == 1:
        return pop[0]
    i, j = rng.choice(len(pop), size=2, replace=False)
    return pop[int(i)] if pop[int(i)].fitness <= pop[int(j)].fitness else pop[int(j)]


def _common_nodes_part(r1: list[int], r2: list[int]) -> list[int]:
    shared = set(r1) & set(r2)
    return [c for c in r1 if c in shared]


def _common_arcs_part(r1: list[int], r2: list[int]) -> list[int]:
    arcs2 = set(zip(r2, r2[1:]))
    best: list[int] = []
    segment: list[int] = []
    for a, b in zip(r1, r1[1:]):
        if (a, b) in arcs2:
            if not segment:
                segment = [a]
            segment.append(b)
        else:
            if len(segment) > len(best):
                best = segment
            segment = []
    if len(segment) > len(best):
        best = segment
    if not best and r1:
        best = [r1[0]]
    return best


def crossover(
    problem: GaProblem, p1: Individual, p2: Individual, rng: np.random.Generator
) -> Individual:
    """Common-nodes or common-arcs crossover with equal probability.

    Parent routes are matched greedily by the size of their shared node (arc)
    set; the shared part survives in the first parent's order, everything else
    is re-inserted at a random feasible position.  Falls back to a copy of the
    fitter parent when re-insertion cannot complete the offspring.
    """
    use_arcs = bool(rng.random() < 0.5)
    part_fn = _common_arcs_part if use_arcs else _common_nodes_part
    score_fn = (
        (lambda a, b: len(set(zip(a, a[1:])) & set(zip(b, b[1:]))))
        if use_arcs
        else (lambda a, b: len(set(a) & set(b)))
    )

    n_slots = len(problem.profiles)
    child: list[list[int]] = [[] for _ in range(n_slots)]
    placed: set[int] = set()

    busy = [s for s in range(n_slots) if not problem.profiles[s].fresh]
    fresh = [s for s in range(n_slots) if problem.profiles[s].fresh]
    matches: list[tuple[int, list[int], list[int]]] = []
    for s in busy:
        matches.append((s, p1.routes[s], p2.routes[s]))
    # Greedy matching of fresh routes by descending shared-set size.
    scored = []
    for s1 in fresh:
        if not p1.routes[s1]:
            continue
        for s2 in fresh:
            if not p2.routes[s2]:
                continue
            scored.append((score_fn(p1.routes[s1], p2.routes[s2]), s1, s2))
    scored.sort(key=lambda t: (-t[0], t[1], t[2]))
    used1: set[int] = set()
    used2: set[int] = set()
    for score, s1, s2 in scored:
        if s1 in used1 or s2 in used2 or score <= 0:
            continue
        used1.add(s1)
        used2.add(s2)
        matches.append((s1, p1.routes[s1], p2.routes[s2]))

    for slot, r1, r2 in matches:
        part = [c for c in part_fn(r1, r2) if c not in placed]
        while part and simulate_route(problem, slot, part) is None:
            part.pop()  # subsequences are feasible, but stay defensive
        child[slot] = part
        placed.update(part)

    # Random-order cheapest-position reinsertion of everything not preserved;
    # opening an empty slot costs the vehicle weight.
    pool = [c for c in _flatten(p1.routes) if c not in placed]
    for cid in rng.permutation(len(pool)):
        c = pool[int(cid)]
        options = _feasible_insertions(problem, child, c)
        if not options:
            better = p1 if p1.fitness <= p2.fitness else p2
            return Individual(_copy_routes(better.routes), better.fitness)
        slot, pos, _ = min(options, key=lambda o: (self_cost(problem, child, o), o[0], o[1]))
        child[slot].insert(pos, c)
    return _evaluate(problem, child)


def self_cost(problem: GaProblem, routes: list[list[int]], option: tuple[int, int, float]) -> float:
    slot, _pos, delta = option
    opens_route = not routes[slot] and problem.profiles[slot].fresh
    return delta + (problem.vehicle_weight if opens_route else 0.0)


def _flatten(routes: list[list[int]]) -> list[int]:
    out: list[int] = []
    for r in routes:
        out.extend(r)
    return out


def mutate(problem: GaProblem, ind: Individual, rng: np.random.Generator) -> Individual:
    """With probability mutation_prob, one random feasible relocate or swap of
    a customer; identity otherwise (and when no feasible move exists)."""
    routed = _flatten(ind.routes)
    if len(routed) < 2:
        return ind
    for _ in range(30):
        if rng.random() < 0.5 and len(routed) >= 1:
            # relocate
            cid = routed[int(rng.integers(len(routed)))]
            routes = _copy_routes(ind.routes)
            for r in routes:
                if cid in r:
                    r.remove(cid)
                    break
            options = _feasible_insertions(problem, routes, cid)
            options = [
                o for o in options if routes[o[0]][: o[1]] + [cid] + routes[o[0]][o[1]:] != ind.routes[o[0]]
            ]
            if not options:
                continue
            slot, pos, _ = options[int(rng.integers(len(options)))]
            routes[slot].insert(pos, cid)
        elif len(routed) >= 2:
            a, b = rng.choice(len(routed), size=2, replace=False)
            ca, cb = routed[int(a)], routed[int(b)]
            routes = _copy_routes(ind.routes)
            for r in routes:
                for i, c in enumerate(r):
                    if c == ca:
                        r[i] = cb
                    elif c == cb:
                        r[i] = ca
        else:
            continue
        try:
            return _evaluate(problem, routes)
        except ValueError:
            continue
    return ind


def _apply_mutation(problem: GaProblem, ind: Individual, cfg: GaConfig, rng) -> Individual:
    if rng.random() < cfg.mutation_prob:
        return mutate(problem, ind, rng)
    return ind


@dataclass
class GaRunResult:
    best: Individual
    solution: Solution
    excluded: list[int]
    generations: int
    wall_time_sec: float


def run_ga(
    inst: Instance,
    cfg: GaConfig,
    pool: list[int] | None = None,
    profiles: list[VehicleProfile] | None = None,
    generation_hook=None,
) -> GaRunResult:
    """Full GA run; the best chromosome of the final generation becomes the
    solution.  ``generation_hook(population)`` is called once per generation
    (used by tests to assert population-wide feasibility)."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    problem = GaProblem(inst, pool=pool, profiles=profiles, vehicle_weight=cfg.vehicle_weight)
    if not problem.pool:
        empty = Individual([[] for _ in problem.profiles], 0.0)
        solution = _solution_from_routes(problem, empty.routes, [])
        return GaRunResult(empty, solution, [], 0, time.perf_counter() - t0)
    population, excluded = init_population(problem, cfg, rng)
    population = [improve_by_insertion(problem, ind) for ind in population]
    best = min(population, key=lambda i: i.fitness)
    if generation_hook:
        generation_hook(population)

    stall = 0
    generations = 0
    while stall < cfg.stall_generations:
        if cfg.max_generations is not None and generations >= cfg.max_generations:
            break
        next_pop = [Individual(_copy_routes(best.routes), best.fitness)]
        while len(next_pop) < cfg.population:
            pa = tournament_select(population, rng)
            pb = tournament_select(population, rng)
            child = crossover(problem, pa, pb, rng)
            child = _apply_mutation(problem, child, cfg, rng)
            next_pop.append(child)
        population = next_pop
        generations += 1
        gen_best = min(population, key=lambda i: i.fitness)
        if gen_best.fitness < best.fitness - EPS:
            best = gen_best
            stall = 0
        else:
            stall += 1
        if generation_hook:
            generation_hook(population)

    solution = _solution_from_routes(problem, best.routes, excluded)
    wall = time.perf_counter() - t0
    return GaRunResult(best, replace(solution, wall_time_sec=wall), excluded, generations, wall)


def _solution_from_routes(
    problem: GaProblem, routes: list[list[int]], unserved: list[int]
) -> Solution:
    inst = problem.inst
    out_routes = []
    for slot, custs in enumerate(routes):
        if not custs:
            continue
        ev = simulate_route(problem, slot, custs)
        if ev is None:
            raise ValueError("best chromosome became infeasible")
        profile = problem.profiles[slot]
        out_routes.append(
            Route(
                vehicle_id=slot,
                visits=tuple(ev.visits),
                depot_departure=profile.earliest,
                depot_return=ev.finish,
                load=ev.load,
                distance=ev.distance,
            )
        )
    n = inst.n_customers
    served = sum(len(r.visits) for r in out_routes)
    unserved_set = frozenset(unserved)
    fulfilment = 1.0 if n == 0 else (n - len(unserved_set)) / n
    return Solution(
        routes=tuple(out_routes),
        unserved=unserved_set,
        total_distance=sum(r.distance for r in out_routes),
        vehicles_used=len(out_routes),
        fulfilment=fulfilment,
    )


# --- dynamic wrapper -------------------------------------------------------


@dataclass
class _VehicleExec:
    """Execution record of one vehicle slot while the plan is carried out."""

    loc: Location
    free_time: float
    used: float = 0.0
    visits: list[Visit] = field(default_factory=list)
    first_depart: float | None = None
    last_cid: int | None = None
    gone_home: bool = False
    depot_return: float | None = None
    distance: float = 0.0


@dataclass
class DynamicGaResult:
    solution: Solution
    initial_plan_sec: float
    replan_secs: list[float]

    @property
    def total_plan_sec(self) -> float:
        return self.initial_plan_sec + sum(self.replan_secs)


def run_ga_dynamic(inst: Instance, cfg: GaConfig) -> DynamicGaResult:
    """Plan on the initially revealed customers, then re-plan at every reveal.

    Committed legs are frozen: a vehicle leaves for its next stop at the latest
    departure that still reaches the window start, so anything it has not yet
    departed for can be re-planned.  Planning wall time accumulates over the
    initial plan and every re-plan, mirroring how a deployed planner would pay
    for dynamic updates.
    """
    speed = inst.fleet.speed
    known = sorted(c.id for c in inst.customers if c.reveal_time <= 0.0)
    reveal_times = sorted({c.reveal_time for c in inst.customers if c.reveal_time > 0.0})

    execs = [
        _VehicleExec(loc=inst.depot, free_time=0.0) for _ in range(inst.fleet.count)
    ]
    unserved: set[int] = set()
    first = run_ga(inst, cfg, pool=known)
    tails: list[list[int]] = [list(r) for r in first.best.routes]
    unserved.update(first.excluded)
    replan_secs: list[float] = []

    def execute_until(t_limit: float | None):
        """Commit every leg whose latest departure is before t_limit
        (everything, when t_limit is None)."""
        for slot, ex in enumerate(execs):
            if ex.gone_home:
                continue
            while tails[slot]:
                cid = tails[slot][0]
                c = inst.customer(cid)
                leg = distance(ex.loc, c.loc)
                depart = max(ex.free_time, c.tw_min - leg / speed)
                if t_limit is not None and depart > t_limit + EPS:
                    break
                arrival = depart + leg / speed
                ex.visits.append(Visit(cid, arrival, arrival, arrival + c.service_duration))
                if ex.first_depart is None:
                    ex.first_depart = depart
                ex.loc = c.loc
                ex.free_time = arrival + c.service_duration
                ex.used += c.demand
                ex.distance += leg
                ex.last_cid = cid
                tails[slot].pop(0)
            if not tails[slot] and ex.visits:
                # Idle with nothing planned: the vehicle heads home immediately
                # and is retired once that departure lies in the past.
                if t_limit is None or ex.free_time <= t_limit + EPS:
                    back = distance(ex.loc, inst.depot)
                    ex.depot_return = ex.free_time + back / speed
                    ex.distance += back
                    ex.gone_home = True

    for t_r in reveal_times:
        execute_until(t_r)
        newly = sorted(
            c.id for c in inst.customers if 0.0 < c.reveal_time <= t_r + EPS
        )
        committed = {v.customer_id for ex in execs for v in ex.visits}
        known = sorted(set(known) | set(newly))
        pool = [
            cid
            for cid in known
            if cid not in committed and cid not in unserved
        ]
        profiles = []
        for ex in execs:
            if ex.gone_home:
                # Slot stays in the problem but can hold nothing.
                profiles.append(VehicleProfile(inst.depot, float("inf"), 0.0, fresh=False))
            elif ex.visits:
                profiles.append(
                    VehicleProfile(ex.loc, max(ex.free_time, t_r), inst.fleet.capacity - ex.used, fresh=False)
                )
            else:
                profiles.append(VehicleProfile(inst.depot, t_r, inst.fleet.capacity, fresh=True))
        sub_cfg = replace(cfg, seed=int(np.random.default_rng((cfg.seed, len(replan_secs) + 1)).integers(2**62)))
        result = run_ga(inst, sub_cfg, pool=pool, profiles=profiles)
        replan_secs.append(result.wall_time_sec)
        unserved.update(result.excluded)
        tails = [list(r) for r in result.best.routes]

    execute_until(None)

    routes = []
    for slot, ex in enumerate(execs):
        if not ex.visits:
            continue
        if ex.depot_return is None:  # pathological: never closed out
            back = distance(ex.loc, inst.depot)
            ex.depot_return = ex.free_time + back / speed
            ex.distance += back
        routes.append(
            Route(
                vehicle_id=slot,
                visits=tuple(ex.visits),
                depot_departure=ex.first_depart if ex.first_depart is not None else 0.0,
                depot_return=ex.depot_return,
                load=ex.used,
                distance=ex.distance,
            )
        )
    committed = {v.customer_id for ex in execs for v in ex.visits}
    missing = {c.id for c in inst.customers} - committed
    n = inst.n_customers
    solution = Solution(
        routes=tuple(routes),
        unserved=frozenset(missing),
        total_distance=sum(r.distance for r in routes),
        vehicles_used=len(routes),
        fulfilment=1.0 if n == 0 else (n - len(missing)) / n,
        wall_time_sec=first.wall_time_sec + sum(replan_secs),
    )
    return DynamicGaResult(solution, first.wall_time_sec, replan_secs)
