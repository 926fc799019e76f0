"""Step reward, its decision-time context, and the discounted terminal bonus.

The step reward combines seven weighted terms: leg distance, window slack at
arrival, waiting time, extra distance versus the closest capable vehicle, the
expected cost of the next-closest follow-up customer, a direction bonus for
moving away from the depot early and toward it late, and a sole-server bonus.
All terms share the feature normalisers (distances by the map diagonal, times
by the horizon) so the published weight magnitudes stay meaningful.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import SimState
from .features import PairFeatures

# Published step-reward weights.
DEFAULT_WEIGHTS = (0.2, 0.5, 1.0, 0.25, 0.5, 0.1, 0.25)


@dataclass(frozen=True)
class RewardWeights:
    a1: float = DEFAULT_WEIGHTS[0]
    a2: float = DEFAULT_WEIGHTS[1]
    a3: float = DEFAULT_WEIGHTS[2]
    a4: float = DEFAULT_WEIGHTS[3]
    a5: float = DEFAULT_WEIGHTS[4]
    a6: float = DEFAULT_WEIGHTS[5]
    a7: float = DEFAULT_WEIGHTS[6]
    gamma: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    @classmethod
    def from_list(cls, a: list[float], gamma: float = 0.9) -> "RewardWeights":
        if len(a) != 7:
            raise ValueError("expected exactly 7 step-reward weights")
        return cls(*a, gamma=gamma)

    def as_tuple(self) -> tuple[float, ...]:
        return (self.a1, self.a2, self.a3, self.a4, self.a5, self.a6, self.a7)


@dataclass(frozen=True)
class StepContext:
    """Normalised decision-time quantities feeding the step reward."""

    leg_distance: float
    window_slack: float
    wait_time: float
    delta_vs_closest: float
    next_cost: float
    direction_bonus: float  # 0 or 1
    sole_server: float      # 0 or 1


def step_reward(ctx: StepContext, w: RewardWeights) -> float:
    return (
        -w.a1 * ctx.leg_distance
        - w.a2 * ctx.window_slack
        - w.a3 * ctx.wait_time
        - w.a4 * ctx.delta_vs_closest
        - w.a5 * ctx.next_cost
        + w.a6 * ctx.direction_bonus
        + w.a7 * ctx.sole_server
    )


def _direction_bonus(clock: float, horizon: float, current_depot_dist: float, target_depot_dist: float) -> float:
    """1 when moving strictly outward in the first half of the horizon, or
    strictly inward in the second half; 0 otherwise (ties included)."""
    if clock <= horizon / 2.0:
        return 1.0 if target_depot_dist > current_depot_dist else 0.0
    return 1.0 if target_depot_dist < current_depot_dist else 0.0


def build_step_context(
    s: SimState, vid: int, cid: int, pf: PairFeatures | None = None
) -> StepContext:
    """Context for committing vehicle ``vid`` to customer ``cid`` now.

    Arrival here is the un-deferred projection (ready time plus travel), so the
    waiting term measures how long the vehicle would have to sit idle.
    """
    if pf is None:
        pf = PairFeatures(s)
    g = pf.grid
    if not g.is_feasible(vid, cid):
        raise ValueError(f"({vid}, {cid}) is not a feasible pair")
    krow, arow = g.rows(vid, cid)
    diag, horizon, speed = pf.diag, pf.horizon, pf.speed

    leg = g.dist[krow, arow] / diag
    arrival = g.arrival[krow, arow]
    slack = (g.tw_max[arow] - arrival) / horizon
    wait = max(g.tw_min[arow] - arrival, 0.0) / horizon
    delta = (g.dist[krow, arow] - pf.nearest_vehicle_raw(arow)) / diag
    delta = max(delta, 0.0)

    next_dist, jrow = pf.next_reachable_raw(krow, arow)
    if jrow is None:
        next_cost = 1.0
    else:
        travel_time = next_dist / speed
        arrival_next = g.completion[krow, arow] + travel_time
        wait_next = max(g.tw_min[jrow] - arrival_next, 0.0)
        next_cost = (travel_time + wait_next) / horizon

    alpha = _direction_bonus(s.clock, horizon, float(pf.veh_depot[krow]), float(g.cust_depot[arow]))
    sole = 1.0 if pf.serve_counts[arow] == 1 else 0.0
    return StepContext(
        leg_distance=float(leg),
        window_slack=float(slack),
        wait_time=float(wait),
        delta_vs_closest=float(delta),
        next_cost=float(next_cost),
        direction_bonus=alpha,
        sole_server=sole,
    )


def depot_step_context(s: SimState, vid: int, pf: PairFeatures | None = None) -> StepContext:
    """Context for a give-up (depot return) leg: only the distance term and the
    direction bonus apply; the depot counts as distance 0 from itself."""
    if pf is None:
        pf = PairFeatures(s)
    krow = pf.grid.veh_ids.index(vid)
    current = float(pf.veh_depot[krow])
    alpha = _direction_bonus(s.clock, pf.horizon, current, 0.0)
    return StepContext(
        leg_distance=current / pf.diag,
        window_slack=0.0,
        wait_time=0.0,
        delta_vs_closest=0.0,
        next_cost=0.0,
        direction_bonus=alpha,
        sole_server=0.0,
    )


def total_reward(step: float, fulfilment: float, n_stages: int, stage: int, gamma: float) -> float:
    """Step reward plus the terminal bonus gamma^(N_k - n) * F for stage n of a
    journey with N_k customer stages."""
    if not 1 <= stage <= n_stages:
        raise ValueError(f"stage {stage} outside 1..{n_stages}")
    if not 0.0 <= fulfilment <= 1.0:
        raise ValueError("fulfilment must lie in [0, 1]")
    return step + gamma ** (n_stages - stage) * fulfilment
