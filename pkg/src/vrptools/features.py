"""The 12 normalised inputs describing one (vehicle, customer) pair.

Distances are normalised by the instance bounding-box diagonal, times by the
horizon and loads by the vehicle capacity, so a trained value function
transfers between maps of different scale.  Busy vehicles are described by
their post-commitment projection (committed destination and completion time),
mirroring the soft updates used during decision making.
"""
from __future__ import annotations

import numpy as np

from .core import Instance, distance
from .env import FeasibilityGrid, InfeasiblePairError, SimState

FEATURE_NAMES = (
    "dist_to_customer",
    "demand",
    "customer_to_depot",
    "in_out_flag",
    "vehicle_to_depot",
    "sole_server_flag",
    "time_now",
    "remaining_capacity",
    "customer_tw_max",
    "next_nearest_reachable",
    "nearest_vehicle_dist",
    "wait_time",
)

N_FEATURES = len(FEATURE_NAMES)

# Normalised stand-in when no further customer is reachable after the proposed
# one: the maximum of the normalised distance scale, so inputs stay bounded.
NO_NEXT_SENTINEL = 1.0


class PairFeatures:
    """Feature builder bound to one state snapshot (and its feasibility grid)."""

    def __init__(self, state: SimState, grid: FeasibilityGrid | None = None):
        self.state = state
        self.grid = grid if grid is not None else FeasibilityGrid(state)
        inst = state.instance
        self.diag = inst.diagonal
        self.horizon = inst.horizon
        self.capacity = inst.fleet.capacity
        self.speed = inst.fleet.speed
        g = self.grid
        ddx = g.veh_proj[:, 0] - inst.depot.x
        ddy = g.veh_proj[:, 1] - inst.depot.y
        self.veh_depot = np.sqrt(ddx * ddx + ddy * ddy)
        # Feasible-vehicle count per active customer, for the sole-server flag.
        self.serve_counts = g.feasible.sum(axis=0)
        # Distances between active customers only.
        rows = g.cust_rows
        self.cd_active = state.arrays.cust_dist[np.ix_(rows, rows)]
        self.in_out = 1.0 if state.clock > self.horizon / 2.0 else 0.0

    # -- shared sub-computations ------------------------------------------

    def nearest_vehicle_raw(self, arow: int) -> float:
        """Min distance from the customer to any non-retired vehicle with
        enough remaining capacity, using projected locations (k included)."""
        g = self.grid
        eligible = g.veh_cap >= g.demand[arow] - 1e-9
        if not eligible.any():
            return float("inf")
        return float(np.min(g.dist[eligible, arow]))

    def next_reachable_raw(self, krow: int, arow: int) -> tuple[float, int | None]:
        """(distance, customer row) of the nearest still-active customer that
        can be reached inside its window after serving the proposed one, with
        the capacity left after it; (inf, None) when there is none."""
        g = self.grid
        completion = g.completion[krow, arow]
        cap_left = g.veh_cap[krow] - g.demand[arow]
        d_row = self.cd_active[arow]
        ok = (completion + d_row / self.speed <= g.tw_max + 1e-9) & (
            g.demand <= cap_left + 1e-9
        )
        ok[arow] = False
        if not ok.any():
            return float("inf"), None
        masked = np.where(ok, d_row, np.inf)
        j = int(np.argmin(masked))
        return float(masked[j]), j

    def sole_server(self, krow: int, arow: int) -> bool:
        return bool(self.serve_counts[arow] - g_feas(self.grid, krow, arow) == 0)

    # -- feature vectors ---------------------------------------------------

    def vector(self, vid: int, cid: int) -> np.ndarray:
        g = self.grid
        if not g.is_feasible(vid, cid):
            raise InfeasiblePairError(f"({vid}, {cid}) is not a feasible pair")
        krow, arow = g.rows(vid, cid)
        next_dist, _ = self.next_reachable_raw(krow, arow)
        next_feat = NO_NEXT_SENTINEL if not np.isfinite(next_dist) else next_dist / self.diag
        wait = max(g.tw_min[arow] - g.arrival[krow, arow], 0.0)
        return np.array(
            [
                g.dist[krow, arow] / self.diag,
                g.demand[arow] / self.capacity,
                g.cust_depot[arow] / self.diag,
                self.in_out,
                self.veh_depot[krow] / self.diag,
                1.0 if self.serve_counts[arow] == 1 else 0.0,
                self.state.clock / self.horizon,
                g.veh_cap[krow] / self.capacity,
                g.tw_max[arow] / self.horizon,
                next_feat,
                self.nearest_vehicle_raw(arow) / self.diag,
                wait / self.horizon,
            ]
        )

    def matrix(self, pairs: list[tuple[int, int]]) -> np.ndarray:
        """Feature rows for many feasible pairs at once (vectorised)."""
        g = self.grid
        P = len(pairs)
        if P == 0:
            return np.zeros((0, N_FEATURES))
        krows = np.array([g.rows(v, c)[0] for v, c in pairs])
        arows = np.array([g.rows(v, c)[1] for v, c in pairs])

        completion = g.completion[krows, arows]
        cap_left = g.veh_cap[krows] - g.demand[arows]
        d_next = self.cd_active[arows]  # (P, A)
        ok = (completion[:, None] + d_next / self.speed <= g.tw_max[None, :] + 1e-9) & (
            g.demand[None, :] <= cap_left[:, None] + 1e-9
        )
        ok[np.arange(P), arows] = False
        masked = np.where(ok, d_next, np.inf)
        nearest_next = masked.min(axis=1)
        next_feat = np.where(
            np.isfinite(nearest_next), nearest_next / self.diag, NO_NEXT_SENTINEL
        )

        elig = g.veh_cap[:, None] >= g.demand[None, :] - 1e-9  # (K, A)
        vdist = np.where(elig, g.dist, np.inf).min(axis=0)  # (A,)

        cols = np.empty((P, N_FEATURES))
        cols[:, 0] = g.dist[krows, arows] / self.diag
        cols[:, 1] = g.demand[arows] / self.capacity
        cols[:, 2] = g.cust_depot[arows] / self.diag
        cols[:, 3] = self.in_out
        cols[:, 4] = self.veh_depot[krows] / self.diag
        cols[:, 5] = (self.serve_counts[arows] == 1).astype(float)
        cols[:, 6] = self.state.clock / self.horizon
        cols[:, 7] = g.veh_cap[krows] / self.capacity
        cols[:, 8] = g.tw_max[arows] / self.horizon
        cols[:, 9] = next_feat
        cols[:, 10] = vdist[arows] / self.diag
        cols[:, 11] = np.maximum(g.tw_min[arows] - g.arrival[krows, arows], 0.0) / self.horizon
        return cols

    def depot_vector(self, vid: int) -> np.ndarray:
        """Pseudo-features for a give-up (return to depot) decision: the depot
        acts as a zero-demand customer whose window spans the whole horizon."""
        g = self.grid
        krow = g.veh_ids.index(vid)
        back = self.veh_depot[krow] / self.diag
        if len(self.veh_depot):
            nearest = float(np.min(self.veh_depot)) / self.diag
        else:
            nearest = 0.0
        return np.array(
            [
                back,
                0.0,
                0.0,
                self.in_out,
                back,
                0.0,
                self.state.clock / self.horizon,
                g.veh_cap[krow] / self.capacity,
                1.0,
                NO_NEXT_SENTINEL,
                nearest,
                0.0,
            ]
        )


def g_feas(grid: FeasibilityGrid, krow: int, arow: int) -> int:
    return int(grid.feasible[krow, arow])


def build_features(s: SimState, vid: int, cid: int) -> np.ndarray:
    """The 12 normalised inputs for one feasible (vehicle, customer) pair, in
    the fixed network input order of FEATURE_NAMES."""
    return PairFeatures(s).vector(vid, cid)


def nearest_reachable_after(s: SimState, cid: int, vid: int) -> float:
    """Normalised distance from the proposed customer to the closest active
    customer still reachable (window and leftover capacity) after serving it;
    1.0 when none exists."""
    pf = PairFeatures(s)
    g = pf.grid
    if not g.is_feasible(vid, cid):
        raise InfeasiblePairError(f"({vid}, {cid}) is not a feasible pair")
    krow, arow = g.rows(vid, cid)
    dist, _ = pf.next_reachable_raw(krow, arow)
    return NO_NEXT_SENTINEL if not np.isfinite(dist) else dist / pf.diag
