"""Decision engine and training loop for the value-based dispatcher.

At every decision epoch the agent works on a soft clone of the world: it
repeatedly scores every feasible (vehicle, customer) pair - busy vehicles
included, through their projected states - applies the best pair to the clone,
and keeps going until each triggering free vehicle owns an assignment or has
nothing feasible left (in which case it is sent home).  Only the first
assignment of each free vehicle is committed to the real environment; the rest
of the chain merely shaped the context in which those commitments were scored.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import env
from .core import Instance, Solution
from .env import SimState
from .features import PairFeatures
from .instance_io import GeneratorConfig, generate_training_instance, strip_reveals
from .reward import (
    RewardWeights,
    StepContext,
    build_step_context,
    depot_step_context,
    step_reward,
    total_reward,
)
from .valuenet import AdamState, Experience, Network, ReplayBuffer, train_batch


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from start to end over the first decay_episodes episodes,
    changing only between episodes."""

    start: float = 1.0
    end: float = 0.0
    decay_episodes: int = 300

    def value(self, episode: int) -> float:
        if self.decay_episodes <= 0:
            return self.end
        frac = min(max(episode, 0) / self.decay_episodes, 1.0)
        return self.start + (self.end - self.start) * frac


@dataclass(frozen=True)
class TrainConfig:
    n_episodes: int = 700
    batch_size: int = 32
    buffer_capacity: int = 50000
    n_instances: int = 20
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    master_seed: int = 1
    updates_per_episode: int = 1
    start_episode: int = 0

    def __post_init__(self):
        if self.n_episodes < 0 or self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("counts must be positive")


@dataclass
class Decision:
    """One real commitment produced by a decision epoch.  customer_id None
    means the vehicle gives up and returns to the depot."""

    vehicle_id: int
    customer_id: int | None
    features: np.ndarray
    q_pred: float
    context: StepContext
    stage: int


def _as_value_fn(net):
    return net.forward_batch if isinstance(net, Network) else net


def _argmax_pair(q: np.ndarray, pairs: list[tuple[int, int]]) -> int:
    """Index of the highest value; ties break to the lowest vehicle id, then
    the lowest customer id."""
    mx = q.max()
    candidates = np.nonzero(q == mx)[0]
    if len(candidates) == 1:
        return int(candidates[0])
    return int(min(candidates, key=lambda i: pairs[i]))


def decision_epoch(
    state: SimState,
    net,
    epsilon: float,
    rng: np.random.Generator,
    triggers: set[int] | None = None,
) -> list[Decision]:
    """Compute commitments via soft updates until every trigger vehicle is
    assigned or has nothing feasible left.

    Triggers are the free vehicles whose event opened this epoch (all free
    vehicles when omitted, as at episode start).  Every free vehicle's first
    soft assignment is collected as a real commitment, trigger or not; a stuck
    trigger is committed to the depot unless it is an undispatched vehicle that
    should keep waiting at the depot for pending reveals.
    """
    value_fn = _as_value_fn(net)
    clone = env.clone_for_soft(state)
    free_now = set(clone.free_vehicles())
    triggers = set(free_now if triggers is None else triggers) & free_now
    uncommitted_free = set(free_now)
    decisions: list[Decision] = []

    while triggers:
        pf = PairFeatures(clone)
        pairs = pf.grid.pairs()
        with_pairs = {vid for vid, _ in pairs}

        stuck = sorted(t for t in triggers if t not in with_pairs)
        if stuck:
            for vid in stuck:
                v = clone.vehicles[vid]
                triggers.discard(vid)
                uncommitted_free.discard(vid)
                if v.visits_so_far == 0 and v.last_customer is None and clone.pending:
                    continue  # keep waiting at the depot for future reveals
                feats = pf.depot_vector(vid)
                ctx = depot_step_context(clone, vid, pf)
                q = float(value_fn(feats[None, :])[0])
                decisions.append(
                    Decision(vid, None, feats, q, ctx, stage=v.visits_so_far + 1)
                )
                env.send_to_depot(clone, vid)
            continue  # retirements change the context; rebuild the grid

        if not pairs:
            break

        X = pf.matrix(pairs)
        q = value_fn(X)
        if epsilon > 0.0 and rng.random() < epsilon:
            idx = int(rng.integers(len(pairs)))
        else:
            idx = _argmax_pair(q, pairs)
        vid, cid = pairs[idx]
        if vid in uncommitted_free:
            ctx = build_step_context(clone, vid, cid, pf)
            decisions.append(
                Decision(
                    vid,
                    cid,
                    X[idx].copy(),
                    float(q[idx]),
                    ctx,
                    stage=clone.vehicles[vid].visits_so_far + 1,
                )
            )
            triggers.discard(vid)
            uncommitted_free.discard(vid)
        env.apply_assignment(clone, vid, cid)

    return decisions


def apply_decisions(state: SimState, decisions: list[Decision]) -> None:
    for d in decisions:
        if d.customer_id is None:
            env.send_to_depot(state, d.vehicle_id)
        else:
            env.apply_assignment(state, d.vehicle_id, d.customer_id)
    env.sweep_unservable(state)


@dataclass
class EpisodeResult:
    solution: Solution
    experiences: list[Experience]
    epoch_latencies: list[float]


def run_episode(
    inst: Instance,
    net,
    epsilon: float,
    rng: np.random.Generator,
    record: bool = False,
    honor_reveals: bool = True,
    measure_latency: bool = False,
    episode_index: int = 0,
    weights: RewardWeights | None = None,
) -> EpisodeResult:
    """Simulate one full episode: an epoch at t=0, then one at every
    vehicle-free event and at every reveal that wakes a waiting vehicle."""
    weights = weights or RewardWeights()
    value_fn = _as_value_fn(net)
    work = inst if honor_reveals else strip_reveals(inst)
    s = env.reset(work)
    experiences: list[Experience] = []
    latencies: list[float] = []

    def run_epoch():
        if not s.free_vehicles():
            return
        t0 = time.perf_counter() if measure_latency else 0.0
        decisions = decision_epoch(s, value_fn, epsilon, rng)
        apply_decisions(s, decisions)
        if measure_latency:
            latencies.append(time.perf_counter() - t0)
        if record:
            for d in decisions:
                if d.customer_id is None and d.stage == 1:
                    continue  # an unused vehicle giving up carries no signal
                experiences.append(
                    Experience(
                        features=d.features,
                        step_reward=step_reward(d.context, weights),
                        q_pred=d.q_pred,
                        episode=episode_index,
                        stage=d.stage,
                        vehicle_id=d.vehicle_id,
                        is_terminal_leg=d.customer_id is None,
                    )
                )

    run_epoch()
    while not env.is_terminal(s):
        result = env.advance(s)
        if record:
            for vid, _cid in result.cancelled:
                _drop_last_experience(experiences, vid)
        run_epoch()

    return EpisodeResult(env.finalize(s), experiences, latencies)


def _drop_last_experience(experiences: list[Experience], vehicle_id: int) -> None:
    """A cancelled (never departed) commitment leaves no experience behind."""
    for i in range(len(experiences) - 1, -1, -1):
        if experiences[i].vehicle_id == vehicle_id and not experiences[i].is_terminal_leg:
            del experiences[i]
            return


def finalize_targets(experiences: list[Experience], fulfilment: float, gamma: float) -> None:
    """Fill the discounted terminal bonus for every decision of one episode.

    Customer stages n of a journey with N_k customers receive gamma^(N_k - n);
    the give-up leg closes the journey and receives the undiscounted bonus.
    """
    n_stages: dict[int, int] = {}
    for e in experiences:
        if not e.is_terminal_leg:
            n_stages[e.vehicle_id] = max(n_stages.get(e.vehicle_id, 0), e.stage)
    for e in experiences:
        n_k = n_stages.get(e.vehicle_id, 0)
        if n_k == 0:
            e.terminal_bonus = fulfilment
            continue
        stage = min(e.stage, n_k)
        e.terminal_bonus = total_reward(0.0, fulfilment, n_k, stage, gamma)


@dataclass
class CurvePoint:
    episode: int
    fulfilment: float
    distance: float
    loss: float | None
    epsilon: float


@dataclass
class TrainResult:
    net: Network
    curve: list[CurvePoint]


def training_instances(cfg: TrainConfig) -> list[Instance]:
    """The pre-generated pool of training instances for a master seed."""
    seed_rng = np.random.default_rng((cfg.master_seed, 0x5EED))
    seeds = seed_rng.integers(0, 2**62, size=cfg.n_instances)
    return [
        generate_training_instance(replace(cfg.generator, seed=int(s))) for s in seeds
    ]


def train(
    cfg: TrainConfig,
    weights: RewardWeights | None = None,
    initial_net: Network | None = None,
) -> TrainResult:
    """Run the episodic training loop: collect an episode with the current
    epsilon, attach terminal bonuses, push to the replay buffer and take one
    (configurable) mean-squared-error Adam step on a sampled batch."""
    weights = weights or RewardWeights()
    if initial_net is not None:
        net = initial_net.clone()
    else:
        net = Network.initialise(np.random.default_rng((cfg.master_seed, 0x11217)))
    instances = training_instances(cfg)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    adam = AdamState()
    curve: list[CurvePoint] = []

    for ep in range(cfg.start_episode, cfg.start_episode + cfg.n_episodes):
        eps = cfg.epsilon.value(ep)
        ep_rng = np.random.default_rng((cfg.master_seed, 0xE9, ep))
        inst = instances[int(ep_rng.integers(len(instances)))]
        result = run_episode(
            inst,
            net,
            eps,
            ep_rng,
            record=True,
            honor_reveals=False,
            episode_index=ep,
            weights=weights,
        )
        fulfilment = result.solution.fulfilment
        finalize_targets(result.experiences, fulfilment, weights.gamma)
        for e in result.experiences:
            buffer.push(e)

        loss: float | None = None
        for _ in range(cfg.updates_per_episode):
            batch = buffer.sample(cfg.batch_size, ep_rng)
            if batch is None:
                break  # buffer not ready yet
            X = np.stack([b.features for b in batch])
            y = np.array([b.target for b in batch])
            loss = train_batch(net, adam, X, y)
        curve.append(
            CurvePoint(ep, fulfilment, result.solution.total_distance, loss, eps)
        )

    return TrainResult(net, curve)


@dataclass
class SolveResult:
    solution: Solution
    epoch_latencies: list[float]


def solve(inst: Instance, net, mode: str = "static") -> SolveResult:
    """Greedy (epsilon = 0) run with a trained network.  Static mode treats all
    customers as known upfront; dynamic mode honours the instance reveal times.
    Wall time and per-epoch decision latencies are recorded."""
    if mode not in ("static", "dynamic"):
        raise ValueError(f"unknown mode {mode!r}")
    t0 = time.perf_counter()
    result = run_episode(
        inst,
        net,
        epsilon=0.0,
        rng=np.random.default_rng(0),
        record=False,
        honor_reveals=(mode == "dynamic"),
        measure_latency=True,
    )
    wall = time.perf_counter() - t0
    sol = replace(result.solution, wall_time_sec=wall)
    return SolveResult(sol, result.epoch_latencies)
