"""Run-configuration file shared by the trainer, the GA and the CLI.

A single JSON document with optional sections; anything omitted falls back to
the published defaults.  Unknown keys are rejected so typos cannot silently
change a run.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .agent import EpsilonSchedule, TrainConfig
from .ga import GaConfig
from .instance_io import GeneratorConfig
from .reward import RewardWeights


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    reward: RewardWeights = field(default_factory=RewardWeights)
    ga: GaConfig = field(default_factory=GaConfig)


def _check_keys(obj: dict, allowed: set[str], path: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")


def _generator_from(obj: dict, path: str) -> GeneratorConfig:
    allowed = {
        "n_customers",
        "n_vehicles",
        "coord_range",
        "depot_range",
        "demand_rate",
        "capacity",
        "speed",
        "tw_start_range",
        "tw_width_mean",
        "tw_width_std",
        "tw_width_min",
        "service_duration",
        "seed",
    }
    _check_keys(obj, allowed, path)
    kwargs = dict(obj)
    for key in ("coord_range", "depot_range", "tw_start_range"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return GeneratorConfig(**kwargs)


def load_run_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    return run_config_from_dict(payload)


def run_config_from_dict(payload: dict) -> RunConfig:
    _check_keys(payload, {"seed", "train", "reward", "ga"}, "$")
    cfg = RunConfig()

    reward = cfg.reward
    if "reward" in payload:
        section = payload["reward"]
        _check_keys(section, {"weights", "gamma"}, "$.reward")
        weights = section.get("weights", list(RewardWeights().as_tuple()))
        gamma = section.get("gamma", RewardWeights().gamma)
        reward = RewardWeights.from_list(list(weights), gamma=float(gamma))

    train = cfg.train
    if "train" in payload:
        section = payload["train"]
        allowed = {
            "episodes",
            "batch_size",
            "buffer",
            "instances",
            "epsilon_decay_episodes",
            "updates_per_episode",
            "generator",
        }
        _check_keys(section, allowed, "$.train")
        generator = (
            _generator_from(section["generator"], "$.train.generator")
            if "generator" in section
            else GeneratorConfig()
        )
        train = TrainConfig(
            n_episodes=int(section.get("episodes", train.n_episodes)),
            batch_size=int(section.get("batch_size", train.batch_size)),
            buffer_capacity=int(section.get("buffer", train.buffer_capacity)),
            n_instances=int(section.get("instances", train.n_instances)),
            generator=generator,
            epsilon=EpsilonSchedule(
                decay_episodes=int(
                    section.get("epsilon_decay_episodes", train.epsilon.decay_episodes)
                )
            ),
            updates_per_episode=int(
                section.get("updates_per_episode", train.updates_per_episode)
            ),
        )

    ga = cfg.ga
    if "ga" in payload:
        section = payload["ga"]
        allowed = {
            "population",
            "vehicle_weight",
            "mutation_prob",
            "stall_generations",
            "max_generations",
            "elite",
        }
        _check_keys(section, allowed, "$.ga")
        ga = GaConfig(
            population=int(section.get("population", ga.population)),
            vehicle_weight=float(section.get("vehicle_weight", ga.vehicle_weight)),
            mutation_prob=float(section.get("mutation_prob", ga.mutation_prob)),
            stall_generations=int(section.get("stall_generations", ga.stall_generations)),
            max_generations=section.get("max_generations", ga.max_generations),
            elite=int(section.get("elite", ga.elite)),
        )

    out = RunConfig(train=train, reward=reward, ga=ga)
    if "seed" in payload:
        out = replace(
            out,
            train=replace(out.train, master_seed=int(payload["seed"])),
            ga=replace(out.ga, seed=int(payload["seed"])),
        )
    return out
