# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""
Training, evaluation and sweep runs.

Every random draw comes from a stream derived from (master seed, stream, index), so a run is
fully determined by its seed no matter which worker thread executes it.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import enum
import itertools
import pathlib
import threading
import time
import typing

import numpy as np
import structlog

from learn_gdm.access import GreedyAccess, ScriptedAccess
from learn_gdm.agent import Agent, Experience, read_checkpoint_metadata, to_slots
from learn_gdm.config import LEARNED_POLICIES, AgentConfig, Config
from learn_gdm.environment import Environment, EpisodeResult, observation_width, run_episode
from learn_gdm.mobility import RandomWaypoint, ReplayMobility
from learn_gdm.nn import NetworkSpec
from learn_gdm.oracle import (
    InstanceShape,
    SearchLimits,
    objective_value,
    random_instance,
    solve_exact,
)
from learn_gdm.policies import MASK_KINDS, AgentPolicy, Policy, ScriptedPolicy, build_policy
from learn_gdm.scenario import Scenario, build_scenario, two_node_walkthrough
from learn_gdm.trace import Instance

logger = structlog.get_logger(logger_name=__name__)


class AcceptanceFailure(RuntimeError):
    pass


class Stream(enum.IntEnum):
    SCENARIO = 0
    MOBILITY = 1
    AGENT = 2
    POLICY = 3
    EVALUATION = 4
    ORACLE = 5


def stream_rng(seed: int, stream: Stream, index: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, int(stream), index])


@dataclasses.dataclass(frozen=True)
class MetricRow:
    run: str
    policy: str
    seed: int
    sweep: str
    value: int
    episode: int
    reward: float
    loss: typing.Optional[float]
    epsilon: typing.Optional[float]
    quality_gated: float
    quality_ungated: float
    collisions: int
    blocked: int
    objective_quality: float
    objective_execution: float
    objective_transfer: float
    objective_total: float
    wall_time: float = 0.0

    @property
    def sort_key(self) -> typing.Tuple[typing.Any, ...]:
        return (self.run, self.sweep, self.value, self.policy, self.seed, self.episode)


class MetricsSink:
    """Append-only row store shared by worker threads."""

    def __init__(self) -> None:
        self._rows: typing.List[MetricRow] = []
        self._lock = threading.Lock()

    def add(self, row: MetricRow) -> None:
        with self._lock:
            self._rows.append(row)

    def __len__(self) -> int:
        with self._lock:
            return len(self._rows)

    def rows(self) -> typing.List[MetricRow]:
        with self._lock:
            return sorted(self._rows, key=lambda row: row.sort_key)


@dataclasses.dataclass(frozen=True)
class RunContext:
    run: str = "train"
    sweep: str = "none"
    value: int = 0


def metric_row(
    result: EpisodeResult,
    context: RunContext,
    policy: str,
    seed: int,
    episode: int,
    wall_time: float,
    loss: typing.Optional[float] = None,
    epsilon: typing.Optional[float] = None,
) -> MetricRow:
    objective = objective_value(result.trace)
    return MetricRow(
        run=context.run,
        policy=policy,
        seed=seed,
        sweep=context.sweep,
        value=context.value,
        episode=episode,
        reward=result.total_reward,
        loss=loss,
        epsilon=epsilon,
        quality_gated=result.mean_quality(gated=True),
        quality_ungated=result.mean_quality(gated=False),
        collisions=result.collisions,
        blocked=result.blocked,
        objective_quality=objective.quality,
        objective_execution=objective.execution,
        objective_transfer=objective.transfer,
        objective_total=objective.total,
        wall_time=wall_time,
    )


def scenario_for(config: Config, seed: int) -> Scenario:
    return build_scenario(config.system, stream_rng(seed, Stream.SCENARIO))


def make_environment(
    config: Config,
    scenario: Scenario,
    seed: int,
    episode: int,
    stream: Stream = Stream.MOBILITY,
) -> Environment:
    system = config.system
    mobility = RandomWaypoint(
        topology=scenario.topology,
        frame_duration=system.frame_duration,
        speed_range=system.speed_range,
        pause_frames=system.pause_frames,
    )
    return Environment(
        scenario=scenario,
        mobility=mobility,
        access=GreedyAccess(channels=scenario.channels, mode=system.access_mode),
        horizon=system.episode_length,
        history=system.history,
        rng=stream_rng(seed, stream, episode),
    )


def network_spec(config: Config, seed: int) -> NetworkSpec:
    system = config.system
    return NetworkSpec(
        frame_width=observation_width(system.node_count, system.ues),
        history=system.history,
        ues=system.ues,
        nodes=system.node_count,
        recurrent=config.agent.recurrent,
        recurrent_units=config.agent.recurrent_units,
        hidden_units=tuple(config.agent.hidden_units),
        seed=seed,
    )


def checkpoint_name(policy: str, ues: int, channels: int, seed: int) -> str:
    return f"{policy}-u{ues}-c{channels}-s{seed}.npz"


def _require_learned(policy: str) -> None:
    if policy not in LEARNED_POLICIES:
        raise ValueError(
            f"Policy {policy} does not learn, pick one of {', '.join(LEARNED_POLICIES)}"
        )


def run_training(
    config: Config,
    policy: str,
    seed: int,
    checkpoint: pathlib.Path,
    sink: MetricsSink,
    episodes: typing.Optional[int] = None,
    resume: bool = False,
    context: RunContext = RunContext(),
    on_episode: typing.Optional[typing.Callable[[MetricRow], None]] = None,
) -> Agent:
    """
    Train a learned policy, checkpointing every ``checkpoint_every`` episodes and at the end.

    With ``resume`` an existing checkpoint is continued: exploration rate, step counter and
    episode index pick up where it stopped.
    """
    _require_learned(policy)
    log = logger.bind(policy=policy, seed=seed, sweep=context.sweep, value=context.value)
    episodes = episodes if episodes is not None else config.training.episodes
    scenario = scenario_for(config, seed)

    start = 0
    if resume and checkpoint.exists():
        agent = Agent.load(checkpoint, stream_rng(seed, Stream.AGENT, 1))
        start = int(read_checkpoint_metadata(checkpoint).get("episodes", 0))
        log.info("Resuming training", checkpoint=checkpoint.as_posix(), episode=start)
    else:
        agent = Agent(network_spec(config, seed), config.agent, stream_rng(seed, Stream.AGENT))

    learner = AgentPolicy(agent=agent, mask_kind=MASK_KINDS[policy], name=policy, explore=True)

    def save(done: int) -> None:
        agent.save(
            checkpoint,
            episodes=done,
            policy=policy,
            seed=seed,
            ues=config.system.ues,
            channels=config.system.channels,
        )

    for episode in range(start, start + episodes):
        env = make_environment(config, scenario, seed, episode)
        losses: typing.List[float] = []

        def observe(observation, action, outcome, next_observation, done) -> None:  # type: ignore
            agent.remember(
                Experience(
                    reward=outcome.frame_reward,
                    observation=observation,
                    action=to_slots(action),
                    next_observation=next_observation,
                    terminal=done,
                    next_mask=learner.mask(env),
                )
            )
            loss = agent.train_step()
            if loss is not None:
                losses.append(loss)
            agent.sync_and_decay()

        started = time.perf_counter()
        result = run_episode(env, learner, observe)
        row = metric_row(
            result,
            context,
            policy,
            seed,
            episode,
            wall_time=time.perf_counter() - started,
            loss=float(np.mean(losses)) if losses else None,
            epsilon=agent.epsilon,
        )
        sink.add(row)
        if on_episode is not None:
            on_episode(row)

        if (episode + 1) % config.training.checkpoint_every == 0:
            save(episode + 1)

    save(start + episodes)
    log.info("Finished training", episodes=episodes, epsilon=agent.epsilon, steps=agent.steps)
    return agent


def run_evaluation(
    config: Config,
    policy: str,
    seed: int,
    sink: MetricsSink,
    agent: typing.Optional[Agent] = None,
    episodes: typing.Optional[int] = None,
    context: RunContext = RunContext(run="eval"),
) -> typing.List[MetricRow]:
    """Run a policy with exploration off and record one row per episode."""
    episodes = episodes if episodes is not None else config.training.evaluation_episodes
    scenario = scenario_for(config, seed)
    rows = []
    for episode in range(episodes):
        env = make_environment(config, scenario, seed, episode, stream=Stream.EVALUATION)
        placement = build_policy(
            policy, agent=agent, rng=stream_rng(seed, Stream.POLICY, episode), explore=False
        )
        started = time.perf_counter()
        result = run_episode(env, placement)
        row = metric_row(
            result, context, policy, seed, episode, wall_time=time.perf_counter() - started
        )
        sink.add(row)
        rows.append(row)

    logger.debug(
        "Evaluated policy",
        policy=policy,
        seed=seed,
        sweep=context.sweep,
        value=context.value,
        reward=float(np.mean([row.reward for row in rows])),
    )
    return rows


@dataclasses.dataclass(frozen=True)
class SweepPoint:
    policy: str
    value: int
    seed: int


@dataclasses.dataclass(frozen=True)
class SkippedPoint:
    point: SweepPoint
    reason: str


@dataclasses.dataclass()
class SweepResult:
    sink: MetricsSink
    training: MetricsSink
    skipped: typing.List[SkippedPoint]


SweepAxis = typing.Literal["users", "channels"]


def sweep_config(config: Config, axis: SweepAxis, value: int) -> Config:
    if axis == "users":
        return config.with_system(ues=value)
    return config.with_system(channels=value)


def run_sweep(
    config: Config,
    axis: SweepAxis,
    checkpoints: pathlib.Path,
    values: typing.Optional[typing.Sequence[int]] = None,
    policies: typing.Optional[typing.Sequence[str]] = None,
    seeds: typing.Optional[typing.Sequence[int]] = None,
    train: bool = False,
    episodes: typing.Optional[int] = None,
) -> SweepResult:
    """
    Evaluate every policy at every sweep value and seed.

    Learned policies need ``<policy>-u<U>-c<C>-s<seed>.npz`` in ``checkpoints``; with ``train``
    missing ones are trained in place, otherwise the point is skipped.
    """
    training = config.training
    if values is None:
        values = training.user_sweep if axis == "users" else training.channel_sweep
    policies = policies if policies is not None else training.policies
    seeds = seeds if seeds is not None else training.seeds

    sink = MetricsSink()
    training_sink = MetricsSink()
    skipped: typing.List[SkippedPoint] = []
    lock = threading.Lock()

    def evaluate(point: SweepPoint) -> None:
        point_config = sweep_config(config, axis, point.value)
        context = RunContext(run=f"sweep-{axis}", sweep=axis, value=point.value)
        agent = None
        if point.policy in LEARNED_POLICIES:
            system = point_config.system
            name = checkpoint_name(point.policy, system.ues, system.channels, point.seed)
            path = checkpoints / name
            if path.exists():
                agent = Agent.load(path, stream_rng(point.seed, Stream.AGENT, 1))
            elif train:
                agent = run_training(
                    point_config,
                    point.policy,
                    point.seed,
                    path,
                    training_sink,
                    context=RunContext(run="train", sweep=axis, value=point.value),
                )
            else:
                reason = f"missing checkpoint {path.name}"
                logger.warning("Skipping sweep point", **dataclasses.asdict(point), reason=reason)
                with lock:
                    skipped.append(SkippedPoint(point, reason))
                return

        run_evaluation(point_config, point.policy, point.seed, sink, agent, episodes, context)

    points = [
        SweepPoint(policy=policy, value=value, seed=seed)
        for value, policy, seed in itertools.product(values, policies, seeds)
    ]
    with concurrent.futures.ThreadPoolExecutor(max_workers=training.workers) as executor:
        for future in [executor.submit(evaluate, point) for point in points]:
            future.result()

    skipped.sort(key=lambda s: (s.point.value, s.point.policy, s.point.seed))
    logger.info(
        "Finished sweep",
        axis=axis,
        points=len(points),
        skipped=len(skipped),
        rows=len(sink),
    )
    return SweepResult(sink=sink, training=training_sink, skipped=skipped)


@dataclasses.dataclass(frozen=True)
class Aggregate:
    policy: str
    sweep: str
    value: int
    samples: int
    reward_mean: float
    reward_std: float
    quality_gated_mean: float
    quality_gated_std: float
    quality_ungated_mean: float
    quality_ungated_std: float
    collisions_mean: float
    collisions_std: float
    blocked_mean: float
    blocked_std: float
    objective_mean: float
    objective_std: float


def aggregate(rows: typing.Iterable[MetricRow]) -> typing.List[Aggregate]:
    """Mean and population std per (policy, sweep value) over seeds and episodes."""
    groups: typing.Dict[typing.Tuple[str, str, int], typing.List[MetricRow]] = {}
    for row in rows:
        groups.setdefault((row.policy, row.sweep, row.value), []).append(row)

    aggregates = []
    ordered = sorted(groups.items(), key=lambda kv: (kv[0][2], kv[0][0]))
    for (policy, sweep, value), group in ordered:

        def stats(field: str) -> typing.Tuple[float, float]:
            data = np.array([getattr(row, field) for row in group], dtype=np.float64)
            return float(np.mean(data)), float(np.std(data))

        reward, gated, ungated = stats("reward"), stats("quality_gated"), stats("quality_ungated")
        collisions, blocked = stats("collisions"), stats("blocked")
        objective = stats("objective_total")
        aggregates.append(
            Aggregate(
                policy=policy,
                sweep=sweep,
                value=value,
                samples=len(group),
                reward_mean=reward[0],
                reward_std=reward[1],
                quality_gated_mean=gated[0],
                quality_gated_std=gated[1],
                quality_ungated_mean=ungated[0],
                quality_ungated_std=ungated[1],
                collisions_mean=collisions[0],
                collisions_std=collisions[1],
                blocked_mean=blocked[0],
                blocked_std=blocked[1],
                objective_mean=objective[0],
                objective_std=objective[1],
            )
        )
    return aggregates


def instance_environment(instance: Instance, rng: np.random.Generator) -> Environment:
    scenario = instance.scenario
    return Environment(
        scenario=scenario,
        mobility=ReplayMobility(instance.association),
        access=GreedyAccess(channels=scenario.channels),
        horizon=instance.horizon,
        history=1,
        rng=rng,
    )


@dataclasses.dataclass(frozen=True)
class OracleComparison:
    index: int
    oracle: float
    policies: typing.Dict[str, float]

    @property
    def dominated(self) -> bool:
        return all(value <= self.oracle + 1e-9 for value in self.policies.values())


ORACLE_POLICIES = ("learn-gdm", "mp", "fp", "gr", "random")


def instance_agent(
    instance: Instance, config: AgentConfig, rng: np.random.Generator, seed: int
) -> Agent:
    """An untrained agent sized for an oracle instance; it acts greedily on its initial weights."""
    scenario = instance.scenario
    spec = NetworkSpec(
        frame_width=observation_width(scenario.node_count, scenario.ue_count),
        history=1,
        ues=scenario.ue_count,
        nodes=scenario.node_count,
        recurrent=config.recurrent,
        recurrent_units=config.recurrent_units,
        hidden_units=tuple(config.hidden_units),
        seed=seed,
    )
    return Agent(spec, config, rng)


def compare_with_oracle(
    count: int,
    seed: int,
    policies: typing.Sequence[str] = ORACLE_POLICIES,
    shape: InstanceShape = InstanceShape(),
    limits: SearchLimits = SearchLimits(),
    agent_config: AgentConfig = AgentConfig(),
) -> typing.List[OracleComparison]:
    """
    Solve random small instances exactly and check that no policy beats the optimum.

    Learned policies act through a freshly seeded agent per instance with exploration off.
    """
    comparisons = []
    for index in range(count):
        instance = random_instance(stream_rng(seed, Stream.ORACLE, index), shape)
        solution = solve_exact(instance, limits)
        values = {}
        for name in policies:
            env = instance_environment(instance, stream_rng(seed, Stream.MOBILITY, index))
            agent = None
            if name in LEARNED_POLICIES:
                agent = instance_agent(
                    instance, agent_config, stream_rng(seed, Stream.AGENT, index), seed + index
                )
            placement: Policy = build_policy(
                name, agent=agent, rng=stream_rng(seed, Stream.POLICY, index), explore=False
            )
            result = run_episode(env, placement)
            values[name] = objective_value(result.trace).total
        comparison = OracleComparison(index=index, oracle=solution.value, policies=values)
        comparisons.append(comparison)
        if not comparison.dominated:
            logger.warning("Policy beat the oracle", index=index, oracle=solution.value, **values)
    return comparisons


def run_walkthrough() -> EpisodeResult:
    """Replay the scripted two-node scenario."""
    run = two_node_walkthrough()
    env = Environment(
        scenario=run.scenario,
        mobility=ReplayMobility(run.association),
        access=ScriptedAccess(run.grants),
        horizon=run.horizon,
        history=1,
        rng=np.random.default_rng(0),
    )
    return run_episode(env, ScriptedPolicy(run.actions))


