# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import dataclasses
import pathlib

import numpy as np
import pytest

import learn_gdm.agent
import learn_gdm.harness
import learn_gdm.oracle
from learn_gdm.agent import Agent
from learn_gdm.config import Config
from learn_gdm.environment import run_episode
from learn_gdm.harness import MetricRow, MetricsSink, Stream
from learn_gdm.policies import build_policy


def row(policy: str, value: int, reward: float, seed: int = 0, episode: int = 0) -> MetricRow:
    return MetricRow(
        run="eval",
        policy=policy,
        seed=seed,
        sweep="users",
        value=value,
        episode=episode,
        reward=reward,
        loss=None,
        epsilon=None,
        quality_gated=0.5,
        quality_ungated=0.75,
        collisions=0,
        blocked=int(reward),
        objective_quality=1.0,
        objective_execution=2.0,
        objective_transfer=0.0,
        objective_total=0.8,
    )


def without_timing(rows):
    return [dataclasses.replace(r, wall_time=0.0) for r in rows]


def test_streams_are_independent() -> None:
    first = learn_gdm.harness.stream_rng(5, Stream.MOBILITY, 2).uniform(size=4)
    again = learn_gdm.harness.stream_rng(5, Stream.MOBILITY, 2).uniform(size=4)
    other_stream = learn_gdm.harness.stream_rng(5, Stream.POLICY, 2).uniform(size=4)
    other_index = learn_gdm.harness.stream_rng(5, Stream.MOBILITY, 3).uniform(size=4)
    assert first.tolist() == again.tolist()
    assert first.tolist() != other_stream.tolist()
    assert first.tolist() != other_index.tolist()


def test_checkpoint_name() -> None:
    assert learn_gdm.harness.checkpoint_name("mp", 10, 2, 3) == "mp-u10-c2-s3.npz"


def test_sink_sorts_rows() -> None:
    sink = MetricsSink()
    sink.add(row("gr", 2, 1.0))
    sink.add(row("fp", 2, 1.0))
    sink.add(row("gr", 1, 1.0))
    assert [(r.value, r.policy) for r in sink.rows()] == [(1, "gr"), (2, "fp"), (2, "gr")]
    assert len(sink) == 3


def test_aggregate() -> None:
    rows = [row("gr", 5, 1.0), row("gr", 5, 3.0, seed=1), row("mp", 5, 2.0), row("gr", 10, 4.0)]
    gr5, mp5, gr10 = learn_gdm.harness.aggregate(rows)

    assert (gr5.policy, gr5.value, gr5.samples) == ("gr", 5, 2)
    assert gr5.reward_mean == 2.0
    assert gr5.reward_std == 1.0
    assert gr5.blocked_mean == 2.0
    assert gr5.quality_gated_mean == 0.5
    assert (mp5.policy, mp5.samples, mp5.reward_std) == ("mp", 1, 0.0)
    assert (gr10.value, gr10.reward_mean) == (10, 4.0)


def test_walkthrough_metric_row() -> None:
    result = learn_gdm.harness.run_walkthrough()
    metrics = learn_gdm.harness.metric_row(
        result, learn_gdm.harness.RunContext(run="demo"), "scripted", 0, 0, wall_time=0.0
    )
    assert metrics.objective_total == pytest.approx(2.3)
    assert metrics.reward == pytest.approx(2.3)
    assert metrics.collisions == 1
    assert metrics.quality_gated == 1.0


def test_training_writes_one_row_and_checkpoint(config: Config, tmp_path: pathlib.Path) -> None:
    sink = MetricsSink()
    checkpoint = tmp_path / "agent.npz"
    agent = learn_gdm.harness.run_training(config, "learn-gdm", 0, checkpoint, sink, episodes=1)

    (metrics,) = sink.rows()
    assert (metrics.run, metrics.policy, metrics.episode) == ("train", "learn-gdm", 0)
    assert metrics.epsilon == agent.epsilon
    assert agent.steps == config.system.episode_length

    info = learn_gdm.agent.read_checkpoint_metadata(checkpoint)
    assert (info["episodes"], info["ues"], info["channels"]) == (1, 3, 1)
    loaded = learn_gdm.agent.Agent.load(checkpoint, np.random.default_rng(0))
    assert loaded.steps == agent.steps


def test_training_resumes(config: Config, tmp_path: pathlib.Path) -> None:
    checkpoint = tmp_path / "agent.npz"
    learn_gdm.harness.run_training(config, "mp", 0, checkpoint, MetricsSink(), episodes=1)

    sink = MetricsSink()
    agent = learn_gdm.harness.run_training(
        config, "mp", 0, checkpoint, sink, episodes=1, resume=True
    )
    frames = 2 * config.system.episode_length
    assert agent.steps == frames
    assert agent.epsilon == pytest.approx(config.agent.epsilon_decay**frames)
    assert [r.episode for r in sink.rows()] == [1]
    assert learn_gdm.agent.read_checkpoint_metadata(checkpoint)["episodes"] == 2


def test_training_is_repeatable(config: Config, tmp_path: pathlib.Path) -> None:
    first, second = MetricsSink(), MetricsSink()
    learn_gdm.harness.run_training(config, "fp", 1, tmp_path / "a.npz", first)
    learn_gdm.harness.run_training(config, "fp", 1, tmp_path / "b.npz", second)
    assert without_timing(first.rows()) == without_timing(second.rows())
    assert len(first) == config.training.episodes


def test_training_rejects_baselines(config: Config, tmp_path: pathlib.Path) -> None:
    with pytest.raises(ValueError):
        learn_gdm.harness.run_training(config, "gr", 0, tmp_path / "x.npz", MetricsSink())


def test_evaluation_is_repeatable(config: Config) -> None:
    first, second = MetricsSink(), MetricsSink()
    learn_gdm.harness.run_evaluation(config, "random", 2, first, episodes=2)
    learn_gdm.harness.run_evaluation(config, "random", 2, second, episodes=2)
    assert without_timing(first.rows()) == without_timing(second.rows())
    assert [r.run for r in first.rows()] == ["eval", "eval"]


def test_sweep_skips_missing_checkpoints(config: Config, tmp_path: pathlib.Path) -> None:
    result = learn_gdm.harness.run_sweep(config, "users", tmp_path / "checkpoints")

    assert [(s.point.policy, s.point.value) for s in result.skipped] == [
        ("learn-gdm", 2),
        ("learn-gdm", 3),
    ]
    assert all("missing checkpoint" in s.reason for s in result.skipped)
    assert [(r.policy, r.value, r.sweep) for r in result.sink.rows()] == [
        ("gr", 2, "users"),
        ("gr", 3, "users"),
    ]
    assert len(result.training) == 0


def test_sweep_trains_missing_checkpoints(config: Config, tmp_path: pathlib.Path) -> None:
    checkpoints = tmp_path / "checkpoints"
    result = learn_gdm.harness.run_sweep(config, "channels", checkpoints, values=[2], train=True)

    assert result.skipped == []
    assert (checkpoints / "learn-gdm-u3-c2-s0.npz").exists()
    assert len(result.training) == config.training.episodes
    assert sorted(r.policy for r in result.sink.rows()) == ["gr", "learn-gdm"]

    again = learn_gdm.harness.run_sweep(config, "channels", checkpoints, values=[2])
    assert again.skipped == []
    assert len(again.training) == 0
    assert without_timing(again.sink.rows()) == without_timing(result.sink.rows())


def test_sweep_config() -> None:
    config = Config()
    assert learn_gdm.harness.sweep_config(config, "users", 25).system.ues == 25
    assert learn_gdm.harness.sweep_config(config, "channels", 4).system.channels == 4
    assert config.system.ues == 15



@pytest.mark.parametrize("policy", ["learn-gdm", "mp", "fp", "gr", "random"])
def test_simulated_traces_satisfy_constraints(config: Config, policy: str) -> None:
    for seed in range(5):
        scenario = learn_gdm.harness.scenario_for(config, seed)
        agent = Agent(
            learn_gdm.harness.network_spec(config, seed),
            config.agent,
            learn_gdm.harness.stream_rng(seed, Stream.AGENT),
        )
        for episode in range(3):
            env = learn_gdm.harness.make_environment(config, scenario, seed, episode)
            placement = build_policy(
                policy, agent=agent, rng=learn_gdm.harness.stream_rng(seed, Stream.POLICY, episode)
            )
            result = run_episode(env, placement)
            report = learn_gdm.oracle.check_constraints(result.trace)
            assert report.feasible, report.violations


def test_greedy_access_never_collides(config: Config, tmp_path: pathlib.Path) -> None:
    result = learn_gdm.harness.run_sweep(
        config, "channels", tmp_path / "checkpoints", values=[1, 2], policies=["gr"], seeds=[0, 1]
    )
    rows = result.sink.rows()
    assert sorted({(r.value, r.seed) for r in rows}) == [(1, 0), (1, 1), (2, 0), (2, 1)]
    assert all(r.collisions == 0 for r in rows)


@pytest.mark.slow
def test_ten_thousand_frames_satisfy_constraints(config: Config) -> None:
    config = config.with_system(episode_length=40, ues=5)
    frames = 0
    for policy in ["learn-gdm", "mp", "fp", "gr", "random"]:
        for seed in range(5):
            scenario = learn_gdm.harness.scenario_for(config, seed)
            agent = Agent(
                learn_gdm.harness.network_spec(config, seed),
                config.agent,
                learn_gdm.harness.stream_rng(seed, Stream.AGENT),
            )
            for episode in range(10):
                env = learn_gdm.harness.make_environment(config, scenario, seed, episode)
                rng = learn_gdm.harness.stream_rng(seed, Stream.POLICY, episode)
                result = run_episode(env, build_policy(policy, agent=agent, rng=rng))
                frames += len(result.outcomes)
                report = learn_gdm.oracle.check_constraints(result.trace)
                assert report.feasible, (policy, seed, episode, report.violations)

    assert frames >= 10_000


def learning_config(config: Config, episodes: int) -> Config:
    agent = config.agent.copy(update={"epsilon_decay": 0.995, "epsilon_floor": 0.05})
    training = config.training.copy(update={"episodes": episodes, "checkpoint_every": episodes})
    return config.copy(update={"agent": agent, "training": training})


@pytest.mark.slow
def test_training_reward_trends_upward(config: Config, tmp_path: pathlib.Path) -> None:
    config = learning_config(config.with_system(episode_length=10), episodes=300)
    improved = 0
    seeds = range(3)
    for seed in seeds:
        rows = []
        learn_gdm.harness.run_training(
            config,
            "learn-gdm",
            seed,
            tmp_path / f"trend-{seed}.npz",
            MetricsSink(),
            on_episode=rows.append,
        )
        early = np.mean([r.reward for r in rows[:50]])
        late = np.mean([r.reward for r in rows[-50:]])
        improved += late >= early

    assert improved >= 2


@pytest.mark.slow
def test_learned_placement_matches_or_beats_greedy(config: Config, tmp_path: pathlib.Path) -> None:
    config = learning_config(config.with_system(episode_length=10), episodes=300)
    seeds = [0, 1, 2, 3, 4]
    result = learn_gdm.harness.run_sweep(
        config,
        "users",
        tmp_path / "checkpoints",
        values=[3],
        policies=["learn-gdm", "gr"],
        seeds=seeds,
        train=True,
        episodes=10,
    )
    rows = result.sink.rows()
    wins = 0
    for seed in seeds:
        learned = np.mean([r.reward for r in rows if r.policy == "learn-gdm" and r.seed == seed])
        greedy = np.mean([r.reward for r in rows if r.policy == "gr" and r.seed == seed])
        wins += learned >= greedy

    # one-sided sign test over five seeds
    assert wins >= 4


@pytest.mark.slow
def test_greedy_improves_with_more_channels(config: Config, tmp_path: pathlib.Path) -> None:
    config = config.with_system(ues=6, episode_length=20)
    seeds = list(range(5))
    result = learn_gdm.harness.run_sweep(
        config,
        "channels",
        tmp_path / "checkpoints",
        values=[1, 2, 3],
        policies=["gr"],
        seeds=seeds,
        episodes=5,
    )
    rows = result.sink.rows()

    def total(metric: str, channels: int) -> float:
        return float(sum(getattr(r, metric) for r in rows if r.value == channels))

    def mean(metric: str, channels: int) -> float:
        return float(np.mean([getattr(r, metric) for r in rows if r.value == channels]))

    for fewer, more in [(1, 2), (2, 3)]:
        assert total("collisions", more) <= total("collisions", fewer)
        assert total("blocked", more) <= total("blocked", fewer)
        assert mean("quality_ungated", more) >= mean("quality_ungated", fewer) - 0.05
