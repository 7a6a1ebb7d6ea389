# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import pathlib
import typing

import click
import numpy as np
import structlog

import learn_gdm.agent
import learn_gdm.config
import learn_gdm.ext.click
import learn_gdm.harness
import learn_gdm.output

logger = structlog.get_logger(logger_name=__name__)

ALL_POLICIES = ("learn-gdm", "mp", "fp", "gr", "random")


@click.command(name="train")
@click.option(
    "-p",
    "--policy",
    type=click.Choice(learn_gdm.config.LEARNED_POLICIES),
    default="learn-gdm",
    show_default=True,
    help="Learned policy to train.",
)
@click.option("-n", "--episodes", type=click.IntRange(min=1), default=None, help="Episode count.")
@click.option(
    "-k",
    "--checkpoint",
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    default=None,
    help="Checkpoint file; defaults to a name derived from the policy, UEs, channels and seed.",
)
@click.option("--resume", is_flag=True, help="Continue from an existing checkpoint.")
@click.option("--svg", is_flag=True, help="Also draw the reward curve.")
@click.option("--timings", is_flag=True, help="Include wall time in the metrics file.")
@click.pass_obj
def train(
    config: learn_gdm.config.Config,
    policy: str,
    episodes: typing.Optional[int],
    checkpoint: typing.Optional[pathlib.Path],
    resume: bool,
    svg: bool,
    timings: bool,
) -> None:
    """Train a learned placement policy and write per-episode metrics."""
    system = config.system
    checkpoint = checkpoint or config.output / "checkpoints" / learn_gdm.harness.checkpoint_name(
        policy, system.ues, system.channels, config.seed
    )
    episodes = episodes or config.training.episodes
    sink = learn_gdm.harness.MetricsSink()

    logger.info(
        "Training policy",
        policy=policy,
        seed=config.seed,
        episodes=episodes,
        checkpoint=checkpoint.as_posix(),
    )
    with learn_gdm.ext.click.progressbar(
        length=episodes,
        event="Training",
        unit="episode",
        item_show_func=lambda row: f"reward={row.reward:.3f}",
        logger_name=__name__,
        policy=policy,
    ) as progress:
        learn_gdm.harness.run_training(
            config,
            policy,
            config.seed,
            checkpoint,
            sink,
            episodes=episodes,
            resume=resume,
            on_episode=lambda row: progress.update(1, row),
        )

    rows = sink.rows()
    stem = f"train-{policy}-s{config.seed}"
    learn_gdm.output.write_metrics(config.output / f"{stem}.csv", rows, timings=timings)
    if svg:
        learn_gdm.output.write_svg(
            config.output / f"{stem}.svg",
            learn_gdm.output.reward_series(rows),
            title=f"Training reward ({policy})",
            x_label="episode",
            y_label="episode reward",
        )


@click.command(name="eval")
@click.option(
    "-p",
    "--policy",
    type=click.Choice(ALL_POLICIES),
    default="learn-gdm",
    show_default=True,
    help="Policy to evaluate.",
)
@click.option("-n", "--episodes", type=click.IntRange(min=1), default=None, help="Episode count.")
@click.option(
    "-k",
    "--checkpoint",
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    default=None,
    help="Checkpoint for learned policies.",
)
@click.option("--timings", is_flag=True, help="Include wall time in the metrics file.")
@click.pass_obj
def evaluate(
    config: learn_gdm.config.Config,
    policy: str,
    episodes: typing.Optional[int],
    checkpoint: typing.Optional[pathlib.Path],
    timings: bool,
) -> None:
    """Run a policy with exploration off and write per-episode metrics."""
    agent = None
    if policy in learn_gdm.config.LEARNED_POLICIES:
        if checkpoint is None:
            raise click.UsageError(f"Policy {policy} needs --checkpoint")
        metadata = learn_gdm.agent.read_checkpoint_metadata(checkpoint)
        if (metadata["ues"], metadata["channels"]) != (config.system.ues, config.system.channels):
            logger.info(
                "Using the checkpoint's UE and channel counts",
                ues=metadata["ues"],
                channels=metadata["channels"],
            )
            config = config.with_system(ues=metadata["ues"], channels=metadata["channels"])
        agent = learn_gdm.agent.Agent.load(checkpoint, np.random.default_rng(config.seed))

    sink = learn_gdm.harness.MetricsSink()
    rows = learn_gdm.harness.run_evaluation(
        config, policy, config.seed, sink, agent=agent, episodes=episodes
    )
    logger.info(
        "Evaluated policy",
        policy=policy,
        episodes=len(rows),
        reward=float(np.mean([row.reward for row in rows])),
        quality=float(np.mean([row.quality_gated for row in rows])),
        objective=float(np.mean([row.objective_total for row in rows])),
    )
    learn_gdm.output.write_metrics(
        config.output / f"eval-{policy}-s{config.seed}.csv", sink.rows(), timings=timings
    )
