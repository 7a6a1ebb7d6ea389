# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

from __future__ import annotations

import pathlib
import typing

import click
import inflect
import structlog

import learn_gdm.config
import learn_gdm.harness
import learn_gdm.output

logger = structlog.get_logger(logger_name=__name__)
p = inflect.engine()

CHARTED_METRICS = {
    "quality_gated_mean": "mean delivered quality",
    "collisions_mean": "collisions per episode",
    "blocked_mean": "blocked requests per episode",
    "reward_mean": "episode reward",
    "objective_mean": "objective",
}


def sweep_options(function: typing.Callable) -> typing.Callable:
    options = [
        click.option(
            "-v",
            "--value",
            "values",
            type=click.IntRange(min=1),
            multiple=True,
            help="Sweep values; defaults to the configured sweep.",
        ),
        click.option(
            "-p",
            "--policy",
            "policies",
            type=click.Choice(("learn-gdm", "mp", "fp", "gr", "random")),
            multiple=True,
            help="Policies to compare; defaults to the configured policies.",
        ),
        click.option(
            "-k",
            "--checkpoints",
            type=click.Path(file_okay=False, path_type=pathlib.Path),
            default=None,
            help="Directory holding <policy>-u<U>-c<C>-s<seed>.npz checkpoints.",
        ),
        click.option("--train", is_flag=True, help="Train learned policies missing a checkpoint."),
        click.option("-n", "--episodes", type=click.IntRange(min=1), default=None),
        click.option("--svg", is_flag=True, help="Also draw one chart per metric."),
        click.option("--timings", is_flag=True, help="Include wall time in the metrics file."),
        click.pass_obj,
    ]
    for option in reversed(options):
        function = option(function)
    return function


def sweep(
    config: learn_gdm.config.Config,
    axis: learn_gdm.harness.SweepAxis,
    values: typing.Sequence[int],
    policies: typing.Sequence[str],
    checkpoints: typing.Optional[pathlib.Path],
    train: bool,
    episodes: typing.Optional[int],
    svg: bool,
    timings: bool,
) -> None:
    result = learn_gdm.harness.run_sweep(
        config,
        axis,
        checkpoints or config.output / "checkpoints",
        values=values or None,
        policies=policies or None,
        train=train,
        episodes=episodes,
    )
    for skipped in result.skipped:
        logger.warning(
            "Skipped sweep point",
            policy=skipped.point.policy,
            value=skipped.point.value,
            seed=skipped.point.seed,
            reason=skipped.reason,
        )

    rows = result.sink.rows()
    stem = f"sweep-{axis}"
    learn_gdm.output.write_metrics(config.output / f"{stem}.csv", rows, timings=timings)
    if len(result.training):
        learn_gdm.output.write_metrics(
            config.output / f"{stem}-training.csv", result.training.rows(), timings=timings
        )

    aggregates = learn_gdm.harness.aggregate(rows)
    learn_gdm.output.write_aggregates(config.output / f"{stem}-summary.csv", aggregates)
    if svg:
        for metric, label in CHARTED_METRICS.items():
            learn_gdm.output.write_svg(
                config.output / f"{stem}-{metric}.svg",
                learn_gdm.output.aggregate_series(aggregates, metric),
                title=f"{label} by number of {p.plural(axis[:-1])}",
                x_label=p.plural(axis[:-1]),
                y_label=label,
            )

    policies_seen = sorted({aggregate.policy for aggregate in aggregates})
    logger.info(
        "Summarised sweep",
        axis=axis,
        policies=p.join(policies_seen),
        points=len(aggregates),
    )


@click.command(name="sweep-users")
@sweep_options
def sweep_users(config: learn_gdm.config.Config, **kwargs: typing.Any) -> None:
    """Compare policies over the number of UEs."""
    sweep(config, "users", **kwargs)


@click.command(name="sweep-channels")
@sweep_options
def sweep_channels(config: learn_gdm.config.Config, **kwargs: typing.Any) -> None:
    """Compare policies over the number of uplink channels."""
    sweep(config, "channels", **kwargs)
