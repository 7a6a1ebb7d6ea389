# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import pathlib
import sys
import typing

import click
import pydantic.error_wrappers
import structlog

import learn_gdm
import learn_gdm.commands
import learn_gdm.commands.config
import learn_gdm.commands.demo
import learn_gdm.commands.oracle
import learn_gdm.commands.sweep
import learn_gdm.commands.train
import learn_gdm.config
import learn_gdm.harness

logger = structlog.get_logger(logger_name=__name__)

EXIT_USAGE = 1
EXIT_FAILURE = 2
EXIT_ACCEPTANCE = 3


class Group(click.Group):
    """Maps failures inside commands to the documented exit codes."""

    def invoke(self, ctx: click.Context) -> typing.Any:
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.exceptions.Abort, click.ClickException):
            raise
        except learn_gdm.harness.AcceptanceFailure as error:
            logger.error("Acceptance check failed", error=str(error))
            raise click.exceptions.Exit(EXIT_ACCEPTANCE) from error
        except Exception as error:
            logger.error("Command failed", error=str(error), error_type=type(error).__name__)
            raise click.exceptions.Exit(EXIT_FAILURE) from error


@click.group(cls=Group)
@click.option(
    "-c",
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
    default=None,
    help="JSON config file to use instead of the default one.",
)
@click.option("-s", "--seed", type=click.IntRange(min=0), default=None, help="Master seed.")
@click.option(
    "-o",
    "--output",
    type=click.Path(file_okay=False, path_type=pathlib.Path),
    default=None,
    help="Directory for metrics, charts and checkpoints.",
)
@click.option("-v", "--verbose", is_flag=True, help="Log per-frame detail.")
@click.pass_context
def main(
    ctx: click.Context,
    config_path: typing.Optional[pathlib.Path],
    seed: typing.Optional[int],
    output: typing.Optional[pathlib.Path],
    verbose: bool,
) -> None:
    """Joint block placement and channel access for diffusion model inference at the edge."""
    learn_gdm.config.configure_logging(verbose=verbose)
    try:
        config = learn_gdm.config.Config.load(config_path)
    except pydantic.error_wrappers.ValidationError as error:
        raise click.UsageError(str(error)) from error

    overrides: typing.Dict[str, typing.Any] = {}
    if seed is not None:
        overrides["seed"] = seed
    if output is not None:
        overrides["output"] = output
    ctx.obj = config.copy(update=overrides)


main.add_command(learn_gdm.commands.config.main)
main.add_command(learn_gdm.commands.train.train)
main.add_command(learn_gdm.commands.train.evaluate)
main.add_command(learn_gdm.commands.sweep.sweep_users)
main.add_command(learn_gdm.commands.sweep.sweep_channels)
main.add_command(learn_gdm.commands.oracle.oracle)
main.add_command(learn_gdm.commands.oracle.check_trace)
main.add_command(learn_gdm.commands.demo.demo)


def run() -> None:
    """Console entry point: usage errors exit with 1 instead of click's 2."""
    try:
        code = main.main(standalone_mode=False)
    except click.UsageError as error:
        error.show()
        sys.exit(EXIT_USAGE)
    except click.ClickException as error:
        error.show()
        sys.exit(EXIT_FAILURE)
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        sys.exit(EXIT_USAGE)
    sys.exit(code if isinstance(code, int) else 0)
