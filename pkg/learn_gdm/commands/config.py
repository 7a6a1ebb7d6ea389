# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import click
import structlog

import learn_gdm.config

logger = structlog.get_logger(logger_name=__name__)


@click.group(name="config")
def main() -> None:
    """Manage learn-gdm's own configuration file."""
    pass


@main.command(name="display")
@click.pass_obj
def display_config(config: learn_gdm.config.Config) -> None:
    """Dump the effective configuration as JSON."""
    click.echo(config.json(indent=2))


@main.command(name="init")
@click.pass_obj
def init_config(config: learn_gdm.config.Config) -> None:
    """Write the effective configuration to the config file."""
    if learn_gdm.config.CONFIG_PATH.exists():
        raise click.UsageError(f"Config file {learn_gdm.config.CONFIG_PATH} already exists")

    learn_gdm.config.CONFIG_DIRECTORY.mkdir(parents=True, exist_ok=True)
    learn_gdm.config.CONFIG_PATH.write_text(config.json(indent=2))
    logger.info("Wrote config file", path=learn_gdm.config.CONFIG_PATH.as_posix())


@main.command(name="path")
def display_path() -> None:
    """Print the config file path."""
    click.echo(learn_gdm.config.CONFIG_PATH)
