# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import typing

import click
import click._termui_impl
import colorama
import inflect
import structlog.dev

T = typing.TypeVar("T")

p = inflect.engine()


def bar_template(event: str, unit: str, total: int, **fields: typing.Any) -> str:
    """A click bar template rendered through the console renderer at a ``progress`` level."""
    level_styles = structlog.dev.ConsoleRenderer.get_default_level_styles()
    level_styles["progress"] = colorama.Fore.MAGENTA
    renderer = structlog.dev.ConsoleRenderer(level_styles=level_styles, sort_keys=False)
    return renderer(
        logger=None,
        name="",
        event_dict={
            "event": event,
            "level": "progress",
            "progress": f"%(bar)s %(info)s {p.plural(unit, total)}",
            **{key: str(value) for key, value in fields.items()},
        },
    )


def progressbar(
    length: int,
    event: str,
    unit: str,
    item_show_func: typing.Callable[[T], str],
    **fields: typing.Any,
) -> "click._termui_impl.ProgressBar[T]":
    """
    Progress over ``length`` units of work, driven by ``update(1, item)``.

    The harness reports work through callbacks, so the bar is never iterated directly.
    """
    return click.progressbar(
        length=length,
        bar_template=bar_template(event, unit, length, **fields),
        info_sep=" ",
        item_show_func=lambda item: item_show_func(item) if item is not None else None,
        show_pos=True,
        width=25,
    )
