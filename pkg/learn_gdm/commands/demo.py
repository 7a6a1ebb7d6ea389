# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import collections
import pathlib
import typing

import click
import inflect
import structlog

import learn_gdm.harness
import learn_gdm.trace

logger = structlog.get_logger(logger_name=__name__)
p = inflect.engine()


def narrate(trace: learn_gdm.trace.DecisionTrace) -> typing.List[str]:
    """One sentence per frame and event kind, in frame order."""
    grouped: typing.Dict[
        typing.Tuple[int, str], typing.List[learn_gdm.trace.TraceRecord]
    ] = collections.defaultdict(list)
    for record in trace.events:
        grouped[(record.frame, str(record.event))].append(record)

    order = ["collision", "transmit", "execute", "deliver"]
    lines = []
    for frame in range(trace.instance.horizon):
        for kind in order:
            records = grouped.get((frame, kind), [])
            if not records:
                continue
            ues = p.join([f"u{r.ue}" for r in records])
            if kind == "collision":
                lines.append(
                    f"frame {frame}: {ues} collide on channel {records[0].channel} "
                    f"at node {records[0].node}"
                )
            elif kind == "transmit":
                lines.append(f"frame {frame}: {ues} upload {p.plural('request', len(records))}")
            elif kind == "execute":
                for r in records:
                    lines.append(
                        f"frame {frame}: u{r.ue} runs its {p.ordinal(r.block)} block "
                        f"on node {r.node}"
                    )
            else:
                for r in records:
                    lines.append(f"frame {frame}: u{r.ue} receives its result at node {r.node}")
    return lines


@click.command(name="fig2-demo")
@click.option(
    "--trace",
    "trace_path",
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    default=None,
    help="Also write the episode trace to this file.",
)
def demo(trace_path: typing.Optional[pathlib.Path]) -> None:
    """Replay the scripted two-node, four-UE walkthrough."""
    result = learn_gdm.harness.run_walkthrough()
    for line in narrate(result.trace):
        logger.info(line)

    logger.info(
        "Walkthrough finished",
        reward=round(result.total_reward, 6),
        collisions=result.collisions,
        sessions=len(result.sessions),
    )
    if trace_path is not None:
        result.trace.dump(trace_path)
