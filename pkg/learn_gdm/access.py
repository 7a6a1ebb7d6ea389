# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""
Uplink channel access: the greedy priority scheduler and collision resolution.

UEs closest below their quality threshold are served first. Channels are reused across nodes,
so contention (and collisions) only exist between UEs attached to the same node.
"""

from __future__ import annotations

import abc
import collections
import dataclasses
import typing

import numpy as np
import structlog

logger = structlog.get_logger(logger_name=__name__)

PRIORITY_FLOOR = 1e-8

Grants = typing.List[typing.Optional[int]]
AccessMode = typing.Literal["per-node", "global"]


@dataclasses.dataclass(frozen=True)
class PriorityRecord:
    ue: int
    priority: float


def compute_priorities(
    qualities: typing.Sequence[float],
    thresholds: typing.Sequence[float],
) -> typing.List[PriorityRecord]:
    """
    max(1 / (threshold − quality), 1e-8) per UE.

    At or above the threshold the raw expression is negative or undefined, so it clamps to the
    floor; UEs without a session have quality 0.
    """
    records = []
    for ue, (current, threshold) in enumerate(zip(qualities, thresholds)):
        gap = threshold - current
        priority = 1.0 / gap if gap > 0 else PRIORITY_FLOOR
        records.append(PriorityRecord(ue=ue, priority=max(priority, PRIORITY_FLOOR)))
    return records


def priority_order(priorities: typing.Sequence[PriorityRecord]) -> typing.List[int]:
    """UE indices by descending priority, ties broken by ascending index."""
    return [record.ue for record in sorted(priorities, key=lambda r: (-r.priority, r.ue))]


def grant_channels(
    priorities: typing.Sequence[PriorityRecord],
    association: typing.Sequence[int],
    channel_count: int,
    eligible: typing.Optional[typing.Sequence[bool]] = None,
    mode: AccessMode = "per-node",
) -> Grants:
    """
    Give the top ``channel_count`` eligible UEs distinct channels in priority order.

    In ``per-node`` mode the rule is applied separately at every node. In ``global`` mode the
    top ``channel_count`` UEs across the whole network are served and channels are not reused.
    """
    if channel_count < 0:
        raise ValueError(f"Channel count must be non-negative, got {channel_count}")

    grants: Grants = [None] * len(priorities)
    candidates = [
        record
        for record in priorities
        if eligible is None or eligible[record.ue]
    ]
    order = priority_order(candidates)

    if mode == "global":
        for channel, ue in enumerate(order[:channel_count]):
            grants[ue] = channel
        return grants

    used: typing.Counter[int] = collections.Counter()
    for ue in order:
        node = int(association[ue])
        if used[node] < channel_count:
            grants[ue] = used[node]
            used[node] += 1
    return grants


@dataclasses.dataclass(frozen=True)
class AccessResult:
    grants: Grants
    success: typing.List[bool]
    collisions: int
    colliding: typing.List[int]


def apply_channel_grants(grants: Grants, association: typing.Sequence[int]) -> AccessResult:
    """
    Resolve simultaneous transmissions per (node, channel).

    A lone transmitter succeeds; two or more on the same node and channel all fail and count
    as one collision.
    """
    transmitters: typing.Dict[typing.Tuple[int, int], typing.List[int]] = collections.defaultdict(
        list
    )
    for ue, channel in enumerate(grants):
        if channel is not None:
            transmitters[(int(association[ue]), channel)].append(ue)

    success = [False] * len(grants)
    collisions = 0
    colliding = []
    for (node, channel), ues in sorted(transmitters.items()):
        if len(ues) == 1:
            success[ues[0]] = True
        else:
            collisions += 1
            colliding.extend(ues)
            logger.debug("Uplink collision", node=node, channel=channel, ues=ues)

    return AccessResult(grants=grants, success=success, collisions=collisions, colliding=colliding)


class AccessScheduler(abc.ABC):
    @abc.abstractmethod
    def grant(
        self,
        frame: int,
        priorities: typing.Sequence[PriorityRecord],
        association: np.ndarray,
        eligible: typing.Sequence[bool],
    ) -> Grants:
        raise NotImplementedError


@dataclasses.dataclass()
class GreedyAccess(AccessScheduler):
    channels: int
    mode: AccessMode = "per-node"

    def grant(
        self,
        frame: int,
        priorities: typing.Sequence[PriorityRecord],
        association: np.ndarray,
        eligible: typing.Sequence[bool],
    ) -> Grants:
        return grant_channels(priorities, association, self.channels, eligible, self.mode)


@dataclasses.dataclass()
class ScriptedAccess(AccessScheduler):
    """Fixed grants per frame, used to replay hand-written scenarios."""

    script: typing.Mapping[int, typing.Mapping[int, int]]

    def grant(
        self,
        frame: int,
        priorities: typing.Sequence[PriorityRecord],
        association: np.ndarray,
        eligible: typing.Sequence[bool],
    ) -> Grants:
        grants: Grants = [None] * len(priorities)
        for ue, channel in self.script.get(frame, {}).items():
            if eligible[ue]:
                grants[ue] = channel
        return grants
