# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import itertools

import pytest

import learn_gdm.access
from learn_gdm.access import PRIORITY_FLOOR, GreedyAccess, ScriptedAccess


def test_closer_ue_has_higher_priority() -> None:
    low, high = learn_gdm.access.compute_priorities([0.3, 0.4], [0.5, 0.5])
    assert high.priority > low.priority
    assert high.priority == pytest.approx(10.0)
    assert low.priority == pytest.approx(5.0)


def test_priorities_clamp_above_threshold() -> None:
    records = learn_gdm.access.compute_priorities([0.3, 0.4, 0.25], [0.25, 0.25, 0.25])
    assert [r.priority for r in records] == [PRIORITY_FLOOR] * 3


@pytest.mark.parametrize("current", [0.0, 0.1, 0.3, 0.5, 0.7, 1.0])
@pytest.mark.parametrize("threshold", [0.0, 0.25, 0.5, 1.0])
def test_priority_never_below_floor(current: float, threshold: float) -> None:
    (record,) = learn_gdm.access.compute_priorities([current], [threshold])
    assert record.priority >= PRIORITY_FLOOR


def test_priority_order_ties_by_index() -> None:
    records = learn_gdm.access.compute_priorities([0.0, 0.4, 0.0], [0.5, 0.5, 0.5])
    assert learn_gdm.access.priority_order(records) == [1, 0, 2]


def test_priority_order_scale_invariant() -> None:
    records = learn_gdm.access.compute_priorities([0.1, 0.4, 0.2, 0.3], [0.5, 0.5, 0.9, 0.6])
    scaled = [
        learn_gdm.access.PriorityRecord(r.ue, r.priority * 1000.0) for r in records
    ]
    assert learn_gdm.access.priority_order(records) == learn_gdm.access.priority_order(scaled)


def test_grants_top_channels_per_node() -> None:
    records = learn_gdm.access.compute_priorities([0.1, 0.4, 0.2], [0.5, 0.5, 0.5])
    grants = learn_gdm.access.grant_channels(records, [0, 0, 0], channel_count=2)
    assert grants == [None, 0, 1]


def test_no_channels_no_grants() -> None:
    records = learn_gdm.access.compute_priorities([0.1, 0.2], [0.5, 0.5])
    assert learn_gdm.access.grant_channels(records, [0, 1], channel_count=0) == [None, None]


def test_one_ue_per_node_all_granted() -> None:
    records = learn_gdm.access.compute_priorities([0.1, 0.2, 0.3], [0.5, 0.5, 0.5])
    grants = learn_gdm.access.grant_channels(records, [0, 1, 2], channel_count=1)
    assert grants == [0, 0, 0]


def test_ineligible_ues_skipped() -> None:
    records = learn_gdm.access.compute_priorities([0.1, 0.4, 0.2], [0.5, 0.5, 0.5])
    grants = learn_gdm.access.grant_channels(
        records, [0, 0, 0], channel_count=1, eligible=[True, False, True]
    )
    assert grants == [None, None, 0]


def test_global_mode_does_not_reuse_channels() -> None:
    records = learn_gdm.access.compute_priorities([0.1, 0.4, 0.2], [0.5, 0.5, 0.5])
    grants = learn_gdm.access.grant_channels(records, [0, 1, 2], channel_count=2, mode="global")
    assert grants == [None, 0, 1]


def test_negative_channels_rejected() -> None:
    with pytest.raises(ValueError):
        learn_gdm.access.grant_channels([], [], channel_count=-1)


def test_shared_channel_collides() -> None:
    result = learn_gdm.access.apply_channel_grants([0, 0], [0, 0])
    assert result.success == [False, False]
    assert result.collisions == 1
    assert result.colliding == [0, 1]


def test_distinct_channels_succeed() -> None:
    result = learn_gdm.access.apply_channel_grants([0, 1, None], [0, 0, 0])
    assert result.success == [True, True, False]
    assert result.collisions == 0


@pytest.mark.parametrize(
    "grants,association",
    list(
        itertools.product(
            itertools.product([None, 0], repeat=2),
            itertools.product([0, 1], repeat=2),
        )
    ),
)
def test_collisions_only_on_shared_node(grants, association) -> None:
    result = learn_gdm.access.apply_channel_grants(list(grants), list(association))
    both = grants[0] is not None and grants[1] is not None
    clash = both and association[0] == association[1]
    assert result.collisions == int(clash)
    for ue in range(2):
        assert result.success[ue] == (grants[ue] is not None and not clash)


@pytest.mark.parametrize("channels", [0, 1, 2, 3])
def test_greedy_access_never_collides(channels: int) -> None:
    records = learn_gdm.access.compute_priorities(
        [0.0, 0.1, 0.2, 0.3, 0.4, 0.0], [0.5, 0.5, 0.5, 0.5, 0.5, 0.9]
    )
    association = [0, 0, 1, 1, 0, 1]
    grants = GreedyAccess(channels).grant(0, records, association, [True] * 6)
    assert learn_gdm.access.apply_channel_grants(grants, association).collisions == 0
    assert sum(g is not None for g in grants) == min(channels, 3) * 2


def test_scripted_access() -> None:
    access = ScriptedAccess({0: {0: 0, 1: 0}})
    records = learn_gdm.access.compute_priorities([0.0, 0.0, 0.0], [0.5, 0.5, 0.5])
    assert access.grant(0, records, [0, 0, 0], [True, False, True]) == [0, None, None]
    assert access.grant(1, records, [0, 0, 0], [True, True, True]) == [None, None, None]
