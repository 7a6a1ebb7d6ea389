# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""Building the static part of a simulation: topology, services and UE profiles."""

from __future__ import annotations

import dataclasses
import typing

import numpy as np
import structlog

from learn_gdm.config import SystemConfig
from learn_gdm.model import (
    Node,
    QualityCurve,
    Service,
    Topology,
    UEProfile,
    load_quality_tables,
)

logger = structlog.get_logger(logger_name=__name__)

# Saturation rate of every service curve when no rates or table are configured.
DEFAULT_RATE = 1.0

JointAction = typing.List[typing.Optional[int]]


@dataclasses.dataclass(frozen=True)
class Scenario:
    topology: Topology
    services: typing.Tuple[Service, ...]
    profiles: typing.Tuple[UEProfile, ...]
    channels: int
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if len({service.max_blocks for service in self.services}) != 1:
            raise ValueError("All services must share the same maximum block count")
        if any(not 0 <= p.service < len(self.services) for p in self.profiles):
            raise ValueError("UE profile references an unknown service")

    @property
    def node_count(self) -> int:
        return self.topology.node_count

    @property
    def ue_count(self) -> int:
        return len(self.profiles)

    @property
    def max_blocks(self) -> int:
        return self.services[0].max_blocks

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([profile.threshold for profile in self.profiles], dtype=np.float64)

    def service_of(self, ue: int) -> Service:
        return self.services[self.profiles[ue].service]

    def with_channels(self, channels: int) -> Scenario:
        return dataclasses.replace(self, channels=channels)


def _hops(cols: int, a: int, b: int) -> int:
    return abs(a // cols - b // cols) + abs(a % cols - b % cols)


def build_topology(system: SystemConfig, rng: np.random.Generator) -> Topology:
    """
    Nodes spread evenly over the grid cells, each area covered by its nearest node.

    Transfer cost between two nodes is the hop distance between their home cells, scaled by
    ``transfer_scale``.
    """
    cells = system.grid_rows * system.grid_cols
    count = system.node_count
    home = [(node * cells) // count for node in range(count)]

    areas = tuple(
        min(range(count), key=lambda node: (_hops(system.grid_cols, cell, home[node]), node))
        for cell in range(cells)
    )
    transfer_cost = np.array(
        [[_hops(system.grid_cols, a, b) * system.transfer_scale for b in home] for a in home],
        dtype=np.float64,
    )

    low, high = system.capacity_range
    capacities = rng.integers(low, high, size=count, endpoint=True)
    low_cost, high_cost = system.exec_cost_range
    exec_costs = rng.uniform(low_cost, high_cost, size=count)

    return Topology(
        nodes=tuple(
            Node(id=node, capacity=int(capacities[node]), exec_cost=float(exec_costs[node]))
            for node in range(count)
        ),
        transfer_cost=transfer_cost,
        areas=areas,
        grid_rows=system.grid_rows,
        grid_cols=system.grid_cols,
        cell_size=system.cell_size,
    )


def build_services(system: SystemConfig) -> typing.Tuple[Service, ...]:
    if system.quality_table is not None:
        curves = load_quality_tables(system.quality_table)
        if len(curves) < system.services:
            raise ValueError(
                f"{system.quality_table} holds {len(curves)} curves, {system.services} needed"
            )
        curves = curves[: system.services]
    else:
        rates = system.quality_rates or [DEFAULT_RATE] * system.services
        curves = [QualityCurve.saturating(rate, system.max_blocks) for rate in rates]

    return tuple(
        Service(id=service, max_blocks=system.max_blocks, curve=curve)
        for service, curve in enumerate(curves)
    )


def build_profiles(
    system: SystemConfig,
    rng: np.random.Generator,
) -> typing.Tuple[UEProfile, ...]:
    low, high = system.threshold_range
    thresholds = rng.uniform(low, high, size=system.ues)
    services = rng.integers(0, system.services, size=system.ues)
    return tuple(
        UEProfile(id=ue, service=int(services[ue]), threshold=float(thresholds[ue]))
        for ue in range(system.ues)
    )


def build_scenario(system: SystemConfig, rng: np.random.Generator) -> Scenario:
    scenario = Scenario(
        topology=build_topology(system, rng),
        services=build_services(system),
        profiles=build_profiles(system, rng),
        channels=system.channels,
        alpha=system.alpha,
        beta=system.beta,
    )
    logger.debug(
        "Built scenario",
        nodes=scenario.node_count,
        ues=scenario.ue_count,
        channels=scenario.channels,
        capacities=scenario.topology.capacities.tolist(),
    )
    return scenario


@dataclasses.dataclass(frozen=True)
class ScriptedRun:
    scenario: Scenario
    association: np.ndarray
    grants: typing.Mapping[int, typing.Mapping[int, int]]
    actions: typing.Sequence[JointAction]

    @property
    def horizon(self) -> int:
        return len(self.actions)


def two_node_walkthrough() -> ScriptedRun:
    """
    Two nodes and four UEs; u0 and u1 request service 0, u2 service 1, u3 service 2.

    u0 and u1 collide on their first upload and succeed on the next frame, then run service 0
    entirely on node 0. u2 starts on node 0, moves to node 1's area after two blocks and runs
    its last two blocks on node 1, where it receives the result. u3 stays on node 1 throughout.
    """
    services = tuple(
        Service(id=s, max_blocks=4, curve=QualityCurve.saturating(1.0, 4)) for s in range(3)
    )
    topology = Topology(
        nodes=(Node(0, capacity=4, exec_cost=1.0), Node(1, capacity=4, exec_cost=1.0)),
        transfer_cost=np.array([[0.0, 1.0], [1.0, 0.0]]),
        areas=(0, 1),
        grid_rows=1,
        grid_cols=2,
        cell_size=100.0,
    )
    profiles = (
        UEProfile(0, service=0, threshold=0.1),
        UEProfile(1, service=0, threshold=0.1),
        UEProfile(2, service=1, threshold=0.1),
        UEProfile(3, service=2, threshold=0.1),
    )
    scenario = Scenario(
        topology=topology,
        services=services,
        profiles=profiles,
        channels=2,
        alpha=0.1,
        beta=0.1,
    )

    before, after = [0, 0, 0, 1], [0, 0, 1, 1]
    association = np.array([before] * 3 + [after] * 5, dtype=np.int64)
    grants = {
        0: {0: 0, 1: 0, 2: 1, 3: 0},
        1: {0: 0, 1: 1},
    }
    actions: typing.List[JointAction] = [
        [None, None, None, None],
        [None, None, 0, 1],
        [0, 0, 0, 1],
        [0, 0, 1, 1],
        [0, 0, 1, 1],
        [0, 0, None, None],
        [None, None, None, None],
        [None, None, None, None],
    ]
    return ScriptedRun(scenario=scenario, association=association, grants=grants, actions=actions)
