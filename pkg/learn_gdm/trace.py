# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""
Decision traces: the r (path selection), e (block execution) and m (upload) variables of an
episode, together with the instance they were taken on.

Traces are written as JSON lines. The first line describes the instance, every further line is
one event with the columns ``frame, ue, event, node, channel, block, path, quality, cost``.
"""

from __future__ import annotations

import dataclasses
import enum
import pathlib
import typing

import numpy as np
import pydantic
import structlog

from learn_gdm.model import ExecutionPath, Node, QualityCurve, Service, Topology, UEProfile
from learn_gdm.scenario import Scenario

logger = structlog.get_logger(logger_name=__name__)


class Event(str, enum.Enum):
    TRANSMIT = "transmit"
    COLLISION = "collision"
    EXECUTE = "execute"
    SELECT = "select"
    DELIVER = "deliver"


class TraceRecord(pydantic.BaseModel):
    frame: int
    ue: int
    event: Event
    node: typing.Optional[int] = None
    channel: typing.Optional[int] = None
    block: typing.Optional[int] = None
    path: typing.Optional[typing.List[int]] = None
    quality: typing.Optional[float] = None
    cost: typing.Optional[float] = None

    class Config:
        extra = pydantic.Extra.forbid
        use_enum_values = True


class InstanceRecord(pydantic.BaseModel):
    event: typing.Literal["instance"] = "instance"
    horizon: int
    channels: int
    alpha: float
    beta: float
    capacities: typing.List[int]
    exec_costs: typing.List[float]
    transfer_cost: typing.List[typing.List[float]]
    areas: typing.List[int]
    grid_rows: int
    grid_cols: int
    cell_size: float
    quality_tables: typing.List[typing.List[float]]
    ue_services: typing.List[int]
    thresholds: typing.List[float]
    association: typing.List[typing.List[int]]

    class Config:
        extra = pydantic.Extra.forbid


@dataclasses.dataclass(frozen=True, eq=False)
class Instance:
    """A scenario plus the realised association of every UE over the horizon."""

    scenario: Scenario
    association: np.ndarray

    def __post_init__(self) -> None:
        association = np.array(self.association, dtype=np.int64)
        if association.ndim != 2 or association.shape[1] != self.scenario.ue_count:
            raise ValueError(f"Association must be frames x {self.scenario.ue_count} UEs")
        if np.any((association < 0) | (association >= self.scenario.node_count)):
            raise ValueError("Association references an unknown node")
        association.setflags(write=False)
        object.__setattr__(self, "association", association)

    @property
    def horizon(self) -> int:
        return int(self.association.shape[0])

    def poa(self, frame: int, ue: int) -> typing.Optional[int]:
        """The PoA node of a UE in a frame, or None outside the horizon."""
        if not 0 <= frame < self.horizon:
            return None
        return int(self.association[frame, ue])

    def to_record(self) -> InstanceRecord:
        scenario = self.scenario
        topology = scenario.topology
        return InstanceRecord(
            horizon=self.horizon,
            channels=scenario.channels,
            alpha=scenario.alpha,
            beta=scenario.beta,
            capacities=[node.capacity for node in topology.nodes],
            exec_costs=[node.exec_cost for node in topology.nodes],
            transfer_cost=topology.transfer_cost.tolist(),
            areas=list(topology.areas),
            grid_rows=topology.grid_rows,
            grid_cols=topology.grid_cols,
            cell_size=topology.cell_size,
            quality_tables=[list(service.curve.values) for service in scenario.services],
            ue_services=[profile.service for profile in scenario.profiles],
            thresholds=[profile.threshold for profile in scenario.profiles],
            association=self.association.tolist(),
        )

    @classmethod
    def from_record(cls, record: InstanceRecord) -> Instance:
        topology = Topology(
            nodes=tuple(
                Node(id=n, capacity=capacity, exec_cost=cost)
                for n, (capacity, cost) in enumerate(zip(record.capacities, record.exec_costs))
            ),
            transfer_cost=np.array(record.transfer_cost, dtype=np.float64),
            areas=tuple(record.areas),
            grid_rows=record.grid_rows,
            grid_cols=record.grid_cols,
            cell_size=record.cell_size,
        )
        services = tuple(
            Service(id=s, max_blocks=len(table) - 1, curve=QualityCurve.tabulated(table))
            for s, table in enumerate(record.quality_tables)
        )
        profiles = tuple(
            UEProfile(id=ue, service=service, threshold=threshold)
            for ue, (service, threshold) in enumerate(zip(record.ue_services, record.thresholds))
        )
        scenario = Scenario(
            topology=topology,
            services=services,
            profiles=profiles,
            channels=record.channels,
            alpha=record.alpha,
            beta=record.beta,
        )
        return cls(scenario=scenario, association=np.array(record.association, dtype=np.int64))


@dataclasses.dataclass(frozen=True)
class Selection:
    frame: int
    ue: int
    path: ExecutionPath


@dataclasses.dataclass(frozen=True)
class Execution:
    frame: int
    ue: int
    block: int
    node: int


@dataclasses.dataclass(frozen=True)
class Transmission:
    frame: int
    ue: int
    channel: int


@dataclasses.dataclass(frozen=True)
class SessionRecord:
    """One closed inference chain as it happened in the simulator."""

    ue: int
    start_frame: int
    nodes: typing.Tuple[int, ...]
    request_poa: int
    delivery_frame: typing.Optional[int]
    delivery_poa: typing.Optional[int]
    closure: str
    quality: float
    threshold: float
    transfer_cost: float

    @property
    def selected(self) -> bool:
        return self.quality >= self.threshold

    def credited_quality(self, curve: QualityCurve) -> float:
        """
        The reward's gated quality credit summed over the chain.

        Gains count from the first block that reaches the threshold, so the sum telescopes to
        the quality at the last block minus the quality just before the crossing, or 0 when the
        threshold is never reached.
        """
        blocks = len(self.nodes)
        for crossing in range(1, blocks + 1):
            if curve(crossing) >= self.threshold:
                return curve(blocks) - curve(crossing - 1)
        return 0.0


@dataclasses.dataclass()
class DecisionTrace:
    instance: Instance
    selections: typing.List[Selection] = dataclasses.field(default_factory=list)
    executions: typing.List[Execution] = dataclasses.field(default_factory=list)
    transmissions: typing.List[Transmission] = dataclasses.field(default_factory=list)
    sessions: typing.List[SessionRecord] = dataclasses.field(default_factory=list)
    events: typing.List[TraceRecord] = dataclasses.field(default_factory=list)

    def records(self) -> typing.Iterator[pydantic.BaseModel]:
        yield self.instance.to_record()
        if self.events:
            yield from self.events
            return

        for transmission in self.transmissions:
            yield TraceRecord(
                frame=transmission.frame,
                ue=transmission.ue,
                event=Event.TRANSMIT,
                channel=transmission.channel,
            )
        for execution in self.executions:
            yield TraceRecord(
                frame=execution.frame,
                ue=execution.ue,
                event=Event.EXECUTE,
                node=execution.node,
                block=execution.block,
            )
        for selection in self.selections:
            yield TraceRecord(
                frame=selection.frame,
                ue=selection.ue,
                event=Event.SELECT,
                path=list(selection.path.nodes),
            )

    def dump(self, path: pathlib.Path) -> None:
        lines = [record.json(exclude_none=True) for record in self.records()]
        path.write_text("\n".join(lines) + "\n")
        logger.debug("Wrote trace", path=path.as_posix(), records=len(lines))

    @classmethod
    def load(cls, path: pathlib.Path) -> DecisionTrace:
        lines = [line for line in path.read_text().splitlines() if line.strip()]
        if not lines:
            raise ValueError(f"{path} is empty")

        trace = cls(instance=Instance.from_record(InstanceRecord.parse_raw(lines[0])))
        for line in lines[1:]:
            trace.add(TraceRecord.parse_raw(line))
        logger.debug("Read trace", path=path.as_posix(), records=len(lines))
        return trace

    def add(self, record: TraceRecord) -> None:
        """Fold an event record into the decision variables it carries."""
        self.events.append(record)
        if record.event == Event.TRANSMIT and record.channel is not None:
            self.transmissions.append(Transmission(record.frame, record.ue, record.channel))
        elif record.event == Event.EXECUTE and record.node is not None and record.block is not None:
            self.executions.append(Execution(record.frame, record.ue, record.block, record.node))
        elif record.event == Event.SELECT and record.path:
            path = ExecutionPath(tuple(record.path))
            self.selections.append(Selection(record.frame, record.ue, path))

    def session_transfer_cost(self) -> float:
        return sum(session.transfer_cost for session in self.sessions)

    def credited_quality(self) -> float:
        scenario = self.instance.scenario
        return sum(
            session.credited_quality(scenario.service_of(session.ue).curve)
            for session in self.sessions
        )


class TraceRecorder:
    """Collects a trace while an episode runs, one frame at a time."""

    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.association: typing.List[np.ndarray] = []
        self.events: typing.List[TraceRecord] = []
        self.sessions: typing.List[SessionRecord] = []

    def associate(self, frame: int, association: np.ndarray) -> None:
        if frame != len(self.association):
            raise ValueError(f"Association for frame {frame} recorded out of order")
        self.association.append(np.array(association, dtype=np.int64))

    def transmit(self, frame: int, ue: int, node: int, channel: int) -> None:
        self.events.append(
            TraceRecord(frame=frame, ue=ue, event=Event.TRANSMIT, node=node, channel=channel)
        )

    def collide(self, frame: int, ue: int, node: int, channel: int) -> None:
        self.events.append(
            TraceRecord(frame=frame, ue=ue, event=Event.COLLISION, node=node, channel=channel)
        )

    def execute(
        self, frame: int, ue: int, block: int, node: int, quality: float, cost: float
    ) -> None:
        self.events.append(
            TraceRecord(
                frame=frame,
                ue=ue,
                event=Event.EXECUTE,
                node=node,
                block=block,
                quality=quality,
                cost=cost,
            )
        )

    def deliver(self, frame: int, ue: int, node: int, quality: float, cost: float) -> None:
        self.events.append(
            TraceRecord(
                frame=frame, ue=ue, event=Event.DELIVER, node=node, quality=quality, cost=cost
            )
        )

    def close(self, session: SessionRecord) -> None:
        self.sessions.append(session)
        if session.selected:
            self.events.append(
                TraceRecord(
                    frame=session.start_frame,
                    ue=session.ue,
                    event=Event.SELECT,
                    path=list(session.nodes),
                    quality=session.quality,
                    cost=session.transfer_cost,
                )
            )

    def build(self) -> DecisionTrace:
        association = np.array(self.association, dtype=np.int64).reshape(
            len(self.association), self.scenario.ue_count
        )
        trace = DecisionTrace(
            instance=Instance(scenario=self.scenario, association=association),
            sessions=list(self.sessions),
        )
        for record in self.events:
            trace.add(record)
        return trace
