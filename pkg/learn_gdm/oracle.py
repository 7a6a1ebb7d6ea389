# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""
The offline problem: constraint checking, objective evaluation and an exact solver.

The solver knows the whole association trajectory up front. It searches frame by frame over
per-UE decisions (idle, start or continue a chain on a node, stop a chain) with branch and bound.
"""

from __future__ import annotations

import collections
import dataclasses
import math
import typing

import numpy as np
import structlog

from learn_gdm.model import ExecutionPath, Node, QualityCurve, Service, Topology, UEProfile
from learn_gdm.model import path_transmission_cost
from learn_gdm.scenario import Scenario
from learn_gdm.trace import DecisionTrace, Execution, Instance, Selection, Transmission

logger = structlog.get_logger(logger_name=__name__)

PRUNE_MARGIN = 1e-9


class MalformedTrace(ValueError):
    pass


class InstanceTooLarge(ValueError):
    def __init__(self, message: str, estimate: float) -> None:
        super().__init__(message)
        self.estimate = estimate


@dataclasses.dataclass(frozen=True)
class Violation:
    constraint: str
    frame: int
    entity: str
    detail: str


@dataclasses.dataclass(frozen=True)
class ViolationReport:
    violations: typing.Tuple[Violation, ...] = ()

    @property
    def feasible(self) -> bool:
        return not self.violations

    def by_constraint(self) -> typing.Dict[str, int]:
        return dict(collections.Counter(v.constraint for v in self.violations))


def _check_structure(trace: DecisionTrace) -> None:
    scenario = trace.instance.scenario
    horizon = trace.instance.horizon
    ues, nodes, blocks = scenario.ue_count, scenario.node_count, scenario.max_blocks

    def frame_ue(kind: str, frame: int, ue: int) -> None:
        if not 0 <= frame < horizon:
            raise MalformedTrace(f"{kind} at frame {frame} outside 0..{horizon - 1}")
        if not 0 <= ue < ues:
            raise MalformedTrace(f"{kind} for unknown UE {ue}")

    for selection in trace.selections:
        frame_ue("Selection", selection.frame, selection.ue)
        try:
            selection.path.validate(nodes, blocks)
        except ValueError as e:
            raise MalformedTrace(str(e)) from e

    seen = set()
    for execution in trace.executions:
        frame_ue("Execution", execution.frame, execution.ue)
        if not 1 <= execution.block <= blocks:
            raise MalformedTrace(f"Execution of block {execution.block} outside 1..{blocks}")
        if not 0 <= execution.node < nodes:
            raise MalformedTrace(f"Execution on unknown node {execution.node}")
        if execution in seen:
            raise MalformedTrace(f"Execution {execution} recorded twice")
        seen.add(execution)

    for transmission in trace.transmissions:
        frame_ue("Transmission", transmission.frame, transmission.ue)
        if not 0 <= transmission.channel < scenario.channels:
            raise MalformedTrace(f"Transmission on unknown channel {transmission.channel}")


def check_constraints(trace: DecisionTrace) -> ViolationReport:
    """
    Evaluate the structural constraints of a trace and report every violation.

    Indices that fall outside the horizon read as zero. Quality and transfer cost are
    definitions, not constraints; ``objective_value`` evaluates them.
    """
    _check_structure(trace)

    instance = trace.instance
    scenario = instance.scenario
    violations: typing.List[Violation] = []

    executed = set((e.frame, e.ue, e.block, e.node) for e in trace.executions)
    transmitted = set((m.frame, m.ue) for m in trace.transmissions)

    for s in trace.selections:
        for step, node in enumerate(s.path.nodes, start=1):
            frame = s.frame + step - 1
            if (frame, s.ue, step, node) not in executed:
                violations.append(
                    Violation(
                        "path-executed",
                        s.frame,
                        f"ue {s.ue}",
                        f"block {step} not run on node {node}",
                    )
                )

    per_selection = collections.Counter((s.ue, s.frame) for s in trace.selections)
    for (ue, frame), count in sorted(per_selection.items()):
        if count > 1:
            violations.append(Violation("one-path", frame, f"ue {ue}", f"{count} paths selected"))

    load = collections.Counter((e.frame, e.node) for e in trace.executions)
    for (frame, node), count in sorted(load.items()):
        capacity = scenario.topology.nodes[node].capacity
        if count > capacity:
            violations.append(
                Violation(
                    "node-capacity",
                    frame,
                    f"node {node}",
                    f"{count} blocks over capacity {capacity}",
                )
            )

    per_ue = collections.Counter((m.ue, m.frame) for m in trace.transmissions)
    for (ue, frame), count in sorted(per_ue.items()):
        if count > 1:
            violations.append(Violation("one-channel", frame, f"ue {ue}", f"{count} channels used"))

    per_channel: typing.Dict[typing.Tuple[int, int, int], typing.List[int]] = (
        collections.defaultdict(list)
    )
    for m in trace.transmissions:
        node = instance.poa(m.frame, m.ue)
        per_channel[(m.frame, int(node), m.channel)].append(m.ue)
    for (frame, node, channel), ues in sorted(per_channel.items()):
        if len(ues) > 1:
            violations.append(
                Violation(
                    "channel-collision", frame, f"node {node}", f"channel {channel} shared by {ues}"
                )
            )

    for s in trace.selections:
        if (s.frame - 1, s.ue) not in transmitted:
            violations.append(
                Violation("upload-first", s.frame, f"ue {s.ue}", "no upload in the previous frame")
            )

    for s in trace.selections:
        reached = scenario.service_of(s.ue).curve(len(s.path))
        threshold = scenario.profiles[s.ue].threshold
        if reached < threshold:
            violations.append(
                Violation(
                    "quality-threshold",
                    s.frame,
                    f"ue {s.ue}",
                    f"quality {reached} below {threshold}",
                )
            )

    return ViolationReport(tuple(violations))


@dataclasses.dataclass(frozen=True)
class Objective:
    quality: float
    execution: float
    transfer: float
    alpha: float
    beta: float

    @property
    def total(self) -> float:
        return self.quality - self.alpha * self.execution - self.beta * self.transfer


def objective_value(trace: DecisionTrace) -> Objective:
    instance = trace.instance
    scenario = instance.scenario
    topology = scenario.topology

    quality = 0.0
    transfer = 0.0
    for s in trace.selections:
        quality += scenario.service_of(s.ue).curve(len(s.path))
        transfer += path_transmission_cost(
            s.path,
            instance.poa(s.frame - 1, s.ue),
            instance.poa(s.frame + len(s.path), s.ue),
            topology,
        )

    execution = sum(topology.nodes[e.node].exec_cost for e in trace.executions)
    return Objective(
        quality=quality,
        execution=float(execution),
        transfer=transfer,
        alpha=scenario.alpha,
        beta=scenario.beta,
    )


@dataclasses.dataclass(frozen=True)
class SearchLimits:
    max_nodes: int = 4
    max_ues: int = 4
    max_horizon: int = 8
    max_blocks: int = 4
    search_space: float = 1e7


def search_space(instance: Instance) -> float:
    """One idle-or-node decision per UE per frame: (nodes + 1) ** (ues · horizon)."""
    scenario = instance.scenario
    return float(scenario.node_count + 1) ** (scenario.ue_count * instance.horizon)


@dataclasses.dataclass(frozen=True)
class Chain:
    ue: int
    start: int
    nodes: typing.Tuple[int, ...]


@dataclasses.dataclass(frozen=True)
class Solution:
    trace: DecisionTrace
    objective: Objective
    value: float
    leaves: int


class _Search:
    def __init__(self, instance: Instance, prune: bool) -> None:
        scenario = instance.scenario
        self.instance = instance
        self.prune = prune
        self.horizon = instance.horizon
        self.ues = scenario.ue_count
        self.nodes = scenario.node_count
        self.blocks = scenario.max_blocks
        self.channels = scenario.channels
        self.alpha = scenario.alpha
        self.beta = scenario.beta
        self.curves = [scenario.service_of(ue).curve for ue in range(self.ues)]
        self.thresholds = [profile.threshold for profile in scenario.profiles]
        self.best_reachable = [curve(self.blocks) for curve in self.curves]
        self.capacities = [node.capacity for node in scenario.topology.nodes]
        self.exec_costs = [node.exec_cost for node in scenario.topology.nodes]
        self.transfer = scenario.topology.transfer_cost

        self.open: typing.List[typing.Optional[typing.List[int]]] = [None] * self.ues
        self.starts = [0] * self.ues
        self.last_exec = [-2] * self.ues
        self.load = np.zeros((self.horizon, self.nodes), dtype=np.int64)
        self.uploads: typing.Counter[typing.Tuple[int, int]] = collections.Counter()
        self.closed: typing.List[Chain] = []
        self.quality = 0.0
        self.execution = 0.0
        self.transfer_total = 0.0

        self.best = -math.inf
        self.best_chains: typing.List[Chain] = []
        self.leaves = 0

    def value(self) -> float:
        return self.quality - self.alpha * self.execution - self.beta * self.transfer_total

    def bound(self, frame: int, ue: int) -> float:
        total = self.value()
        for j in range(self.ues):
            remaining = self.horizon - frame - (1 if j < ue else 0)
            if self.open[j] is not None:
                sessions = 1 + remaining // 2
            else:
                sessions = (remaining + 1) // 2
            total += sessions * self.best_reachable[j]
        return total

    def leaf(self) -> None:
        self.leaves += 1
        quality = self.quality
        for ue, chain in enumerate(self.open):
            if chain is None:
                continue
            reached = self.curves[ue](len(chain))
            if reached < self.thresholds[ue]:
                return
            quality += reached

        value = quality - self.alpha * self.execution - self.beta * self.transfer_total
        if value > self.best:
            self.best = value
            self.best_chains = list(self.closed) + [
                Chain(ue, self.starts[ue], tuple(chain))
                for ue, chain in enumerate(self.open)
                if chain is not None
            ]

    def _run(self, frame: int, ue: int, node: int) -> None:
        chain = self.open[ue]
        assert chain is not None
        self.load[frame, node] += 1
        self.execution += self.exec_costs[node]
        self.transfer_total += float(self.transfer[chain[-1], node])
        chain.append(node)
        self.last_exec[ue], previous = frame, self.last_exec[ue]

        self.visit(frame, ue + 1)

        self.last_exec[ue] = previous
        chain.pop()
        self.transfer_total -= float(self.transfer[chain[-1], node])
        self.execution -= self.exec_costs[node]
        self.load[frame, node] -= 1

    def _start(self, frame: int, ue: int, node: int) -> None:
        upload_poa = int(self.instance.association[frame - 1, ue])
        self.uploads[(frame - 1, upload_poa)] += 1
        self.load[frame, node] += 1
        self.execution += self.exec_costs[node]
        head = float(self.transfer[upload_poa, node])
        self.transfer_total += head
        self.open[ue] = [node]
        self.starts[ue] = frame
        self.last_exec[ue], previous = frame, self.last_exec[ue]

        self.visit(frame, ue + 1)

        self.last_exec[ue] = previous
        self.open[ue] = None
        self.transfer_total -= head
        self.execution -= self.exec_costs[node]
        self.load[frame, node] -= 1
        self.uploads[(frame - 1, upload_poa)] -= 1

    def _close_then(self, frame: int, ue: int, then: typing.Callable[[], None]) -> None:
        chain = self.open[ue]
        assert chain is not None
        tail = float(self.transfer[chain[-1], self.instance.association[frame, ue]])
        reached = self.curves[ue](len(chain))
        self.quality += reached
        self.transfer_total += tail
        self.closed.append(Chain(ue, self.starts[ue], tuple(chain)))
        self.open[ue] = None

        then()

        self.open[ue] = chain
        self.closed.pop()
        self.transfer_total -= tail
        self.quality -= reached

    def _idle(self, frame: int, ue: int, allow_start: bool) -> None:
        self.visit(frame, ue + 1)
        if not allow_start:
            return
        if frame < 1 or self.last_exec[ue] == frame - 1:
            return
        if self.best_reachable[ue] < self.thresholds[ue]:
            return
        upload_poa = int(self.instance.association[frame - 1, ue])
        if self.uploads[(frame - 1, upload_poa)] >= self.channels:
            return
        for node in range(self.nodes):
            if self.load[frame, node] < self.capacities[node]:
                self._start(frame, ue, node)

    def visit(self, frame: int, ue: int) -> None:
        if frame == self.horizon:
            self.leaf()
            return
        if ue == self.ues:
            self.visit(frame + 1, 0)
            return
        if self.prune and self.bound(frame, ue) < self.best - PRUNE_MARGIN:
            return

        chain = self.open[ue]
        if chain is None:
            self._idle(frame, ue, allow_start=True)
            return

        if len(chain) == self.blocks:
            if self.curves[ue](len(chain)) >= self.thresholds[ue]:
                self._close_then(frame, ue, lambda: self._idle(frame, ue, allow_start=False))
            return

        if self.curves[ue](len(chain)) >= self.thresholds[ue]:
            self._close_then(frame, ue, lambda: self._idle(frame, ue, allow_start=False))
        for node in range(self.nodes):
            if self.load[frame, node] < self.capacities[node]:
                self._run(frame, ue, node)


def chains_to_trace(instance: Instance, chains: typing.Iterable[Chain]) -> DecisionTrace:
    """Map chains to r, e and m variables; uploads take channels per base station in UE order."""
    trace = DecisionTrace(instance=instance)
    ordered = sorted(chains, key=lambda c: (c.start, c.ue))
    channel_use: typing.Counter[typing.Tuple[int, int]] = collections.Counter()
    for chain in ordered:
        upload_frame = chain.start - 1
        poa = int(instance.association[upload_frame, chain.ue])
        trace.transmissions.append(
            Transmission(upload_frame, chain.ue, channel_use[(upload_frame, poa)])
        )
        channel_use[(upload_frame, poa)] += 1
        trace.selections.append(Selection(chain.start, chain.ue, ExecutionPath(chain.nodes)))
        for step, node in enumerate(chain.nodes, start=1):
            trace.executions.append(Execution(chain.start + step - 1, chain.ue, step, node))
    return trace


def solve_exact(
    instance: Instance,
    limits: SearchLimits = SearchLimits(),
    prune: bool = True,
) -> Solution:
    scenario = instance.scenario
    estimate = search_space(instance)
    oversized = {
        "nodes": (scenario.node_count, limits.max_nodes),
        "UEs": (scenario.ue_count, limits.max_ues),
        "frames": (instance.horizon, limits.max_horizon),
        "blocks": (scenario.max_blocks, limits.max_blocks),
    }
    for name, (size, cap) in oversized.items():
        if size > cap:
            raise InstanceTooLarge(f"Instance has {size} {name}, the cap is {cap}", estimate)
    if estimate > limits.search_space:
        raise InstanceTooLarge(
            f"Search space of {estimate:.3g} decisions exceeds {limits.search_space:.3g}",
            estimate,
        )

    search = _Search(instance, prune=prune)
    search.visit(0, 0)

    trace = chains_to_trace(instance, search.best_chains)
    objective = objective_value(trace)
    logger.debug(
        "Solved instance",
        value=search.best,
        leaves=search.leaves,
        chains=len(search.best_chains),
        pruned=prune,
    )
    return Solution(trace=trace, objective=objective, value=search.best, leaves=search.leaves)


@dataclasses.dataclass(frozen=True)
class InstanceShape:
    nodes: int = 2
    ues: int = 3
    channels: int = 1
    max_blocks: int = 2
    horizon: int = 4
    move_probability: float = 0.3


def random_instance(rng: np.random.Generator, shape: InstanceShape = InstanceShape()) -> Instance:
    """A small instance with a random-walk association, sized for the exact solver."""
    count = shape.nodes
    nodes = tuple(
        Node(
            id=n,
            capacity=int(rng.integers(1, 2, endpoint=True)),
            exec_cost=float(rng.uniform(1.0, 4.0)),
        )
        for n in range(count)
    )
    hops = rng.uniform(0.0, 1.0, size=(count, count))
    transfer_cost = np.triu(hops, 1) + np.triu(hops, 1).T
    topology = Topology(
        nodes=nodes,
        transfer_cost=transfer_cost,
        areas=tuple(range(count)),
        grid_rows=1,
        grid_cols=count,
        cell_size=100.0,
    )

    service_count = int(rng.integers(1, shape.ues, endpoint=True))
    services = tuple(
        Service(
            id=s,
            max_blocks=shape.max_blocks,
            curve=QualityCurve.saturating(float(rng.uniform(0.5, 1.5)), shape.max_blocks),
        )
        for s in range(service_count)
    )
    profiles = tuple(
        UEProfile(
            id=ue,
            service=int(rng.integers(0, service_count)),
            threshold=float(rng.uniform(0.1, 0.5)),
        )
        for ue in range(shape.ues)
    )
    scenario = Scenario(
        topology=topology,
        services=services,
        profiles=profiles,
        channels=shape.channels,
        alpha=0.1,
        beta=0.1,
    )

    association = np.zeros((shape.horizon, shape.ues), dtype=np.int64)
    association[0] = rng.integers(0, count, size=shape.ues)
    for frame in range(1, shape.horizon):
        moves = rng.uniform(size=shape.ues) < shape.move_probability
        association[frame] = np.where(
            moves, rng.integers(0, count, size=shape.ues), association[frame - 1]
        )

    return Instance(scenario=scenario, association=association)
