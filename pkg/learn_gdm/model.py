# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""
Static entities of the placement problem and the pure functions defined over them.

Nodes, UEs, services and channels use 0-based indices. Block numbers are 1-based counts, so
the k-th block of a chain is executed by ``path.nodes[k - 1]``.
"""

from __future__ import annotations

import dataclasses
import enum
import itertools
import pathlib
import typing

import numpy as np
import structlog

logger = structlog.get_logger(logger_name=__name__)

# Largest path count representable by the int64 counters used for path sets.
PATH_COUNT_LIMIT = int(np.iinfo(np.int64).max)


class PathCountOverflow(OverflowError):
    pass


class QualityRangeError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class Node:
    id: int
    capacity: int
    exec_cost: float

    def __post_init__(self) -> None:
        if self.capacity < 0:
            raise ValueError(f"Node {self.id} has negative capacity {self.capacity}")
        if self.exec_cost < 0:
            raise ValueError(f"Node {self.id} has negative execution cost {self.exec_cost}")


@dataclasses.dataclass(frozen=True, eq=False)
class Topology:
    nodes: typing.Tuple[Node, ...]
    transfer_cost: np.ndarray
    areas: typing.Tuple[int, ...]
    grid_rows: int
    grid_cols: int
    cell_size: float

    def __post_init__(self) -> None:
        count = len(self.nodes)
        cost = np.array(self.transfer_cost, dtype=np.float64)
        if cost.shape != (count, count):
            raise ValueError(f"Transfer cost matrix must be {count}x{count}, got {cost.shape}")
        if np.any(cost < 0):
            raise ValueError("Transfer costs must be non-negative")
        if np.any(np.diag(cost) != 0):
            raise ValueError("Transfer cost from a node to itself must be zero")
        if len(self.areas) != self.grid_rows * self.grid_cols:
            raise ValueError("Every grid cell must be mapped to exactly one covering node")
        if any(not 0 <= node < count for node in self.areas):
            raise ValueError("Service area mapped to an unknown node")
        cost.setflags(write=False)
        object.__setattr__(self, "transfer_cost", cost)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def extent(self) -> typing.Tuple[float, float]:
        return self.grid_cols * self.cell_size, self.grid_rows * self.cell_size

    @property
    def capacities(self) -> np.ndarray:
        return np.array([node.capacity for node in self.nodes], dtype=np.int64)

    @property
    def exec_costs(self) -> np.ndarray:
        return np.array([node.exec_cost for node in self.nodes], dtype=np.float64)

    def area_at(self, x: float, y: float) -> int:
        col = min(max(int(x // self.cell_size), 0), self.grid_cols - 1)
        row = min(max(int(y // self.cell_size), 0), self.grid_rows - 1)
        return row * self.grid_cols + col

    def node_at(self, x: float, y: float) -> int:
        """The node covering the service area that contains a position."""
        return self.areas[self.area_at(x, y)]


class CurveMode(str, enum.Enum):
    SATURATING = "parametric-saturating"
    TABULATED = "tabulated"


@dataclasses.dataclass(frozen=True)
class QualityCurve:
    """Output quality after k executed blocks, stored as a table indexed 0..blocks."""

    mode: CurveMode
    values: typing.Tuple[float, ...]
    rate: typing.Optional[float] = None

    def __post_init__(self) -> None:
        if len(self.values) < 2:
            raise ValueError("A quality curve needs at least values for zero and one block")
        if self.values[0] != 0.0:
            raise ValueError(f"Quality at zero blocks must be 0, got {self.values[0]}")
        if any(not 0.0 <= value <= 1.0 for value in self.values):
            raise ValueError(f"Quality values must lie in [0, 1]: {self.values}")
        if any(b < a for a, b in zip(self.values, self.values[1:])):
            raise ValueError(f"Quality curve must be non-decreasing: {self.values}")

    @classmethod
    def saturating(cls, rate: float, max_blocks: int) -> QualityCurve:
        """1 − exp(−rate · k) normalised so zero blocks give 0 and all blocks give 1."""
        if rate <= 0:
            raise ValueError(f"Saturation rate must be positive, got {rate}")
        steps = np.arange(max_blocks + 1, dtype=np.float64)
        values = -np.expm1(-rate * steps) / -np.expm1(-rate * max_blocks)
        values[-1] = 1.0
        return cls(mode=CurveMode.SATURATING, values=tuple(float(v) for v in values), rate=rate)

    @classmethod
    def tabulated(cls, values: typing.Iterable[float]) -> QualityCurve:
        return cls(mode=CurveMode.TABULATED, values=tuple(float(v) for v in values))

    @property
    def max_blocks(self) -> int:
        return len(self.values) - 1

    def __call__(self, blocks: int) -> float:
        if not 0 <= blocks <= self.max_blocks:
            raise QualityRangeError(f"Block count {blocks} outside 0..{self.max_blocks}")
        return self.values[blocks]


def load_quality_tables(path: pathlib.Path) -> typing.List[QualityCurve]:
    """Read one tabulated curve per line: blocks + 1 whitespace-separated reals."""
    logger.debug("Loading quality tables", path=path.as_posix())
    table = np.loadtxt(path, dtype=np.float64, ndmin=2)
    return [QualityCurve.tabulated(row) for row in table]


@dataclasses.dataclass(frozen=True)
class Service:
    id: int
    max_blocks: int
    curve: QualityCurve

    def __post_init__(self) -> None:
        if self.max_blocks < 1:
            raise ValueError(f"Service {self.id} needs at least one block")
        if self.curve.max_blocks != self.max_blocks:
            raise ValueError(
                f"Service {self.id} has {self.max_blocks} blocks but its curve covers "
                f"{self.curve.max_blocks}"
            )


@dataclasses.dataclass(frozen=True)
class UEProfile:
    id: int
    service: int
    threshold: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"UE {self.id} threshold {self.threshold} outside [0, 1]")


@dataclasses.dataclass(frozen=True)
class ExecutionPath:
    nodes: typing.Tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.nodes) < 1:
            raise ValueError("An execution path visits at least one node")
        object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))

    @classmethod
    def of(cls, *nodes: int) -> ExecutionPath:
        return cls(tuple(nodes))

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> typing.Iterator[int]:
        return iter(self.nodes)

    @property
    def head(self) -> int:
        return self.nodes[0]

    @property
    def tail(self) -> int:
        return self.nodes[-1]

    def validate(self, node_count: int, max_blocks: int) -> None:
        if len(self.nodes) > max_blocks:
            raise ValueError(f"Path {self.nodes} is longer than {max_blocks} blocks")
        if any(not 0 <= node < node_count for node in self.nodes):
            raise ValueError(f"Path {self.nodes} references a node outside 0..{node_count - 1}")


def path_indicator(path: ExecutionPath, step: int, node: int) -> int:
    """1 if the path executes its ``step``-th block (1-based) on ``node``."""
    if not 1 <= step <= len(path):
        raise IndexError(f"Step {step} outside 1..{len(path)}")
    return int(path.nodes[step - 1] == node)


def enumerate_paths(
    node_count: int,
    length: int,
    cap: typing.Optional[int] = None,
) -> typing.List[ExecutionPath]:
    """
    All k-permutations of the nodes with repetition, in lexicographic order.

    With ``cap`` only the first ``cap`` paths of that order are returned.
    """
    if node_count < 1 or length < 1:
        raise ValueError("Path enumeration needs at least one node and one step")

    count = node_count**length
    if cap is None and count > PATH_COUNT_LIMIT:
        raise PathCountOverflow(
            f"{node_count}^{length} paths overflow the path counter, pass a cap"
        )

    combinations = itertools.product(range(node_count), repeat=length)
    if cap is not None:
        combinations = itertools.islice(combinations, cap)

    return [ExecutionPath(nodes) for nodes in combinations]


def quality(service: Service, blocks_done: int) -> float:
    return service.curve(blocks_done)


def path_transmission_cost(
    path: ExecutionPath,
    poa_at_request: typing.Optional[int],
    poa_at_delivery: typing.Optional[int],
    topology: Topology,
) -> float:
    """
    Latent transfers between consecutive hops plus the head and tail PoA terms.

    A missing PoA (a request before the horizon or a delivery after it) contributes nothing.
    """
    cost = topology.transfer_cost
    total = 0.0
    for here, there in zip(path.nodes, path.nodes[1:]):
        total += float(cost[here, there])
    if poa_at_request is not None:
        total += float(cost[poa_at_request, path.head])
    if poa_at_delivery is not None:
        total += float(cost[path.tail, poa_at_delivery])
    return total
