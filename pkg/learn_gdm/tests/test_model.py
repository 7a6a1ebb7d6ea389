# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import pathlib
import typing

import numpy as np
import pytest

import learn_gdm.model
import learn_gdm.scenario
from learn_gdm.config import SystemConfig
from learn_gdm.model import ExecutionPath, Node, QualityCurve, Service, Topology


def topology(transfer_cost: typing.List[typing.List[float]]) -> Topology:
    count = len(transfer_cost)
    return Topology(
        nodes=tuple(Node(n, capacity=1, exec_cost=1.0) for n in range(count)),
        transfer_cost=np.array(transfer_cost),
        areas=tuple(range(count)),
        grid_rows=1,
        grid_cols=count,
        cell_size=100.0,
    )


@pytest.mark.parametrize(
    "nodes,step,node,expected",
    [
        ((0, 1), 1, 0, 1),
        ((0, 1), 2, 1, 1),
        ((0, 0), 2, 1, 0),
    ],
)
def test_path_indicator(nodes, step: int, node: int, expected: int) -> None:
    assert learn_gdm.model.path_indicator(ExecutionPath(nodes), step, node) == expected


@pytest.mark.parametrize("step", [0, 3])
def test_path_indicator_out_of_range(step: int) -> None:
    with pytest.raises(IndexError):
        learn_gdm.model.path_indicator(ExecutionPath.of(0, 1), step, 0)


def test_path_indicator_one_node_per_step() -> None:
    for path in learn_gdm.model.enumerate_paths(3, 3):
        for step in range(1, 4):
            assert sum(learn_gdm.model.path_indicator(path, step, n) for n in range(3)) == 1


def test_enumerate_paths_lexicographic() -> None:
    paths = learn_gdm.model.enumerate_paths(2, 2)
    assert [p.nodes for p in paths] == [(0, 0), (0, 1), (1, 0), (1, 1)]


@pytest.mark.parametrize("nodes", [1, 2, 3, 4])
@pytest.mark.parametrize("length", [1, 2, 3, 4, 5])
def test_enumerate_paths_count(nodes: int, length: int) -> None:
    paths = learn_gdm.model.enumerate_paths(nodes, length)
    assert len(paths) == nodes**length
    assert len({p.nodes for p in paths}) == nodes**length


def test_enumerate_paths_single_node() -> None:
    assert [p.nodes for p in learn_gdm.model.enumerate_paths(1, 3)] == [(0, 0, 0)]


def test_enumerate_paths_cap_keeps_prefix() -> None:
    full = learn_gdm.model.enumerate_paths(3, 3)
    capped = learn_gdm.model.enumerate_paths(3, 3, cap=5)
    assert capped == full[:5]


def test_enumerate_paths_overflow() -> None:
    with pytest.raises(learn_gdm.model.PathCountOverflow):
        learn_gdm.model.enumerate_paths(10, 19)

    assert len(learn_gdm.model.enumerate_paths(10, 19, cap=2)) == 2


@pytest.mark.parametrize("rate", [0.5, 1.0, 1.5])
@pytest.mark.parametrize("blocks", [1, 4, 10])
def test_saturating_curve(rate: float, blocks: int) -> None:
    curve = QualityCurve.saturating(rate, blocks)
    assert curve(0) == 0.0
    assert curve(blocks) == 1.0
    values = [curve(k) for k in range(blocks + 1)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_saturating_curve_closed_form() -> None:
    curve = QualityCurve.saturating(1.0, 4)
    expected = (1 - np.exp(-2.0)) / (1 - np.exp(-4.0))
    assert curve(2) == pytest.approx(expected, rel=1e-12)


def test_tabulated_quality() -> None:
    service = Service(0, 4, QualityCurve.tabulated([0, 0.2, 0.45, 0.7, 0.9]))
    assert learn_gdm.model.quality(service, 0) == 0.0
    assert learn_gdm.model.quality(service, 2) == 0.45


@pytest.mark.parametrize("blocks", [-1, 5])
def test_quality_out_of_range(blocks: int) -> None:
    service = Service(0, 4, QualityCurve.saturating(1.0, 4))
    with pytest.raises(learn_gdm.model.QualityRangeError):
        learn_gdm.model.quality(service, blocks)


@pytest.mark.parametrize(
    "values",
    [
        [0.1, 0.5],
        [0.0, 0.6, 0.4],
        [0.0, 1.2],
    ],
)
def test_invalid_curves(values: typing.List[float]) -> None:
    with pytest.raises(ValueError):
        QualityCurve.tabulated(values)


def test_load_quality_tables(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "curves.txt"
    path.write_text("0 0.2 0.45 0.7 0.9\n0 0.5 0.6 0.8 1.0\n")
    curves = learn_gdm.model.load_quality_tables(path)
    assert [c.values for c in curves] == [(0, 0.2, 0.45, 0.7, 0.9), (0, 0.5, 0.6, 0.8, 1.0)]


@pytest.mark.parametrize(
    "changes,rates",
    [
        ({}, [1.0, 1.0, 1.0]),
        ({"services": 2, "quality_rates": [0.5, 2.0]}, [0.5, 2.0]),
    ],
)
def test_build_services_rates(changes: typing.Dict[str, typing.Any], rates) -> None:
    services = learn_gdm.scenario.build_services(SystemConfig(**changes))
    assert [s.curve.rate for s in services] == rates
    assert [s.curve for s in services] == [QualityCurve.saturating(r, 4) for r in rates]


@pytest.mark.parametrize(
    "nodes,request_node,delivery,expected",
    [
        ((0, 0), 0, 0, 0.0),
        ((0, 1), 0, 1, 3.0),
        ((1,), 0, 0, 7.0),
        ((1,), None, None, 0.0),
        ((0, 1), None, 0, 7.0),
    ],
)
def test_path_transmission_cost(nodes, request_node, delivery, expected: float) -> None:
    topo = topology([[0.0, 3.0], [4.0, 0.0]])
    cost = learn_gdm.model.path_transmission_cost(ExecutionPath(nodes), request_node, delivery, topo)
    assert cost == expected


@pytest.mark.parametrize("scale", [0.0, 0.5, 3.0])
@pytest.mark.parametrize("nodes", [(0, 1, 1), (1, 0), (1,)])
def test_path_transmission_cost_scales_with_transfer_costs(nodes, scale: float) -> None:
    costs = [[0.0, 3.0], [4.0, 0.0]]
    base = learn_gdm.model.path_transmission_cost(ExecutionPath(nodes), 0, 1, topology(costs))
    scaled = learn_gdm.model.path_transmission_cost(
        ExecutionPath(nodes), 0, 1, topology([[scale * c for c in row] for row in costs])
    )
    assert scaled == pytest.approx(scale * base)


def test_topology_rejects_self_transfer_cost() -> None:
    with pytest.raises(ValueError):
        topology([[1.0, 0.0], [0.0, 0.0]])


def test_topology_lookup() -> None:
    topo = Topology(
        nodes=(Node(0, 1, 1.0), Node(1, 1, 1.0)),
        transfer_cost=np.zeros((2, 2)),
        areas=(0, 1, 1, 1),
        grid_rows=2,
        grid_cols=2,
        cell_size=100.0,
    )
    assert topo.extent == (200.0, 200.0)
    assert topo.node_at(50.0, 50.0) == 0
    assert topo.node_at(150.0, 50.0) == 1
    assert topo.node_at(200.0, 200.0) == 1
