# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import csv
import pathlib
import re

import pytest

import learn_gdm.harness
import learn_gdm.output
from learn_gdm.harness import MetricRow


def row(episode: int, reward: float, wall_time: float = 0.0) -> MetricRow:
    return MetricRow(
        run="train",
        policy="learn-gdm",
        seed=0,
        sweep="none",
        value=0,
        episode=episode,
        reward=reward,
        loss=None,
        epsilon=0.5,
        quality_gated=0.25,
        quality_ungated=0.5,
        collisions=1,
        blocked=2,
        objective_quality=1.0,
        objective_execution=3.0,
        objective_transfer=1.0,
        objective_total=0.6,
        wall_time=wall_time,
    )


def test_write_metrics(tmp_path: pathlib.Path) -> None:
    path = learn_gdm.output.write_metrics(tmp_path / "out" / "m.csv", [row(0, 0.1), row(1, -2.5)])
    with path.open() as f:
        records = list(csv.DictReader(f))

    assert tuple(records[0]) == learn_gdm.output.METRIC_COLUMNS
    assert records[0]["reward"] == "0.1"
    assert records[0]["loss"] == ""
    assert records[1]["reward"] == "-2.5"
    assert "wall_time" not in records[0]


def test_metrics_are_byte_identical(tmp_path: pathlib.Path) -> None:
    first = learn_gdm.output.write_metrics(tmp_path / "a.csv", [row(0, 1.0, wall_time=1.0)])
    second = learn_gdm.output.write_metrics(tmp_path / "b.csv", [row(0, 1.0, wall_time=2.0)])
    assert first.read_bytes() == second.read_bytes()
    assert b"\r" not in first.read_bytes()


def test_timings_column(tmp_path: pathlib.Path) -> None:
    path = learn_gdm.output.write_metrics(tmp_path / "t.csv", [row(0, 1.0, 0.5)], timings=True)
    header, values = path.read_text().splitlines()
    assert header.endswith(",wall_time")
    assert values.endswith(",0.5")


def test_empty_metrics(tmp_path: pathlib.Path) -> None:
    with pytest.raises(learn_gdm.output.EmptyMetrics):
        learn_gdm.output.write_metrics(tmp_path / "m.csv", [])
    with pytest.raises(learn_gdm.output.EmptyMetrics):
        learn_gdm.output.write_aggregates(tmp_path / "a.csv", [])
    with pytest.raises(learn_gdm.output.EmptyMetrics):
        learn_gdm.output.render_svg({}, "title", "x", "y")


def test_write_aggregates(tmp_path: pathlib.Path) -> None:
    aggregates = learn_gdm.harness.aggregate([row(0, 1.0), row(1, 3.0)])
    path = learn_gdm.output.write_aggregates(tmp_path / "s.csv", aggregates)
    with path.open() as f:
        (record,) = list(csv.DictReader(f))
    assert tuple(record) == learn_gdm.output.AGGREGATE_COLUMNS
    assert (record["reward_mean"], record["reward_std"], record["samples"]) == ("2", "1", "2")


def test_svg_draws_larger_values_higher() -> None:
    svg = learn_gdm.output.render_svg(
        {"gr": [(1.0, 0.1), (2.0, 0.5), (3.0, 0.9)]}, "quality & users", "users", "quality"
    )
    points = re.search(r'points="([^"]+)"', svg).group(1).split()
    xs = [float(p.split(",")[0]) for p in points]
    ys = [float(p.split(",")[1]) for p in points]
    assert xs == sorted(xs)
    assert ys == sorted(ys, reverse=True)
    assert "quality &amp; users" in svg
    assert svg.startswith("<svg")


def test_svg_series_per_policy(tmp_path: pathlib.Path) -> None:
    aggregates = learn_gdm.harness.aggregate([row(0, 1.0)])
    series = learn_gdm.output.aggregate_series(aggregates, "reward_mean")
    assert series == {"learn-gdm": [(0.0, 1.0)]}

    path = learn_gdm.output.write_svg(tmp_path / "c.svg", series, "t", "x", "y")
    assert path.read_text().count("<polyline") == 1


def test_reward_series() -> None:
    series = learn_gdm.output.reward_series([row(0, 1.0), row(1, 2.0)])
    assert series == {"learn-gdm seed 0": [(0.0, 1.0), (1.0, 2.0)]}
