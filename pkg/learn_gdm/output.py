# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""
Metric files.

Per-episode rows use the columns in ``METRIC_COLUMNS``; ``wall_time`` is only appended with
``timings=True`` so repeated runs produce identical files. Aggregates use ``AGGREGATE_COLUMNS``.
"""

from __future__ import annotations

import csv
import dataclasses
import pathlib
import typing
from xml.sax.saxutils import escape

import structlog

from learn_gdm.harness import Aggregate, MetricRow

logger = structlog.get_logger(logger_name=__name__)

METRIC_COLUMNS = (
    "run",
    "policy",
    "seed",
    "sweep",
    "value",
    "episode",
    "reward",
    "loss",
    "epsilon",
    "quality_gated",
    "quality_ungated",
    "collisions",
    "blocked",
    "objective_quality",
    "objective_execution",
    "objective_transfer",
    "objective_total",
)

AGGREGATE_COLUMNS = tuple(field.name for field in dataclasses.fields(Aggregate))

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


class EmptyMetrics(ValueError):
    pass


def _cell(value: typing.Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def write_metrics(
    path: pathlib.Path,
    rows: typing.Sequence[MetricRow],
    timings: bool = False,
) -> pathlib.Path:
    if not rows:
        raise EmptyMetrics(f"No metric rows to write to {path}")

    columns = METRIC_COLUMNS + (("wall_time",) if timings else ())
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(getattr(row, column)) for column in columns])

    logger.info("Wrote metrics", path=path.as_posix(), rows=len(rows))
    return path


def write_aggregates(path: pathlib.Path, aggregates: typing.Sequence[Aggregate]) -> pathlib.Path:
    if not aggregates:
        raise EmptyMetrics(f"No aggregates to write to {path}")

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(AGGREGATE_COLUMNS)
        for aggregate in aggregates:
            writer.writerow([_cell(getattr(aggregate, column)) for column in AGGREGATE_COLUMNS])

    logger.info("Wrote aggregates", path=path.as_posix(), rows=len(aggregates))
    return path


Series = typing.Mapping[str, typing.Sequence[typing.Tuple[float, float]]]


def render_svg(
    series: Series,
    title: str,
    x_label: str,
    y_label: str,
    width: int = 640,
    height: int = 400,
    margin: int = 50,
) -> str:
    """A line chart with one polyline per series; larger values are drawn higher."""
    points = [point for line in series.values() for point in line]
    if not points:
        raise EmptyMetrics("No points to plot")

    xs = [x for x, _ in points]
    ys = [y for _, y in points]
    x_low, x_high = min(xs), max(xs)
    y_low, y_high = min(ys), max(ys)

    def project(x: float, y: float) -> typing.Tuple[float, float]:
        span_x = width - 2 * margin
        span_y = height - 2 * margin
        px = margin + (span_x * (x - x_low) / (x_high - x_low) if x_high > x_low else span_x / 2)
        py = height - margin - (
            span_y * (y - y_low) / (y_high - y_low) if y_high > y_low else span_y / 2
        )
        return px, py

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.2f}" y="{margin / 2:.2f}" text-anchor="middle">'
        f"{escape(title)}</text>",
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" '
        'stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.2f}" y="{height - 10}" text-anchor="middle">'
        f"{escape(x_label)}</text>",
        f'<text x="15" y="{height / 2:.2f}" transform="rotate(-90 15 {height / 2:.2f})" '
        f'text-anchor="middle">{escape(y_label)}</text>',
        f'<text x="{margin}" y="{height - margin + 15}" font-size="10">{x_low:.6g}</text>',
        f'<text x="{width - margin}" y="{height - margin + 15}" font-size="10" '
        f'text-anchor="end">{x_high:.6g}</text>',
        f'<text x="{margin - 5}" y="{height - margin}" font-size="10" '
        f'text-anchor="end">{y_low:.6g}</text>',
        f'<text x="{margin - 5}" y="{margin}" font-size="10" text-anchor="end">{y_high:.6g}</text>',
    ]

    for index, (name, line) in enumerate(sorted(series.items())):
        colour = PALETTE[index % len(PALETTE)]
        coordinates = " ".join(
            "{:.2f},{:.2f}".format(*project(x, y)) for x, y in sorted(line)
        )
        parts.append(
            f'<polyline data-series="{escape(name)}" fill="none" stroke="{colour}" '
            f'stroke-width="2" points="{coordinates}"/>'
        )
        parts.append(
            f'<text x="{width - margin + 5}" y="{margin + 15 * index}" font-size="10" '
            f'fill="{colour}">{escape(name)}</text>'
        )

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(
    path: pathlib.Path, series: Series, title: str, x_label: str, y_label: str
) -> pathlib.Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_svg(series, title, x_label, y_label))
    logger.info("Wrote chart", path=path.as_posix())
    return path


def aggregate_series(
    aggregates: typing.Sequence[Aggregate],
    metric: str,
) -> typing.Dict[str, typing.List[typing.Tuple[float, float]]]:
    series: typing.Dict[str, typing.List[typing.Tuple[float, float]]] = {}
    for aggregate in aggregates:
        series.setdefault(aggregate.policy, []).append(
            (float(aggregate.value), float(getattr(aggregate, metric)))
        )
    return series


def reward_series(
    rows: typing.Sequence[MetricRow],
) -> typing.Dict[str, typing.List[typing.Tuple[float, float]]]:
    series: typing.Dict[str, typing.List[typing.Tuple[float, float]]] = {}
    for row in rows:
        series.setdefault(f"{row.policy} seed {row.seed}", []).append(
            (float(row.episode), row.reward)
        )
    return series
