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
import typing

import click
import inflect
import structlog

import learn_gdm.config
import learn_gdm.ext.click
import learn_gdm.harness
import learn_gdm.oracle
import learn_gdm.trace

logger = structlog.get_logger(logger_name=__name__)
p = inflect.engine()


@click.command(name="oracle")
@click.option("-i", "--instances", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--nodes", type=click.IntRange(min=1), default=2, show_default=True)
@click.option("--ues", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--channels", type=click.IntRange(min=0), default=1, show_default=True)
@click.option("--blocks", type=click.IntRange(min=1), default=2, show_default=True)
@click.option("--horizon", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--compare", is_flag=True, help="Check that no heuristic policy beats the optimum.")
@click.option("--verify", is_flag=True, help="Check that pruning does not change the optimum.")
@click.option(
    "--dump",
    type=click.Path(file_okay=False, path_type=pathlib.Path),
    default=None,
    help="Write every optimal trace to this directory.",
)
@click.pass_obj
def oracle(
    config: learn_gdm.config.Config,
    instances: int,
    nodes: int,
    ues: int,
    channels: int,
    blocks: int,
    horizon: int,
    compare: bool,
    verify: bool,
    dump: typing.Optional[pathlib.Path],
) -> None:
    """Solve small random instances exactly."""
    shape = learn_gdm.oracle.InstanceShape(
        nodes=nodes, ues=ues, channels=channels, max_blocks=blocks, horizon=horizon
    )
    rows = []
    failures = []
    with learn_gdm.ext.click.progressbar(
        length=instances,
        event="Solving",
        unit="instance",
        item_show_func=lambda index: f"last={index}",
        logger_name=__name__,
    ) as progress:
        for index in range(instances):
            rng = learn_gdm.harness.stream_rng(config.seed, learn_gdm.harness.Stream.ORACLE, index)
            instance = learn_gdm.oracle.random_instance(rng, shape)
            solution = learn_gdm.oracle.solve_exact(instance)

            if verify:
                exhaustive = learn_gdm.oracle.solve_exact(instance, prune=False)
                if exhaustive.value != solution.value:
                    failures.append(
                        f"instance {index}: pruned {solution.value} != {exhaustive.value}"
                    )

            if dump is not None:
                dump.mkdir(parents=True, exist_ok=True)
                solution.trace.dump(dump / f"oracle-{index}.jsonl")

            objective = solution.objective
            rows.append(
                [
                    index,
                    format(solution.value, ".12g"),
                    format(objective.quality, ".12g"),
                    format(objective.execution, ".12g"),
                    format(objective.transfer, ".12g"),
                    solution.leaves,
                ]
            )
            progress.update(1, index)

    comparisons = []
    if compare:
        comparisons = learn_gdm.harness.compare_with_oracle(
            instances, config.seed, shape=shape, agent_config=config.agent
        )
        for comparison in comparisons:
            if not comparison.dominated:
                failures.append(f"instance {comparison.index}: a policy beat the oracle")

    path = config.output / "oracle.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["instance", "objective", "quality", "execution", "transfer", "leaves"]
    if comparisons:
        header += sorted(comparisons[0].policies)
        for row, comparison in zip(rows, comparisons):
            row.extend(format(comparison.policies[k], ".12g") for k in sorted(comparison.policies))
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    logger.info("Wrote oracle results", path=path.as_posix(), instances=instances)

    if failures:
        for failure in failures:
            logger.error("Oracle check failed", detail=failure)
        raise learn_gdm.harness.AcceptanceFailure(
            f"{len(failures)} oracle {p.plural('check', len(failures))} failed"
        )


@click.command(name="check-trace")
@click.argument(
    "path",
    type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
)
def check_trace(path: pathlib.Path) -> None:
    """Check a trace file against the placement and access constraints."""
    trace = learn_gdm.trace.DecisionTrace.load(path)
    report = learn_gdm.oracle.check_constraints(trace)
    objective = learn_gdm.oracle.objective_value(trace)
    logger.info(
        "Evaluated trace",
        path=path.as_posix(),
        objective=objective.total,
        quality=objective.quality,
        execution=objective.execution,
        transfer=objective.transfer,
    )

    if report.feasible:
        logger.info("Trace is feasible", selections=len(trace.selections))
        return

    for violation in report.violations:
        logger.error(
            "Constraint violated",
            constraint=violation.constraint,
            frame=violation.frame,
            entity=violation.entity,
            detail=violation.detail,
        )
    count = len(report.violations)
    raise learn_gdm.harness.AcceptanceFailure(f"{count} {p.plural('violation', count)} in {path}")
