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

from learn_gdm.access import ScriptedAccess
from learn_gdm.config import AgentConfig, Config, SystemConfig, TrainingConfig
from learn_gdm.environment import Environment
from learn_gdm.mobility import ReplayMobility
from learn_gdm.model import Node, QualityCurve, Service, Topology, UEProfile
from learn_gdm.scenario import Scenario


def make_scenario(
    capacities: typing.Sequence[int],
    exec_costs: typing.Sequence[float],
    transfer_cost: typing.Sequence[typing.Sequence[float]],
    thresholds: typing.Sequence[float],
    curve: QualityCurve,
    channels: int = 1,
    alpha: float = 0.1,
    beta: float = 0.1,
) -> Scenario:
    count = len(capacities)
    return Scenario(
        topology=Topology(
            nodes=tuple(
                Node(n, capacity=capacities[n], exec_cost=exec_costs[n]) for n in range(count)
            ),
            transfer_cost=np.array(transfer_cost, dtype=np.float64),
            areas=tuple(range(count)),
            grid_rows=1,
            grid_cols=count,
            cell_size=100.0,
        ),
        services=(Service(0, curve.max_blocks, curve),),
        profiles=tuple(UEProfile(ue, 0, threshold) for ue, threshold in enumerate(thresholds)),
        channels=channels,
        alpha=alpha,
        beta=beta,
    )


def scripted_environment(
    scenario: Scenario,
    association: typing.Sequence[typing.Sequence[int]],
    grants: typing.Mapping[int, typing.Mapping[int, int]],
    history: int = 1,
) -> Environment:
    return Environment(
        scenario=scenario,
        mobility=ReplayMobility(np.array(association, dtype=np.int64)),
        access=ScriptedAccess(grants),
        horizon=len(association),
        history=history,
        rng=np.random.default_rng(0),
    )


@pytest.fixture()
def config(tmp_path: pathlib.Path) -> Config:
    """A network small enough for a handful of quick training episodes."""
    return Config(
        seed=3,
        output=tmp_path / "results",
        system=SystemConfig(
            grid_rows=2,
            grid_cols=2,
            nodes=2,
            ues=3,
            channels=1,
            episode_length=6,
            history=2,
        ),
        agent=AgentConfig(
            recurrent_units=8,
            hidden_units=(8, 4),
            batch_size=4,
            sync_period=5,
            learning_rate=0.001,
        ),
        training=TrainingConfig(
            episodes=2,
            checkpoint_every=1,
            evaluation_episodes=1,
            seeds=[0],
            user_sweep=[2, 3],
            channel_sweep=[1, 2],
            policies=["learn-gdm", "gr"],
        ),
    )
