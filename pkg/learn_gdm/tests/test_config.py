# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import json
import pathlib

import pydantic
import pytest

import learn_gdm.config
from learn_gdm.config import Config, SystemConfig, TrainingConfig


def test_defaults() -> None:
    system = SystemConfig()
    assert system.node_count == 16
    assert (system.ues, system.channels, system.max_blocks, system.history) == (15, 2, 4, 3)
    assert system.pause_frames == 3


@pytest.mark.parametrize(
    "changes",
    [
        {"nodes": 17},
        {"capacity_range": (3, 1)},
        {"threshold_range": (0.2, 1.5)},
        {"channels": -1},
        {"services": 2, "quality_rates": [1.0]},
        {"unknown": 1},
    ],
)
def test_invalid_system(changes) -> None:
    with pytest.raises(pydantic.ValidationError):
        SystemConfig(**changes)


@pytest.mark.parametrize("field", ["seeds", "user_sweep", "policies"])
def test_sweeps_need_values(field: str) -> None:
    with pytest.raises(pydantic.ValidationError):
        TrainingConfig(**{field: []})


def test_load_explicit_file(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 4, "system": {"ues": 5, "channels": 1}}))
    config = Config.load(path)
    assert config.seed == 4
    assert (config.system.ues, config.system.channels) == (5, 1)
    assert config.agent.sync_period == 150


def test_load_rejects_unknown_keys(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"agent": {"gamma": 0.5}}))
    with pytest.raises(pydantic.ValidationError):
        Config.load(path)


def test_with_system_validates() -> None:
    config = Config()
    assert config.with_system(ues=7).system.ues == 7
    assert config.system.ues == 15
    with pytest.raises(pydantic.ValidationError):
        config.with_system(ues=0)


def test_learned_policies() -> None:
    assert learn_gdm.config.LEARNED_POLICIES == ("learn-gdm", "mp", "fp")
