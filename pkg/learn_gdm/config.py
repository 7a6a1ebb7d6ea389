# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

from __future__ import annotations

import json
import logging
import logging.handlers
import pathlib
import typing

import appdirs
import pydantic
import structlog
import structlog.stdlib

import learn_gdm

logger = structlog.get_logger(logger_name=__name__)

CONFIG_DIRECTORY = pathlib.Path(appdirs.user_config_dir(learn_gdm.__app__))
CACHE_DIRECTORY = pathlib.Path(appdirs.user_cache_dir(learn_gdm.__app__))
CONFIG_PATH = CONFIG_DIRECTORY / "config.json"

PolicyName = typing.Literal["learn-gdm", "mp", "fp", "gr", "random"]
LEARNED_POLICIES: typing.Tuple[str, ...] = ("learn-gdm", "mp", "fp")


class Section(pydantic.BaseModel):
    class Config:
        extra = pydantic.Extra.forbid
        validate_all = True
        validate_assignment = True


def _ordered_range(value: typing.Tuple[float, float]) -> typing.Tuple[float, float]:
    low, high = value
    if low > high:
        raise ValueError(f"Range lower bound {low} exceeds upper bound {high}")
    return value


class SystemConfig(Section):
    """The simulated network: grid, nodes, services, UEs, channels and cost weights."""

    grid_rows: pydantic.PositiveInt = 4
    grid_cols: pydantic.PositiveInt = 4
    cell_size: pydantic.PositiveFloat = 100.0
    nodes: typing.Optional[pydantic.PositiveInt] = None

    capacity_range: typing.Tuple[pydantic.PositiveInt, pydantic.PositiveInt] = (1, 3)
    exec_cost_range: typing.Tuple[pydantic.NonNegativeFloat, pydantic.NonNegativeFloat] = (1.0, 4.0)
    threshold_range: typing.Tuple[pydantic.confloat(ge=0, le=1), pydantic.confloat(ge=0, le=1)] = (
        0.1,
        0.5,
    )

    services: pydantic.PositiveInt = 3
    max_blocks: pydantic.PositiveInt = 4
    quality_rates: typing.Optional[typing.List[pydantic.PositiveFloat]] = None
    quality_table: typing.Optional[pathlib.Path] = None

    ues: pydantic.PositiveInt = 15
    channels: pydantic.NonNegativeInt = 2
    alpha: pydantic.NonNegativeFloat = 0.1
    beta: pydantic.NonNegativeFloat = 0.1
    history: pydantic.PositiveInt = 3

    frame_duration: pydantic.PositiveFloat = 1.0
    episode_length: pydantic.PositiveInt = 40
    speed_range: typing.Tuple[pydantic.NonNegativeFloat, pydantic.NonNegativeFloat] = (5.0, 15.0)
    pause_time: pydantic.NonNegativeFloat = 3.0
    transfer_scale: pydantic.NonNegativeFloat = 1.0
    access_mode: typing.Literal["per-node", "global"] = "per-node"

    _ranges = pydantic.validator(
        "capacity_range",
        "exec_cost_range",
        "threshold_range",
        "speed_range",
        allow_reuse=True,
    )(_ordered_range)

    @pydantic.validator("nodes")
    def nodes_fit_the_grid(
        cls, value: typing.Optional[int], values: typing.Dict[str, typing.Any]
    ) -> typing.Optional[int]:
        cells = values.get("grid_rows", 1) * values.get("grid_cols", 1)
        if value is not None and value > cells:
            raise ValueError(f"Cannot place {value} nodes on a grid of {cells} cells")
        return value

    @pydantic.validator("quality_rates")
    def one_rate_per_service(
        cls, value: typing.Optional[typing.List[float]], values: typing.Dict[str, typing.Any]
    ) -> typing.Optional[typing.List[float]]:
        if value is not None and len(value) != values.get("services"):
            raise ValueError("quality_rates needs exactly one rate per service")
        return value

    @property
    def node_count(self) -> int:
        return self.nodes if self.nodes is not None else self.grid_rows * self.grid_cols

    @property
    def pause_frames(self) -> int:
        return int(round(self.pause_time / self.frame_duration))


class AgentConfig(Section):
    """Double + dueling deep Q-learning hyperparameters."""

    discount: pydantic.confloat(ge=0, lt=1) = 0.9
    learning_rate: pydantic.NonNegativeFloat = 0.0008
    batch_size: pydantic.PositiveInt = 32
    memory_capacity: pydantic.PositiveInt = 5000
    sync_period: pydantic.PositiveInt = 150
    epsilon_start: pydantic.confloat(ge=0, le=1) = 1.0
    epsilon_floor: pydantic.confloat(ge=0, le=1) = 0.00001
    epsilon_decay: pydantic.confloat(gt=0, lt=1) = 0.99995
    recurrent: bool = True
    recurrent_units: pydantic.PositiveInt = 128
    hidden_units: typing.Tuple[pydantic.PositiveInt, ...] = (128, 64, 32)
    optimizer: typing.Literal["sgd", "adam"] = "sgd"


class TrainingConfig(Section):
    """Episode counts, checkpointing and the sweep grids."""

    episodes: pydantic.PositiveInt = 2000
    checkpoint_every: pydantic.PositiveInt = 100
    evaluation_episodes: pydantic.PositiveInt = 20
    seeds: typing.List[pydantic.NonNegativeInt] = pydantic.Field(default=[0, 1, 2, 3, 4])
    user_sweep: typing.List[pydantic.PositiveInt] = pydantic.Field(default=[5, 10, 15, 20, 25])
    channel_sweep: typing.List[pydantic.PositiveInt] = pydantic.Field(default=[1, 2, 3, 4])
    policies: typing.List[PolicyName] = pydantic.Field(default=["learn-gdm", "mp", "fp", "gr"])
    workers: pydantic.PositiveInt = 1

    @pydantic.validator("seeds", "user_sweep", "channel_sweep", "policies")
    def must_not_be_empty(cls, value: typing.List[typing.Any]) -> typing.List[typing.Any]:
        if not value:
            raise ValueError("at least one value is required")
        return value


class Config(pydantic.BaseSettings):
    seed: pydantic.NonNegativeInt = 0
    output: pathlib.Path = pathlib.Path("results")
    system: SystemConfig = pydantic.Field(default_factory=SystemConfig)
    agent: AgentConfig = pydantic.Field(default_factory=AgentConfig)
    training: TrainingConfig = pydantic.Field(default_factory=TrainingConfig)

    class Config:
        env_prefix = "LEARN_GDM_"
        env_file_encoding = "utf-8"

        extra = pydantic.Extra.forbid

        @classmethod
        def config_settings(cls, _: Config) -> typing.Dict[str, typing.Any]:
            if not CONFIG_PATH.exists():
                logger.debug("No config file exists", path=CONFIG_PATH.as_posix())
                return {}

            logger.debug("Parsing config file", path=CONFIG_PATH.as_posix())
            return json.loads(CONFIG_PATH.read_text())

        @classmethod
        def customise_sources(
            cls,
            init_settings: pydantic.env_settings.SettingsSourceCallable,
            env_settings: pydantic.env_settings.SettingsSourceCallable,
            file_secret_settings: pydantic.env_settings.SettingsSourceCallable,
        ):
            return (
                init_settings,
                env_settings,
                file_secret_settings,
                cls.config_settings,
            )

    @classmethod
    def load(cls, path: typing.Optional[pathlib.Path] = None) -> Config:
        """Load the default config sources, or an explicit JSON file that takes priority."""
        if path is None:
            return cls()

        logger.debug("Parsing config file", path=path.as_posix())
        return cls(**json.loads(path.read_text()))

    def with_system(self, **changes: typing.Any) -> Config:
        """A copy with some system fields replaced, validated like the original."""
        system = SystemConfig(**{**self.system.dict(), **changes})
        return self.copy(update={"system": system})


def configure_logging(verbose: bool = False) -> None:
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.StackInfoRenderer(),
            structlog.dev.set_exc_info,
            structlog.processors.format_exc_info,
            structlog.dev.ConsoleRenderer(sort_keys=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.DEBUG if verbose else logging.INFO
        ),
        logger_factory=structlog.PrintLoggerFactory(),
    )

    CACHE_DIRECTORY.mkdir(parents=True, exist_ok=True)
    handler = logging.handlers.RotatingFileHandler(
        filename=str(CACHE_DIRECTORY / "debug.log"),
        maxBytes=1024 * 1024,
    )
    handler.setFormatter(logging.Formatter("{asctime}:{levelname}:{name}:{message}", style="{"))
    logging.getLogger().addHandler(handler)
    logging.getLogger().setLevel(logging.DEBUG)
