# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""UE movement and the per-frame association graph."""

from __future__ import annotations

import abc
import dataclasses
import typing

import numpy as np
import structlog

from learn_gdm.model import Topology

logger = structlog.get_logger(logger_name=__name__)


@dataclasses.dataclass()
class Motion:
    position: np.ndarray
    waypoint: np.ndarray
    speed: float
    pause_remaining: int = 0

    @property
    def arrived(self) -> bool:
        return bool(np.array_equal(self.position, self.waypoint))


class MobilityModel(abc.ABC):
    @abc.abstractmethod
    def spawn(self, count: int, rng: np.random.Generator) -> typing.List[Motion]:
        raise NotImplementedError

    @abc.abstractmethod
    def advance(
        self, motions: typing.Sequence[Motion], frame: int, rng: np.random.Generator
    ) -> None:
        raise NotImplementedError

    @abc.abstractmethod
    def associate(self, motions: typing.Sequence[Motion], frame: int) -> np.ndarray:
        """The PoA node of every UE for a frame."""
        raise NotImplementedError


@dataclasses.dataclass()
class RandomWaypoint(MobilityModel):
    """
    Random waypoint movement over the topology's grid.

    UEs walk straight to a uniformly drawn waypoint, pause on arrival, then draw the next one.
    Association is quantised per frame: it is taken from the position at the start of the frame.
    """

    topology: Topology
    frame_duration: float
    speed_range: typing.Tuple[float, float]
    pause_frames: int

    def _uniform_point(self, rng: np.random.Generator) -> np.ndarray:
        width, height = self.topology.extent
        return np.array([rng.uniform(0.0, width), rng.uniform(0.0, height)])

    def spawn(self, count: int, rng: np.random.Generator) -> typing.List[Motion]:
        low, high = self.speed_range
        return [
            Motion(
                position=self._uniform_point(rng),
                waypoint=self._uniform_point(rng),
                speed=float(rng.uniform(low, high)),
            )
            for _ in range(count)
        ]

    def move(self, motion: Motion, rng: np.random.Generator) -> None:
        if motion.pause_remaining > 0:
            motion.pause_remaining -= 1
            return

        if motion.arrived:
            motion.waypoint = self._uniform_point(rng)

        reach = motion.speed * self.frame_duration
        delta = motion.waypoint - motion.position
        distance = float(np.hypot(delta[0], delta[1]))
        if distance <= reach:
            motion.position = motion.waypoint.copy()
            motion.pause_remaining = self.pause_frames
        else:
            motion.position = motion.position + delta * (reach / distance)

        width, height = self.topology.extent
        motion.position = np.clip(motion.position, [0.0, 0.0], [width, height])

    def advance(
        self, motions: typing.Sequence[Motion], frame: int, rng: np.random.Generator
    ) -> None:
        for motion in motions:
            self.move(motion, rng)

    def associate(self, motions: typing.Sequence[Motion], frame: int) -> np.ndarray:
        return np.array(
            [self.topology.node_at(m.position[0], m.position[1]) for m in motions],
            dtype=np.int64,
        )


@dataclasses.dataclass()
class ReplayMobility(MobilityModel):
    """Replays a known association trajectory, one row of PoA nodes per frame."""

    association: np.ndarray

    def spawn(self, count: int, rng: np.random.Generator) -> typing.List[Motion]:
        if count != self.association.shape[1]:
            raise ValueError(f"Association covers {self.association.shape[1]} UEs, not {count}")
        return [Motion(position=np.zeros(2), waypoint=np.zeros(2), speed=0.0) for _ in range(count)]

    def advance(
        self, motions: typing.Sequence[Motion], frame: int, rng: np.random.Generator
    ) -> None:
        pass

    def associate(self, motions: typing.Sequence[Motion], frame: int) -> np.ndarray:
        row = min(frame, self.association.shape[0] - 1)
        return np.array(self.association[row], dtype=np.int64)


def step_mobility(
    model: MobilityModel,
    motions: typing.Sequence[Motion],
    frame: int,
    rng: np.random.Generator,
) -> np.ndarray:
    model.advance(motions, frame, rng)
    return model.associate(motions, frame)


def association_matrix(association: np.ndarray, node_count: int) -> np.ndarray:
    """Expand a PoA vector into the one-hot association matrix (UEs × nodes)."""
    matrix = np.zeros((len(association), node_count), dtype=np.float64)
    matrix[np.arange(len(association)), association] = 1.0
    return matrix
