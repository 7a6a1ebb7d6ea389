# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""Placement policies and the action masks that turn the learning agent into MP and FP."""

from __future__ import annotations

import abc
import dataclasses
import typing

import numpy as np
import structlog

from learn_gdm.agent import Agent, to_joint_action
from learn_gdm.environment import Environment
from learn_gdm.scenario import JointAction

logger = structlog.get_logger(logger_name=__name__)

MaskKind = typing.Optional[typing.Literal["mp", "fp", "gr"]]

MASK_KINDS: typing.Dict[str, MaskKind] = {"learn-gdm": None, "mp": "mp", "fp": "fp", "gr": "gr"}


def ue_mask(
    kind: MaskKind,
    nodes: int,
    max_blocks: int,
    blocks_done: int,
    first_node: typing.Optional[int],
    poa: int,
    fresh_upload: bool,
) -> np.ndarray:
    """Allowed local slots for one UE: slot 0 is idle and slot n + 1 is node n."""
    mask = np.ones(nodes + 1, dtype=bool)

    if kind == "mp" and first_node is not None:
        mask[:] = False
        mask[0] = True
        mask[first_node + 1] = True
    elif kind == "fp" and 0 < blocks_done < max_blocks:
        mask[0] = False
    elif kind == "gr":
        mask[:] = False
        if blocks_done > 0 or fresh_upload:
            mask[poa + 1] = True
        else:
            mask[0] = True
    return mask


def mask_for_baseline(kind: MaskKind, env: Environment) -> np.ndarray:
    rows = []
    for ue, state in enumerate(env.ues):
        session = state.session
        rows.append(
            ue_mask(
                kind,
                nodes=env.node_count,
                max_blocks=env.scenario.max_blocks,
                blocks_done=0 if session is None else session.blocks_done,
                first_node=None if session is None else session.nodes[0],
                poa=int(env.association[ue]),
                fresh_upload=session is None and state.uploaded_last_frame,
            )
        )
    return np.stack(rows)


class Policy(abc.ABC):
    name: str = "policy"
    mask_kind: MaskKind = None

    def mask(self, env: Environment) -> np.ndarray:
        return mask_for_baseline(self.mask_kind, env)

    @abc.abstractmethod
    def decide(self, observation: np.ndarray, env: Environment) -> JointAction:
        raise NotImplementedError


class GreedyPolicy(Policy):
    """Every block runs on the UE's current point of access."""

    name = "gr"
    mask_kind = "gr"

    def decide(self, observation: np.ndarray, env: Environment) -> JointAction:
        slots = [int(np.flatnonzero(allowed)[0]) for allowed in self.mask(env)]
        return to_joint_action(slots)


@dataclasses.dataclass()
class RandomPolicy(Policy):
    rng: np.random.Generator
    mask_kind: MaskKind = None
    name: str = "random"

    def decide(self, observation: np.ndarray, env: Environment) -> JointAction:
        slots = [int(self.rng.choice(np.flatnonzero(allowed))) for allowed in self.mask(env)]
        return to_joint_action(slots)


@dataclasses.dataclass()
class AgentPolicy(Policy):
    agent: Agent
    mask_kind: MaskKind = None
    name: str = "learn-gdm"
    explore: bool = True

    def decide(self, observation: np.ndarray, env: Environment) -> JointAction:
        epsilon = None if self.explore else 0.0
        slots = self.agent.select_action(observation, self.mask(env), epsilon=epsilon)
        return to_joint_action(slots)


@dataclasses.dataclass()
class ScriptedPolicy(Policy):
    actions: typing.Sequence[JointAction]
    name: str = "scripted"

    def decide(self, observation: np.ndarray, env: Environment) -> JointAction:
        if env.frame >= len(self.actions):
            return [None] * env.ue_count
        return list(self.actions[env.frame])


def build_policy(
    name: str,
    agent: typing.Optional[Agent] = None,
    rng: typing.Optional[np.random.Generator] = None,
    explore: bool = True,
) -> Policy:
    if name == "gr":
        return GreedyPolicy()
    if name == "random":
        return RandomPolicy(rng=rng if rng is not None else np.random.default_rng())
    if name in MASK_KINDS:
        if agent is None:
            raise ValueError(f"Policy {name} needs a trained agent")
        return AgentPolicy(agent=agent, mask_kind=MASK_KINDS[name], name=name, explore=explore)
    raise ValueError(f"Unknown policy {name}")
