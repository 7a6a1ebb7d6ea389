# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""
Double and dueling deep Q-learning over a factored action space.

Every UE gets its own head of nodes + 1 local actions (slot 0 is idle, slot n + 1 is node n).
All heads share the trunk and learn from the same frame reward. Masks restrict which slots a
head may pick, both when acting and inside the double-Q target.
"""

from __future__ import annotations

import collections
import dataclasses
import json
import pathlib
import typing

import numpy as np
import structlog

from learn_gdm.config import AgentConfig
from learn_gdm.nn import NetworkSpec, Optimizer, QNetwork, build_optimizer
from learn_gdm.scenario import JointAction

logger = structlog.get_logger(logger_name=__name__)

CHECKPOINT_FORMAT = 1


class MissingCheckpoint(FileNotFoundError):
    pass


def dueling_aggregate(values: np.ndarray, advantages: np.ndarray) -> np.ndarray:
    """Q(a) = V + (AD(a) − mean AD) for every head."""
    advantages = np.asarray(advantages, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)[..., np.newaxis]
    return values + advantages - advantages.mean(axis=-1, keepdims=True)


def dueling_backward(d_q: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray]:
    return d_q.sum(axis=-1), d_q - d_q.mean(axis=-1, keepdims=True)


def masked_argmax(q: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Argmax over allowed slots; ties go to the lowest slot, so idle wins ties."""
    return np.where(mask, q, -np.inf).argmax(axis=-1)


def double_q_target(
    reward: np.ndarray,
    online_next: np.ndarray,
    target_next: np.ndarray,
    discount: float,
    terminal: np.ndarray,
    next_mask: np.ndarray,
) -> np.ndarray:
    """
    Per-head targets: the online network picks a′, the target network values it.

    ``reward`` and ``terminal`` are per transition, the Q arrays are (batch, heads, slots).
    """
    chosen = masked_argmax(online_next, next_mask)
    evaluated = np.take_along_axis(target_next, chosen[..., np.newaxis], axis=-1)[..., 0]
    reward = np.asarray(reward, dtype=np.float64)[:, np.newaxis]
    alive = 1.0 - np.asarray(terminal, dtype=np.float64)[:, np.newaxis]
    return reward + discount * alive * evaluated


def single_q_target(
    reward: np.ndarray,
    target_next: np.ndarray,
    discount: float,
    terminal: np.ndarray,
    next_mask: np.ndarray,
) -> np.ndarray:
    """The plain DQL target, max over the target network's own values."""
    best = np.where(next_mask, target_next, -np.inf).max(axis=-1)
    reward = np.asarray(reward, dtype=np.float64)[:, np.newaxis]
    alive = 1.0 - np.asarray(terminal, dtype=np.float64)[:, np.newaxis]
    return reward + discount * alive * best


def to_joint_action(slots: typing.Sequence[int]) -> JointAction:
    return [None if slot == 0 else int(slot) - 1 for slot in slots]


def to_slots(action: JointAction) -> np.ndarray:
    return np.array([0 if node is None else node + 1 for node in action], dtype=np.int64)


@dataclasses.dataclass(frozen=True)
class Experience:
    reward: float
    observation: np.ndarray
    action: np.ndarray
    next_observation: np.ndarray
    terminal: bool
    next_mask: np.ndarray


class ReplayMemory:
    def __init__(self, capacity: int) -> None:
        self.capacity = capacity
        self.buffer: typing.Deque[Experience] = collections.deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.buffer)

    def __iter__(self) -> typing.Iterator[Experience]:
        return iter(self.buffer)

    def remember(self, experience: Experience) -> None:
        self.buffer.append(experience)

    def sample(self, size: int, rng: np.random.Generator) -> typing.List[Experience]:
        indices = rng.choice(len(self.buffer), size=size, replace=False)
        return [self.buffer[int(index)] for index in indices]


class Agent:
    def __init__(
        self,
        spec: NetworkSpec,
        config: AgentConfig,
        rng: np.random.Generator,
    ) -> None:
        self.spec = spec
        self.config = config
        self.rng = rng
        self.online = QNetwork(spec)
        self.target = self.online.clone()
        self.optimizer: Optimizer = build_optimizer(config.optimizer, config.learning_rate)
        self.memory = ReplayMemory(config.memory_capacity)
        self.epsilon = config.epsilon_start
        self.steps = 0

    def q_values(
        self, observation: np.ndarray, network: typing.Optional[QNetwork] = None
    ) -> np.ndarray:
        values, advantages = (network or self.online).forward(observation)
        return dueling_aggregate(values, advantages)

    def select_action(
        self,
        observation: np.ndarray,
        mask: np.ndarray,
        epsilon: typing.Optional[float] = None,
    ) -> np.ndarray:
        """
        Local slots for every head.

        One draw decides between exploring and exploiting for the whole frame, as in the
        training loop. Exploring heads sample uniformly among their allowed slots.
        """
        epsilon = self.epsilon if epsilon is None else epsilon
        if self.rng.uniform() < epsilon:
            return np.array(
                [self.rng.choice(np.flatnonzero(allowed)) for allowed in mask], dtype=np.int64
            )
        q = self.q_values(observation)[0]
        return masked_argmax(q, mask).astype(np.int64)

    def remember(self, experience: Experience) -> None:
        self.memory.remember(experience)

    def train_step(self) -> typing.Optional[float]:
        """One gradient step on a sampled batch; None while the memory is too small."""
        size = self.config.batch_size
        if len(self.memory) < size:
            return None

        batch = self.memory.sample(size, self.rng)
        observations = np.stack([e.observation for e in batch])
        next_observations = np.stack([e.next_observation for e in batch])
        actions = np.stack([e.action for e in batch])
        rewards = np.array([e.reward for e in batch])
        terminal = np.array([e.terminal for e in batch])
        next_masks = np.stack([e.next_mask for e in batch])

        online_next = self.q_values(next_observations, self.online)
        target_next = self.q_values(next_observations, self.target)
        targets = double_q_target(
            rewards, online_next, target_next, self.config.discount, terminal, next_masks
        )

        values, advantages = self.online.forward(observations)
        q = dueling_aggregate(values, advantages)
        taken = np.take_along_axis(q, actions[..., np.newaxis], axis=-1)[..., 0]
        error = taken - targets
        loss = float(np.mean(error**2))

        d_q = np.zeros_like(q)
        d_taken = 2.0 * error / error.size
        np.put_along_axis(d_q, actions[..., np.newaxis], d_taken[..., np.newaxis], axis=-1)
        d_values, d_advantages = dueling_backward(d_q)
        grads = self.online.backward(d_values, d_advantages)
        self.optimizer.step(self.online.parameters(), grads)
        return loss

    def sync_target(self) -> None:
        self.target.load_parameters(self.online.parameters())

    def sync_and_decay(self) -> None:
        self.steps += 1
        if self.steps % self.config.sync_period == 0:
            self.sync_target()
            logger.debug("Synced target network", steps=self.steps, epsilon=self.epsilon)
        if self.epsilon > self.config.epsilon_floor:
            self.epsilon = max(self.epsilon * self.config.epsilon_decay, self.config.epsilon_floor)

    def save(self, path: pathlib.Path, **metadata: typing.Any) -> None:
        arrays: typing.Dict[str, np.ndarray] = {}
        for name, array in self.online.parameters().items():
            arrays[f"param/{name}"] = array.astype("<f8")
        for name, array in self.target.parameters().items():
            arrays[f"target/{name}"] = array.astype("<f8")
        for name, array in self.optimizer.state().items():
            arrays[f"optim/{name}"] = np.asarray(array).astype("<f8")

        info = {
            "format": CHECKPOINT_FORMAT,
            "spec": self.spec.to_dict(),
            "epsilon": self.epsilon,
            "steps": self.steps,
            "agent": json.loads(self.config.json()),
            **metadata,
        }
        arrays["metadata"] = np.array(json.dumps(info, sort_keys=True))

        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as f:
            np.savez(f, **arrays)
        logger.debug("Saved checkpoint", path=path.as_posix(), steps=self.steps)

    @classmethod
    def load(cls, path: pathlib.Path, rng: np.random.Generator) -> Agent:
        if not path.exists():
            raise MissingCheckpoint(f"No checkpoint at {path}")

        with np.load(path, allow_pickle=False) as data:
            info = json.loads(str(data["metadata"]))
            params = {k[len("param/") :]: data[k] for k in data.files if k.startswith("param/")}
            target = {k[len("target/") :]: data[k] for k in data.files if k.startswith("target/")}
            optim = {k[len("optim/") :]: data[k] for k in data.files if k.startswith("optim/")}

        agent = cls(
            spec=NetworkSpec.from_dict(info["spec"]),
            config=AgentConfig(**info["agent"]),
            rng=rng,
        )
        agent.online.load_parameters(params)
        agent.target.load_parameters(target or params)
        agent.optimizer.load_state(optim)
        agent.epsilon = float(info["epsilon"])
        agent.steps = int(info["steps"])
        logger.debug("Loaded checkpoint", path=path.as_posix(), steps=agent.steps)
        return agent


def read_checkpoint_metadata(path: pathlib.Path) -> typing.Dict[str, typing.Any]:
    if not path.exists():
        raise MissingCheckpoint(f"No checkpoint at {path}")
    with np.load(path, allow_pickle=False) as data:
        return json.loads(str(data["metadata"]))
