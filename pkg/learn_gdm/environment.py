# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""
The discrete-time world.

Each frame runs mobility, then channel access, then block placement, then the reward. UEs
without an open session or a pending upload contend for an uplink channel; a successful upload
lets the UE start a chain on the next frame. Chains run one denoising block per frame and close
when the last block is done, when the agent picks idle, or when the target node is full.
"""

from __future__ import annotations

import dataclasses
import enum
import typing

import numpy as np
import structlog

from learn_gdm.access import (
    AccessResult,
    AccessScheduler,
    Grants,
    apply_channel_grants,
    compute_priorities,
    priority_order,
)
from learn_gdm.mobility import MobilityModel, Motion, association_matrix
from learn_gdm.model import quality
from learn_gdm.scenario import JointAction, Scenario
from learn_gdm.trace import DecisionTrace, SessionRecord, TraceRecorder

logger = structlog.get_logger(logger_name=__name__)


class ConfigurationError(ValueError):
    pass


class Closure(str, enum.Enum):
    COMPLETE = "complete"
    STOPPED = "stopped"
    CAPACITY = "capacity"
    HORIZON = "horizon"


@dataclasses.dataclass()
class Session:
    service: int
    start_frame: int
    request_poa: int
    nodes: typing.List[int] = dataclasses.field(default_factory=list)
    accumulated_transfer_cost: float = 0.0
    delivered: bool = False
    closure: typing.Optional[Closure] = None
    delivery_frame: typing.Optional[int] = None
    delivery_poa: typing.Optional[int] = None
    final_quality: typing.Optional[float] = None

    @property
    def blocks_done(self) -> int:
        return len(self.nodes)

    @property
    def current_node(self) -> int:
        return self.nodes[-1]


@dataclasses.dataclass()
class UEState:
    ue: int
    motion: Motion
    session: typing.Optional[Session] = None
    uploaded_last_frame: bool = False
    uploaded_this_frame: bool = False
    upload_poa: typing.Optional[int] = None
    pending_poa: typing.Optional[int] = None


@dataclasses.dataclass(frozen=True)
class Delivery:
    ue: int
    quality: float
    threshold: float
    closure: Closure
    node: typing.Optional[int]


@dataclasses.dataclass()
class FrameOutcome:
    frame: int
    grants: Grants
    uploads: typing.List[bool]
    collisions: int
    blocked: int
    executions: np.ndarray
    deliveries: typing.List[Delivery] = dataclasses.field(default_factory=list)
    quality_gain: float = 0.0
    execution_cost: float = 0.0
    transfer_cost: float = 0.0
    frame_reward: float = 0.0
    transfer_by_ue: typing.Dict[int, float] = dataclasses.field(default_factory=dict)


def compute_reward(outcome: FrameOutcome, alpha: float, beta: float) -> float:
    """Gated quality gain minus weighted execution and transfer costs."""
    return outcome.quality_gain - alpha * outcome.execution_cost - beta * outcome.transfer_cost


def observation_width(node_count: int, ue_count: int) -> int:
    return 2 * node_count + 2 * ue_count + ue_count * node_count


class Environment:
    def __init__(
        self,
        scenario: Scenario,
        mobility: MobilityModel,
        access: AccessScheduler,
        horizon: int,
        history: int,
        rng: np.random.Generator,
    ) -> None:
        if horizon < 1:
            raise ConfigurationError(f"Episode length must be at least one frame, got {horizon}")
        if history < 1:
            raise ConfigurationError(f"History must cover at least one frame, got {history}")

        self.scenario = scenario
        self.mobility = mobility
        self.access = access
        self.horizon = horizon
        self.history = history
        self.rng = rng

        self.frame = 0
        self.ues: typing.List[UEState] = []
        self.association = np.zeros(scenario.ue_count, dtype=np.int64)
        self.last_load = np.zeros(scenario.node_count, dtype=np.int64)
        self.order: typing.List[int] = []
        self.access_result: typing.Optional[AccessResult] = None
        self.blocked = 0
        self.frames: typing.List[np.ndarray] = []
        self.recorder = TraceRecorder(scenario)

    @property
    def node_count(self) -> int:
        return self.scenario.node_count

    @property
    def ue_count(self) -> int:
        return self.scenario.ue_count

    @property
    def feature_width(self) -> int:
        return observation_width(self.node_count, self.ue_count)

    def reset(self) -> np.ndarray:
        motions = self.mobility.spawn(self.ue_count, self.rng)
        self.frame = 0
        self.ues = [UEState(ue=ue, motion=motion) for ue, motion in enumerate(motions)]
        self.last_load = np.zeros(self.node_count, dtype=np.int64)
        self.frames = []
        self.recorder = TraceRecorder(self.scenario)
        self.association = self.mobility.associate(motions, 0)
        self._begin_frame()
        return self.observe()

    def session_quality(self, ue: int) -> float:
        session = self.ues[ue].session
        if session is None:
            return 0.0
        return quality(self.scenario.service_of(ue), session.blocks_done)

    def blocks_done(self, ue: int) -> int:
        session = self.ues[ue].session
        return 0 if session is None else session.blocks_done

    def _begin_frame(self) -> None:
        self.recorder.associate(self.frame, self.association)

        for state in self.ues:
            state.uploaded_last_frame = state.uploaded_this_frame
            state.upload_poa = state.pending_poa if state.uploaded_this_frame else None
            state.uploaded_this_frame = False
            state.pending_poa = None

        qualities = [self.session_quality(ue) for ue in range(self.ue_count)]
        priorities = compute_priorities(qualities, self.scenario.thresholds)
        eligible = [s.session is None and not s.uploaded_last_frame for s in self.ues]

        grants = self.access.grant(self.frame, priorities, self.association, eligible)
        result = apply_channel_grants(grants, self.association)
        for ue, channel in enumerate(grants):
            if channel is None:
                continue
            node = int(self.association[ue])
            if result.success[ue]:
                self.ues[ue].uploaded_this_frame = True
                self.ues[ue].pending_poa = node
                self.recorder.transmit(self.frame, ue, node, channel)
            else:
                self.recorder.collide(self.frame, ue, node, channel)

        self.access_result = result
        self.blocked = sum(
            1 for ue in range(self.ue_count) if eligible[ue] and grants[ue] is None
        )
        self.order = priority_order(priorities)
        self.frames.append(self._features(qualities))

        logger.debug(
            "Channel access",
            frame=self.frame,
            grants=grants,
            collisions=result.collisions,
            blocked=self.blocked,
        )

    def _features(self, qualities: typing.Sequence[float]) -> np.ndarray:
        capacities = self.scenario.topology.capacities
        load = self.last_load / capacities
        costs = self.scenario.topology.exec_costs
        gaps = np.asarray(qualities, dtype=np.float64) - self.scenario.thresholds
        uploads = np.array([float(state.uploaded_last_frame) for state in self.ues])
        psi = association_matrix(self.association, self.node_count).ravel()
        return np.concatenate([load, costs, gaps, uploads, psi]).astype(np.float64)

    def observe(self) -> np.ndarray:
        """The last ``history`` frame feature vectors, oldest first, zero-padded at the start."""
        window = np.zeros((self.history, self.feature_width), dtype=np.float64)
        recent = self.frames[-self.history :]
        if recent:
            window[self.history - len(recent) :] = np.stack(recent)
        return window

    def _close(
        self,
        ue: int,
        closure: Closure,
        outcome: typing.Optional[FrameOutcome],
        delivery_poa: typing.Optional[int],
    ) -> None:
        state = self.ues[ue]
        session = state.session
        assert session is not None

        topology = self.scenario.topology
        tail = 0.0
        if delivery_poa is not None:
            tail = float(topology.transfer_cost[session.current_node, delivery_poa])

        final = quality(self.scenario.service_of(ue), session.blocks_done)
        threshold = self.scenario.profiles[ue].threshold
        session.accumulated_transfer_cost += tail
        session.delivered = delivery_poa is not None
        session.closure = closure
        session.delivery_frame = self.frame if delivery_poa is not None else None
        session.delivery_poa = delivery_poa
        session.final_quality = final

        if outcome is not None:
            outcome.transfer_cost += tail
            outcome.transfer_by_ue[ue] = outcome.transfer_by_ue.get(ue, 0.0) + tail
            outcome.deliveries.append(
                Delivery(
                    ue=ue, quality=final, threshold=threshold, closure=closure, node=delivery_poa
                )
            )
            self.recorder.deliver(self.frame, ue, int(delivery_poa), final, tail)

        self.recorder.close(
            SessionRecord(
                ue=ue,
                start_frame=session.start_frame,
                nodes=tuple(session.nodes),
                request_poa=session.request_poa,
                delivery_frame=session.delivery_frame,
                delivery_poa=delivery_poa,
                closure=closure.value,
                quality=final,
                threshold=threshold,
                transfer_cost=session.accumulated_transfer_cost,
            )
        )
        state.session = None

    def _execute(self, ue: int, node: int, outcome: FrameOutcome) -> None:
        state = self.ues[ue]
        topology = self.scenario.topology
        service = self.scenario.service_of(ue)

        if state.session is None:
            assert state.upload_poa is not None
            state.session = Session(
                service=service.id, start_frame=self.frame, request_poa=state.upload_poa
            )
            hop = float(topology.transfer_cost[state.upload_poa, node])
        else:
            hop = float(topology.transfer_cost[state.session.current_node, node])

        session = state.session
        before = quality(service, session.blocks_done)
        session.nodes.append(node)
        after = quality(service, session.blocks_done)
        session.accumulated_transfer_cost += hop

        exec_cost = float(topology.nodes[node].exec_cost)
        outcome.executions[node] += 1
        outcome.execution_cost += exec_cost
        outcome.transfer_cost += hop
        outcome.transfer_by_ue[ue] = outcome.transfer_by_ue.get(ue, 0.0) + hop
        if after >= self.scenario.profiles[ue].threshold:
            outcome.quality_gain += after - before

        self.recorder.execute(self.frame, ue, session.blocks_done, node, after, exec_cost)

    def apply_placement(self, action: JointAction) -> FrameOutcome:
        if len(action) != self.ue_count:
            raise ConfigurationError(
                f"Joint action has {len(action)} entries for {self.ue_count} UEs"
            )
        for ue, node in enumerate(action):
            if node is not None and not 0 <= node < self.node_count:
                raise ConfigurationError(f"UE {ue} targets unknown node {node}")

        assert self.access_result is not None
        outcome = FrameOutcome(
            frame=self.frame,
            grants=self.access_result.grants,
            uploads=list(self.access_result.success),
            collisions=self.access_result.collisions,
            blocked=self.blocked,
            executions=np.zeros(self.node_count, dtype=np.int64),
        )
        capacities = self.scenario.topology.capacities
        max_blocks = self.scenario.max_blocks

        for ue in self.order:
            state = self.ues[ue]
            node = action[ue]
            session = state.session
            poa = int(self.association[ue])

            if session is not None and session.blocks_done == max_blocks:
                self._close(ue, Closure.COMPLETE, outcome, poa)
            elif node is not None and outcome.executions[node] < capacities[node]:
                if session is not None or state.uploaded_last_frame:
                    self._execute(ue, node, outcome)
            elif session is not None:
                if node is None:
                    self._close(ue, Closure.STOPPED, outcome, poa)
                else:
                    logger.debug(
                        "Capacity forced chain closure",
                        frame=self.frame,
                        ue=ue,
                        node=node,
                        blocks=session.blocks_done,
                    )
                    self._close(ue, Closure.CAPACITY, outcome, poa)

        outcome.frame_reward = compute_reward(outcome, self.scenario.alpha, self.scenario.beta)
        self.last_load = outcome.executions.copy()
        return outcome

    def step(self, action: JointAction) -> typing.Tuple[FrameOutcome, np.ndarray, bool]:
        outcome = self.apply_placement(action)
        self.frame += 1
        done = self.frame >= self.horizon

        if done:
            for state in self.ues:
                if state.session is not None:
                    self._close(state.ue, Closure.HORIZON, None, None)
        else:
            motions = [state.motion for state in self.ues]
            self.mobility.advance(motions, self.frame, self.rng)
            self.association = self.mobility.associate(motions, self.frame)
            self._begin_frame()

        return outcome, self.observe(), done

    def trace(self) -> DecisionTrace:
        return self.recorder.build()


class Placement(typing.Protocol):
    def decide(self, observation: np.ndarray, env: Environment) -> JointAction:
        ...


Observer = typing.Callable[
    [np.ndarray, JointAction, FrameOutcome, np.ndarray, bool], None
]


@dataclasses.dataclass()
class EpisodeResult:
    trace: DecisionTrace
    outcomes: typing.List[FrameOutcome]

    @property
    def rewards(self) -> typing.List[float]:
        return [outcome.frame_reward for outcome in self.outcomes]

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    @property
    def collisions(self) -> int:
        return sum(outcome.collisions for outcome in self.outcomes)

    @property
    def blocked(self) -> int:
        return sum(outcome.blocked for outcome in self.outcomes)

    @property
    def execution_cost(self) -> float:
        return float(sum(outcome.execution_cost for outcome in self.outcomes))

    @property
    def transfer_cost(self) -> float:
        return float(sum(outcome.transfer_cost for outcome in self.outcomes))

    @property
    def sessions(self) -> typing.List[SessionRecord]:
        return self.trace.sessions

    def mean_quality(self, gated: bool = True) -> float:
        """
        Mean final quality over closed chains; 0.0 when nothing was served.

        Gated means sub-threshold results count as zero.
        """
        if not self.sessions:
            return 0.0
        values = [
            s.quality if (s.selected or not gated) else 0.0 for s in self.sessions
        ]
        return float(np.mean(values))


def run_episode(
    env: Environment,
    policy: Placement,
    observer: typing.Optional[Observer] = None,
) -> EpisodeResult:
    observation = env.reset()
    outcomes = []
    done = False
    while not done:
        action = policy.decide(observation, env)
        outcome, next_observation, done = env.step(action)
        if observer is not None:
            observer(observation, action, outcome, next_observation, done)
        outcomes.append(outcome)
        observation = next_observation

    result = EpisodeResult(trace=env.trace(), outcomes=outcomes)
    logger.debug(
        "Episode finished",
        frames=len(outcomes),
        reward=result.total_reward,
        sessions=len(result.sessions),
        collisions=result.collisions,
    )
    return result
