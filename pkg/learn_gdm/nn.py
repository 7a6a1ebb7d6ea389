# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

"""
A small float64 network family for the factored Q-function.

An optional LSTM unrolls over the history window (or the window is flattened), a ReLU trunk
follows, and two linear output layers produce one state value and nodes + 1 advantages per UE head.
Every layer caches its forward pass so ``backward`` can return exact gradients.
"""

from __future__ import annotations

import collections
import copy
import dataclasses
import typing

import numpy as np
import structlog

logger = structlog.get_logger(logger_name=__name__)

Parameters = typing.Dict[str, np.ndarray]


class DimensionError(ValueError):
    pass


def sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def _uniform(rng: np.random.Generator, fan_in: int, shape: typing.Tuple[int, ...]) -> np.ndarray:
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float64)


class Dense:
    def __init__(
        self,
        name: str,
        fan_in: int,
        fan_out: int,
        rng: np.random.Generator,
        relu: bool = True,
    ) -> None:
        self.name = name
        self.relu = relu
        self.weight = _uniform(rng, fan_in, (fan_in, fan_out))
        self.bias = np.zeros(fan_out, dtype=np.float64)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._x: typing.Optional[np.ndarray] = None
        self._z: typing.Optional[np.ndarray] = None

    def parameters(self) -> Parameters:
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def gradients(self) -> Parameters:
        return {f"{self.name}.weight": self.grad_weight, f"{self.name}.bias": self.grad_bias}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        self._z = x @ self.weight + self.bias
        return np.maximum(self._z, 0.0) if self.relu else self._z

    def backward(self, dy: np.ndarray) -> np.ndarray:
        assert self._x is not None and self._z is not None
        dz = dy * (self._z > 0.0) if self.relu else dy
        self.grad_weight += self._x.T @ dz
        self.grad_bias += dz.sum(axis=0)
        return dz @ self.weight.T


class LSTM:
    """Full-gate LSTM (input, forget, cell, output) returning the last hidden state."""

    def __init__(self, name: str, width: int, units: int, rng: np.random.Generator) -> None:
        self.name = name
        self.units = units
        self.input_weight = _uniform(rng, width, (width, 4 * units))
        self.recurrent_weight = _uniform(rng, units, (units, 4 * units))
        self.bias = np.zeros(4 * units, dtype=np.float64)
        self.grad_input_weight = np.zeros_like(self.input_weight)
        self.grad_recurrent_weight = np.zeros_like(self.recurrent_weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._steps: typing.List[typing.Dict[str, np.ndarray]] = []

    def parameters(self) -> Parameters:
        return {
            f"{self.name}.input_weight": self.input_weight,
            f"{self.name}.recurrent_weight": self.recurrent_weight,
            f"{self.name}.bias": self.bias,
        }

    def gradients(self) -> Parameters:
        return {
            f"{self.name}.input_weight": self.grad_input_weight,
            f"{self.name}.recurrent_weight": self.grad_recurrent_weight,
            f"{self.name}.bias": self.grad_bias,
        }

    def forward(self, x: np.ndarray) -> np.ndarray:
        batch, steps, _ = x.shape
        units = self.units
        h = np.zeros((batch, units))
        c = np.zeros((batch, units))
        self._steps = []
        for t in range(steps):
            z = x[:, t] @ self.input_weight + h @ self.recurrent_weight + self.bias
            i = sigmoid(z[:, :units])
            f = sigmoid(z[:, units : 2 * units])
            g = np.tanh(z[:, 2 * units : 3 * units])
            o = sigmoid(z[:, 3 * units :])
            c_next = f * c + i * g
            h_next = o * np.tanh(c_next)
            self._steps.append(
                {"x": x[:, t], "h": h, "c": c, "i": i, "f": f, "g": g, "o": o, "c_next": c_next}
            )
            h, c = h_next, c_next
        return h

    def backward(self, dh_last: np.ndarray) -> np.ndarray:
        batch = dh_last.shape[0]
        dx = np.zeros((batch, len(self._steps), self.input_weight.shape[0]))
        dh = dh_last
        dc = np.zeros_like(dh_last)
        for t in reversed(range(len(self._steps))):
            step = self._steps[t]
            i, f, g, o = step["i"], step["f"], step["g"], step["o"]
            tanh_c = np.tanh(step["c_next"])
            do = dh * tanh_c
            dc = dc + dh * o * (1.0 - tanh_c**2)
            dz = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * step["c"] * f * (1.0 - f),
                    dc * i * (1.0 - g**2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            self.grad_input_weight += step["x"].T @ dz
            self.grad_recurrent_weight += step["h"].T @ dz
            self.grad_bias += dz.sum(axis=0)
            dx[:, t] = dz @ self.input_weight.T
            dh = dz @ self.recurrent_weight.T
            dc = dc * f
        return dx


@dataclasses.dataclass(frozen=True)
class NetworkSpec:
    frame_width: int
    history: int
    ues: int
    nodes: int
    recurrent: bool = True
    recurrent_units: int = 128
    hidden_units: typing.Tuple[int, ...] = (128, 64, 32)
    seed: int = 0

    @property
    def actions(self) -> int:
        return self.nodes + 1

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        data = dataclasses.asdict(self)
        data["hidden_units"] = list(self.hidden_units)
        return data

    @classmethod
    def from_dict(cls, data: typing.Mapping[str, typing.Any]) -> NetworkSpec:
        return cls(**{**data, "hidden_units": tuple(data["hidden_units"])})


class QNetwork:
    def __init__(self, spec: NetworkSpec) -> None:
        self.spec = spec
        rng = np.random.default_rng(spec.seed)

        self.lstm: typing.Optional[LSTM] = None
        if spec.recurrent:
            self.lstm = LSTM("lstm", spec.frame_width, spec.recurrent_units, rng)
            width = spec.recurrent_units
        else:
            width = spec.history * spec.frame_width

        self.trunk: typing.List[Dense] = []
        for index, units in enumerate(spec.hidden_units):
            self.trunk.append(Dense(f"dense{index}", width, units, rng))
            width = units

        self.value = Dense("value", width, spec.ues, rng, relu=False)
        self.advantage = Dense("advantage", width, spec.ues * spec.actions, rng, relu=False)

    def layers(self) -> typing.List[typing.Union[Dense, LSTM]]:
        head: typing.List[typing.Union[Dense, LSTM]] = [self.lstm] if self.lstm else []
        return head + list(self.trunk) + [self.value, self.advantage]

    def parameters(self) -> Parameters:
        params: Parameters = collections.OrderedDict()
        for layer in self.layers():
            params.update(layer.parameters())
        return params

    def gradients(self) -> Parameters:
        grads: Parameters = collections.OrderedDict()
        for layer in self.layers():
            grads.update(layer.gradients())
        return grads

    def zero_grad(self) -> None:
        for grad in self.gradients().values():
            grad.fill(0.0)

    def load_parameters(self, params: typing.Mapping[str, np.ndarray]) -> None:
        own = self.parameters()
        if set(own) != set(params):
            raise DimensionError(f"Parameter names differ: {sorted(set(own) ^ set(params))}")
        for name, array in own.items():
            if array.shape != params[name].shape:
                raise DimensionError(f"{name} has shape {params[name].shape}, not {array.shape}")
            array[...] = params[name]

    def clone(self) -> QNetwork:
        return copy.deepcopy(self)

    def _batch(self, observation: np.ndarray) -> np.ndarray:
        expected = (self.spec.history, self.spec.frame_width)
        x = np.asarray(observation, dtype=np.float64)
        if x.ndim == 2:
            x = x[np.newaxis]
        if x.ndim != 3 or x.shape[1:] != expected:
            raise DimensionError(f"Observation shape {x.shape} does not match {expected}")
        return x

    def forward(self, observation: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray]:
        """
        Raw head outputs for one (history, features) observation or a stacked batch of them.

        Returns state values (batch, ues) and advantages (batch, ues, nodes + 1).
        """
        x = self._batch(observation)
        if self.lstm is not None:
            features = self.lstm.forward(x)
        else:
            features = x.reshape(x.shape[0], -1)
        for layer in self.trunk:
            features = layer.forward(features)

        values = self.value.forward(features)
        advantages = self.advantage.forward(features).reshape(
            x.shape[0], self.spec.ues, self.spec.actions
        )
        return values, advantages

    def backward(self, d_values: np.ndarray, d_advantages: np.ndarray) -> Parameters:
        """Gradients for upstream gradients on the last forward pass's outputs."""
        self.zero_grad()
        batch = d_values.shape[0]
        d_features = self.value.backward(d_values)
        d_features = d_features + self.advantage.backward(d_advantages.reshape(batch, -1))
        for layer in reversed(self.trunk):
            d_features = layer.backward(d_features)
        if self.lstm is not None:
            self.lstm.backward(d_features)
        return self.gradients()


def sgd_update(params: Parameters, grads: Parameters, learning_rate: float) -> Parameters:
    return {name: params[name] - learning_rate * grads[name] for name in params}


class Optimizer:
    def step(self, params: Parameters, grads: Parameters) -> None:
        raise NotImplementedError

    def state(self) -> Parameters:
        return {}

    def load_state(self, state: typing.Mapping[str, np.ndarray]) -> None:
        pass


@dataclasses.dataclass()
class SGD(Optimizer):
    learning_rate: float

    def step(self, params: Parameters, grads: Parameters) -> None:
        for name, value in sgd_update(params, grads, self.learning_rate).items():
            params[name][...] = value


@dataclasses.dataclass()
class Adam(Optimizer):
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    steps: int = 0
    moments: Parameters = dataclasses.field(default_factory=dict)

    def step(self, params: Parameters, grads: Parameters) -> None:
        self.steps += 1
        correction1 = 1.0 - self.beta1**self.steps
        correction2 = 1.0 - self.beta2**self.steps
        for name, param in params.items():
            first = self.moments.setdefault(f"{name}.m", np.zeros_like(param))
            second = self.moments.setdefault(f"{name}.v", np.zeros_like(param))
            first[...] = self.beta1 * first + (1.0 - self.beta1) * grads[name]
            second[...] = self.beta2 * second + (1.0 - self.beta2) * grads[name] ** 2
            param -= (
                self.learning_rate
                * (first / correction1)
                / (np.sqrt(second / correction2) + self.epsilon)
            )

    def state(self) -> Parameters:
        return {**self.moments, "steps": np.array([self.steps], dtype=np.float64)}

    def load_state(self, state: typing.Mapping[str, np.ndarray]) -> None:
        self.steps = int(state["steps"][0]) if "steps" in state else 0
        self.moments = {k: np.array(v) for k, v in state.items() if k != "steps"}


def build_optimizer(name: str, learning_rate: float) -> Optimizer:
    if name == "adam":
        return Adam(learning_rate)
    return SGD(learning_rate)


def numerical_gradient(
    loss: typing.Callable[[], float],
    params: Parameters,
    h: float = 1e-5,
) -> Parameters:
    """Central differences of ``loss`` with respect to every parameter entry."""
    numeric = {}
    for name, param in params.items():
        grad = np.zeros_like(param)
        flat, out = param.reshape(-1), grad.reshape(-1)
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + h
            plus = loss()
            flat[index] = original - h
            minus = loss()
            flat[index] = original
            out[index] = (plus - minus) / (2.0 * h)
        numeric[name] = grad
    return numeric


def relative_error(analytic: Parameters, numeric: Parameters) -> float:
    worst = 0.0
    for name, grad in analytic.items():
        denominator = np.maximum(np.maximum(np.abs(grad), np.abs(numeric[name])), 1e-3)
        worst = max(worst, float(np.max(np.abs(grad - numeric[name]) / denominator)))
    return worst


def gradient_check(
    network: QNetwork,
    observation: np.ndarray,
    d_values: np.ndarray,
    d_advantages: np.ndarray,
    h: float = 1e-5,
) -> float:
    """
    Largest relative error between ``backward`` and central differences.

    The loss is the linear functional ⟨d_values, values⟩ + ⟨d_advantages, advantages⟩, whose
    gradient with respect to the outputs is exactly the given upstream gradient.
    """

    def loss() -> float:
        values, advantages = network.forward(observation)
        return float(np.sum(values * d_values) + np.sum(advantages * d_advantages))

    network.forward(observation)
    analytic = {k: v.copy() for k, v in network.backward(d_values, d_advantages).items()}
    numeric = numerical_gradient(loss, network.parameters(), h)
    return relative_error(analytic, numeric)
