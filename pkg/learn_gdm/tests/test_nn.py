# This file is part of learn-gdm.
#
# Licensed under the Mozilla Public License Version 2.0.
# SPDX-License-Identifier: MPL-2.0
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import numpy as np
import pytest

import learn_gdm.nn
from learn_gdm.nn import Adam, Dense, NetworkSpec, QNetwork


def small_spec(recurrent: bool, seed: int = 0) -> NetworkSpec:
    return NetworkSpec(
        frame_width=4,
        history=3,
        ues=2,
        nodes=2,
        recurrent=recurrent,
        recurrent_units=5,
        hidden_units=(6, 4),
        seed=seed,
    )


def test_zero_network_outputs_zero() -> None:
    network = QNetwork(small_spec(recurrent=True))
    network.load_parameters({k: np.zeros_like(v) for k, v in network.parameters().items()})
    values, advantages = network.forward(np.random.default_rng(0).normal(size=(3, 4)))
    assert not values.any()
    assert not advantages.any()


def test_identity_dense_layer() -> None:
    layer = Dense("identity", 3, 3, np.random.default_rng(0), relu=False)
    layer.weight[...] = np.eye(3)
    x = np.array([[1.0, -2.0, 0.5]])
    assert layer.forward(x).tolist() == x.tolist()


def test_dense_weight_gradient() -> None:
    layer = Dense("linear", 3, 2, np.random.default_rng(0), relu=False)
    x = np.array([[1.0, 2.0, 3.0]])
    g = np.array([[0.5, -1.0]])
    layer.forward(x)
    layer.backward(g)
    assert np.allclose(layer.grad_weight, x.T @ g)
    assert np.allclose(layer.grad_bias, g[0])


@pytest.mark.parametrize("recurrent", [True, False])
def test_zero_upstream_gradient(recurrent: bool) -> None:
    network = QNetwork(small_spec(recurrent))
    values, advantages = network.forward(np.random.default_rng(1).normal(size=(2, 3, 4)))
    grads = network.backward(np.zeros_like(values), np.zeros_like(advantages))
    assert all(not grad.any() for grad in grads.values())


@pytest.mark.parametrize("recurrent", [True, False])
def test_output_shapes(recurrent: bool) -> None:
    network = QNetwork(small_spec(recurrent))
    values, advantages = network.forward(np.zeros((5, 3, 4)))
    assert values.shape == (5, 2)
    assert advantages.shape == (5, 2, 3)

    values, advantages = network.forward(np.zeros((3, 4)))
    assert values.shape == (1, 2)
    assert advantages.shape == (1, 2, 3)


@pytest.mark.parametrize("shape", [(3, 5), (2, 4), (2, 2, 3, 4), (4,)])
def test_wrong_observation_shape(shape) -> None:
    network = QNetwork(small_spec(recurrent=True))
    with pytest.raises(learn_gdm.nn.DimensionError):
        network.forward(np.zeros(shape))


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("recurrent", [True, False])
def test_gradients_match_finite_differences(recurrent: bool, seed: int) -> None:
    rng = np.random.default_rng(100 + seed)
    network = QNetwork(small_spec(recurrent, seed=seed))
    observation = rng.normal(size=(2, 3, 4))
    d_values = rng.normal(size=(2, 2))
    d_advantages = rng.normal(size=(2, 2, 3))
    error = learn_gdm.nn.gradient_check(network, observation, d_values, d_advantages)
    assert error < 1e-4


@pytest.mark.parametrize("scale", [0.5, 2.0, 10.0])
def test_bias_free_network_is_positively_homogeneous(scale: float) -> None:
    network = QNetwork(small_spec(recurrent=False, seed=6))
    for name, param in network.parameters().items():
        if name.endswith(".bias"):
            param.fill(0.0)
    observation = np.random.default_rng(6).normal(size=(4, 3, 4))

    values, advantages = network.forward(observation)
    scaled_values, scaled_advantages = network.forward(scale * observation)
    assert np.allclose(scaled_values, scale * values, rtol=1e-12, atol=1e-12)
    assert np.allclose(scaled_advantages, scale * advantages, rtol=1e-12, atol=1e-12)


def test_forward_matches_frozen_values() -> None:
    spec = NetworkSpec(
        frame_width=2, history=1, ues=1, nodes=1, recurrent=False, hidden_units=(2,), seed=0
    )
    network = QNetwork(spec)
    network.load_parameters(
        {
            "dense0.weight": np.array([[1.0, -1.0], [2.0, 1.0]]),
            "dense0.bias": np.array([0.5, 0.0]),
            "value.weight": np.array([[0.5], [-1.0]]),
            "value.bias": np.array([0.25]),
            "advantage.weight": np.array([[1.0, 0.0], [0.0, -2.0]]),
            "advantage.bias": np.array([0.0, 1.0]),
        }
    )
    values, advantages = network.forward(np.array([[1.0, 2.0]]))
    assert values.tolist() == [[2.0]]
    assert advantages.tolist() == [[[5.5, -1.0]]]


def test_forward_is_deterministic() -> None:
    observation = np.random.default_rng(3).normal(size=(3, 4))
    first = QNetwork(small_spec(recurrent=True, seed=7)).forward(observation)
    second = QNetwork(small_spec(recurrent=True, seed=7)).forward(observation)
    assert np.array_equal(first[0], second[0])
    assert np.array_equal(first[1], second[1])


def test_clone_is_independent() -> None:
    network = QNetwork(small_spec(recurrent=False))
    copy = network.clone()
    network.parameters()["value.bias"][...] = 1.0
    assert not copy.parameters()["value.bias"].any()


def test_load_parameters_checks_shapes() -> None:
    network = QNetwork(small_spec(recurrent=False))
    other = QNetwork(small_spec(recurrent=True))
    with pytest.raises(learn_gdm.nn.DimensionError):
        network.load_parameters(other.parameters())

    params = dict(network.parameters())
    params["value.bias"] = np.zeros(7)
    with pytest.raises(learn_gdm.nn.DimensionError):
        network.load_parameters(params)


@pytest.mark.parametrize(
    "param,grad,rate,expected",
    [
        (1.0, 2.0, 0.1, 0.8),
        (1.0, 2.0, 0.0, 1.0),
        (-0.5, -1.0, 0.5, 0.0),
    ],
)
def test_sgd_update(param: float, grad: float, rate: float, expected: float) -> None:
    updated = learn_gdm.nn.sgd_update({"w": np.array([param])}, {"w": np.array([grad])}, rate)
    assert updated["w"][0] == pytest.approx(expected)


@pytest.mark.parametrize("rate", [0.1, 0.4])
def test_sgd_converges_on_a_quadratic(rate: float) -> None:
    optimizer = learn_gdm.nn.SGD(rate)
    params = {"w": np.array([10.0])}
    for _ in range(10_000):
        optimizer.step(params, {"w": 2.0 * (params["w"] - 3.0)})
    assert abs(params["w"][0] - 3.0) < 1e-6


def test_adam_state_round_trip() -> None:
    params = {"w": np.array([1.0, -1.0])}
    grads = {"w": np.array([0.5, 0.25])}
    optimizer = Adam(0.01)
    optimizer.step(params, grads)

    restored = Adam(0.01)
    restored.load_state(optimizer.state())
    assert restored.steps == 1

    expected = {"w": params["w"].copy()}
    optimizer.step(expected, grads)
    restored.step(params, grads)
    assert np.array_equal(params["w"], expected["w"])


def test_build_optimizer() -> None:
    assert isinstance(learn_gdm.nn.build_optimizer("adam", 0.1), Adam)
    assert isinstance(learn_gdm.nn.build_optimizer("sgd", 0.1), learn_gdm.nn.SGD)


def test_spec_dict_round_trip() -> None:
    spec = small_spec(recurrent=False, seed=9)
    assert NetworkSpec.from_dict(spec.to_dict()) == spec
