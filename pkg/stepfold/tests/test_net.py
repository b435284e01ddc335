"""Tests for the noise-prediction network and its optimizer"""
import numpy as np
import pytest

from stepfold.check import gradient_relative_errors
from stepfold.exceptions import (
    DimensionMismatchError,
    InvalidParameterError,
    NonFiniteLossError,
)
from stepfold.net import (
    AdamState,
    EpsilonNet,
    adam_step,
    loss_and_grads,
    net_forward,
    regression_loss,
    time_embedding,
)


def _zero_net():
    net = EpsilonNet(2, hidden_widths=[4], time_embed_dim=2)
    for p in net.parameters():
        p[...] = 0.0
    return net


def _batch(net, n=6, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, net.input_dim))
    t_norm = rng.uniform(0, 1, n)
    targets = rng.standard_normal((n, net.input_dim))
    return x, t_norm, targets


"""FORWARD"""


def test_time_embedding_shape_and_range():
    emb = time_embedding(np.array([0.0, 0.5, 1.0]), 6)
    assert emb.shape == (3, 6)
    np.testing.assert_array_equal(emb[0], [0, 0, 0, 1, 1, 1])
    assert np.all(np.abs(emb) <= 1)


def test_zero_net_outputs_zero():
    out = _zero_net().forward(np.array([[1.0, 2.0], [3.0, 4.0]]), 0.3)
    np.testing.assert_array_equal(out, np.zeros((2, 2)))


def test_forward_is_deterministic(tiny_net):
    x = np.array([[0.1, -0.2], [1.0, 3.0]])
    np.testing.assert_array_equal(
        tiny_net.forward(x, [0.2, 0.9]), tiny_net.forward(x, [0.2, 0.9])
    )
    np.testing.assert_array_equal(
        net_forward(tiny_net, x, 0.5), tiny_net(x, 0.5)
    )


def test_single_layer_net_by_hand():
    """Without hidden layers the net is W [x, emb(t)] + b"""
    net = EpsilonNet(2, hidden_widths=[], time_embed_dim=2, seed=1)
    assert len(net.weights) == 1
    x = np.array([1.0, 0.0])
    # at t_norm = 0 the embedding is (sin 0, cos 0) = (0, 1)
    expected = net.weights[0] @ np.array([1.0, 0.0, 0.0, 1.0]) + net.biases[0]
    np.testing.assert_allclose(net.forward(x, 0.0), expected)


def test_single_row_keeps_its_shape(tiny_net):
    assert tiny_net.forward(np.zeros(2), 0.1).shape == (2,)
    assert tiny_net.forward(np.zeros((1, 2)), 0.1).shape == (1, 2)


def test_forward_rejects_wrong_dimension(tiny_net):
    with pytest.raises(DimensionMismatchError, match="dimension 2"):
        tiny_net.forward(np.zeros((3, 3)), 0.1)


def test_forward_rejects_time_outside_unit_interval(tiny_net):
    with pytest.raises(InvalidParameterError, match="t_norm"):
        tiny_net.forward(np.zeros(2), 1.5)


@pytest.mark.parametrize(
    "kwargs, match",
    [
        ({"input_dim": 0}, "input_dim"),
        ({"input_dim": 2, "time_embed_dim": 3}, "even"),
        ({"input_dim": 2, "hidden_widths": [0]}, "hidden"),
        ({"input_dim": 2, "activation": "swish"}, "activation"),
    ],
)
def test_architecture_validation(kwargs, match):
    with pytest.raises(InvalidParameterError, match=match):
        EpsilonNet(**kwargs)


def test_from_parameters_checks_shapes():
    with pytest.raises(DimensionMismatchError, match="layer 0"):
        EpsilonNet.from_parameters(
            2, [], 2, "relu", [np.zeros((2, 3))], [np.zeros(2)]
        )


def test_from_parameters_rejects_non_finite():
    w = np.zeros((2, 4))
    w[0, 0] = np.inf
    with pytest.raises(InvalidParameterError, match="finite"):
        EpsilonNet.from_parameters(2, [], 2, "relu", [w], [np.zeros(2)])


def test_copy_is_independent(tiny_net):
    clone = tiny_net.copy()
    clone.weights[0][0, 0] += 1.0
    assert clone.weights[0][0, 0] != tiny_net.weights[0][0, 0]
    assert clone.n_parameters == tiny_net.n_parameters


"""LOSS AND GRADIENTS"""


def test_loss_zero_when_targets_match(tiny_net):
    x, t_norm, _ = _batch(tiny_net)
    targets = tiny_net.forward(x, t_norm)
    loss, grads = tiny_net.loss_and_grads(x, t_norm, targets)
    assert loss == 0
    for g in grads:
        np.testing.assert_array_equal(g, np.zeros_like(g))


def test_l1_and_l2_agree_on_unit_residuals():
    residual = np.ones((5, 3))
    assert regression_loss(residual, "l2")[0] == 3.0
    assert regression_loss(residual, "l1")[0] == 3.0


def test_regression_loss_weights():
    residual = np.array([[1.0, 1.0], [2.0, 0.0]])
    loss, grad = regression_loss(residual, "l2", weights=[1.0, 0.5])
    assert loss == pytest.approx((2.0 + 0.5 * 4.0) / 2)
    np.testing.assert_allclose(grad, [[1.0, 1.0], [1.0, 0.0]])


@pytest.mark.parametrize(
    "kwargs, error",
    [
        ({"norm": "l3"}, InvalidParameterError),
        ({"weights": [1.0]}, DimensionMismatchError),
    ],
)
def test_regression_loss_rejects_bad_arguments(kwargs, error):
    with pytest.raises(error):
        regression_loss(np.ones((2, 2)), **kwargs)


def test_regression_loss_non_finite():
    with pytest.raises(NonFiniteLossError, match="Non-finite loss"):
        regression_loss(np.array([[np.nan, 0.0]]))


def test_loss_rejects_bad_targets(tiny_net):
    x, t_norm, _ = _batch(tiny_net)
    with pytest.raises(DimensionMismatchError, match="targets"):
        tiny_net.loss_and_grads(x, t_norm, np.zeros((2, 2)))


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("activation", ["quick_gelu", "tanh"])
def test_gradients_match_finite_differences(seed, activation):
    """Reverse-mode gradients agree with central differences"""
    rng = np.random.default_rng(seed)
    widths = list(rng.integers(2, 6, rng.integers(0, 3)))
    net = EpsilonNet(
        int(rng.integers(1, 4)),
        hidden_widths=widths,
        time_embed_dim=4,
        activation=activation,
        seed=seed,
    )
    x, t_norm, targets = _batch(net, n=5, seed=seed)
    errors = gradient_relative_errors(net, x, t_norm, targets, h=1e-5)
    assert len(errors) == len(net.parameters())
    assert max(errors) < 1e-4


def test_gradients_l1_and_weighted(tiny_net):
    x, t_norm, targets = _batch(tiny_net, n=4, seed=3)
    errors = gradient_relative_errors(
        tiny_net, x, t_norm, targets, norm="l1"
    )
    assert max(errors) < 1e-4

    weights = np.array([0.5, 1.0, 2.0, 0.1])
    loss, grads = loss_and_grads(tiny_net, x, t_norm, targets, "l2", weights)
    unweighted = tiny_net.loss_and_grads(x, t_norm, targets)[0]
    assert loss != unweighted
    assert len(grads) == 4


def test_gradient_check_restores_parameters(tiny_net):
    before = [p.copy() for p in tiny_net.parameters()]
    x, t_norm, targets = _batch(tiny_net)
    gradient_relative_errors(tiny_net, x, t_norm, targets, n_entries=3)
    for b, p in zip(before, tiny_net.parameters()):
        np.testing.assert_array_equal(b, p)


"""ADAM"""


def test_adam_zero_grads_leave_parameters(tiny_net):
    before = [p.copy() for p in tiny_net.parameters()]
    state = AdamState.for_net(tiny_net)
    grads = [np.zeros_like(p) for p in before]
    adam_step(tiny_net, state, grads)
    assert state.step_count == 1
    for b, p in zip(before, tiny_net.parameters()):
        np.testing.assert_array_equal(b, p)


def test_adam_zero_grads_decay_moments(tiny_net):
    state = AdamState.for_net(tiny_net)
    grads = [np.ones_like(p) for p in tiny_net.parameters()]
    adam_step(tiny_net, state, grads)
    m = [v.copy() for v in state.first_moment]
    s = [v.copy() for v in state.second_moment]
    adam_step(tiny_net, state, [np.zeros_like(g) for g in grads])
    for old, new in zip(m, state.first_moment):
        np.testing.assert_allclose(new, state.beta1 * old)
    for old, new in zip(s, state.second_moment):
        np.testing.assert_allclose(new, state.beta2 * old)


@pytest.mark.parametrize("g", [3.0, -0.02])
def test_adam_first_step_moves_by_lr(g):
    """The bias-corrected first update is -lr * g / (|g| + eps)"""
    net = EpsilonNet(1, hidden_widths=[], time_embed_dim=2)
    state = AdamState.for_net(net, lr=0.01)
    before = net.weights[0].copy()
    grads = [np.full_like(p, g) for p in net.parameters()]
    adam_step(net, state, grads)
    np.testing.assert_allclose(
        net.weights[0] - before, -0.01 * np.sign(g), rtol=1e-5
    )


def test_adam_is_deterministic():
    nets = [EpsilonNet(2, [4], 2, seed=0) for _ in range(2)]
    states = [AdamState.for_net(net) for net in nets]
    rng = np.random.default_rng(0)
    for _ in range(5):
        grads = [rng.standard_normal(p.shape) for p in nets[0].parameters()]
        for net, state in zip(nets, states):
            adam_step(net, state, [g.copy() for g in grads])
    for a, b in zip(nets[0].parameters(), nets[1].parameters()):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(states[0].first_moment, states[1].first_moment):
        np.testing.assert_array_equal(a, b)


def test_adam_rejects_mismatched_grads(tiny_net):
    state = AdamState.for_net(tiny_net)
    with pytest.raises(DimensionMismatchError, match="gradient shapes"):
        adam_step(tiny_net, state, [np.zeros(1)])


def test_adam_state_validation():
    with pytest.raises(InvalidParameterError, match="lr"):
        AdamState([], [], lr=0)


def test_single_layer_fits_a_linear_map():
    """Adam drives a one-layer net to an exact linear fit"""
    rng = np.random.default_rng(21)
    x = rng.standard_normal((64, 2))
    t_norm = rng.uniform(size=64)
    targets = x @ np.array([[0.5, -1.5], [2.0, 0.25]]).T + [0.1, -0.3]
    net = EpsilonNet(2, hidden_widths=[], time_embed_dim=2, seed=0)
    state = AdamState.for_net(net, lr=1e-2)
    for _ in range(5000):
        _, grads = net.loss_and_grads(x, t_norm, targets)
        adam_step(net, state, grads)
    loss, _ = net.loss_and_grads(x, t_norm, targets)
    assert loss < 1e-3
