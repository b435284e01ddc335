"""
stepfold.net
============

The noise-prediction network shared by teachers and students: a small
MLP over the concatenation of the data point and a sinusoidal embedding
of the normalized step, with hand-written reverse-mode gradients and an
Adam optimizer.

Weights follow the row-major convention ``W[out, in]``, so a layer maps
``h -> h @ W.T + b``.

"""

import numpy as np
from scipy.special import expit

from .exceptions import (
    DimensionMismatchError,
    InvalidParameterError,
    NonFiniteLossError,
)

GELU_SCALE = 1.702
MAX_FREQUENCY = 1e4


def _quick_gelu(z):
    return z * expit(GELU_SCALE * z)


def _quick_gelu_grad(z):
    s = expit(GELU_SCALE * z)
    return s + GELU_SCALE * z * s * (1.0 - s)


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z):
    return (z > 0).astype(np.float64)


def _tanh_grad(z):
    return 1.0 - np.tanh(z) ** 2


ACTIVATIONS = {
    "quick_gelu": (_quick_gelu, _quick_gelu_grad),
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
}


def time_embedding(t_norm, dim):
    """Sinusoidal features of the normalized step.

    Half of the features are ``sin(t * f)`` and half ``cos(t * f)`` for
    frequencies f spaced geometrically from 1 to 1e4.

    Parameters
    ----------
    t_norm : array of shape (n,)
        Normalized steps in [0, 1].
    dim : int
        Embedding size, positive and even.

    Returns
    -------
    array of shape (n, dim)
    """
    t_norm = np.asarray(t_norm, dtype=np.float64).reshape(-1, 1)
    freqs = np.geomspace(1.0, MAX_FREQUENCY, dim // 2)
    angles = t_norm * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


class EpsilonNet(object):
    """MLP predicting the noise component of a noised sample.

    Parameters
    ----------
    input_dim : int
        Data dimension d; also the output dimension.
    hidden_widths : sequence of int
        Widths of the hidden layers. An empty sequence gives a single
        linear layer.
    time_embed_dim : int
        Size of the sinusoidal time embedding, positive and even.
    activation : string
        One of ``"quick_gelu"`` (x * sig(1.702 x)), ``"relu"``, ``"tanh"``.
    seed : int
        Seed of the Glorot-uniform weight initialization. Biases start at
        zero.
    """

    def __init__(
        self,
        input_dim,
        hidden_widths=(128, 128, 128),
        time_embed_dim=32,
        activation="quick_gelu",
        seed=0,
    ):
        self.input_dim = int(input_dim)
        self.hidden_widths = [int(w) for w in hidden_widths]
        self.time_embed_dim = int(time_embed_dim)
        self.activation = activation
        self._check_architecture()

        rng = np.random.default_rng(seed)
        self.weights, self.biases = [], []
        sizes = self.layer_sizes
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, (fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))

    @classmethod
    def from_parameters(
        cls,
        input_dim,
        hidden_widths,
        time_embed_dim,
        activation,
        weights,
        biases,
    ):
        """Builds a network from explicit weight matrices and biases.

        Raises
        ------
        DimensionMismatchError
            if the layer shapes do not chain
        InvalidParameterError
            if the architecture or a parameter value is invalid
        """
        net = cls.__new__(cls)
        net.input_dim = int(input_dim)
        net.hidden_widths = [int(w) for w in hidden_widths]
        net.time_embed_dim = int(time_embed_dim)
        net.activation = activation
        net._check_architecture()
        sizes = net.layer_sizes
        if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
            raise DimensionMismatchError(
                "expected {0} layers, got {1} weights and {2} biases".format(
                    len(sizes) - 1, len(weights), len(biases)
                )
            )
        net.weights, net.biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            w = np.array(weights[i], dtype=np.float64)
            b = np.array(biases[i], dtype=np.float64)
            if w.shape != (fan_out, fan_in) or b.shape != (fan_out,):
                raise DimensionMismatchError(
                    "layer {0}: expected weight {1} and bias {2}, got {3} "
                    "and {4}".format(
                        i, (fan_out, fan_in), (fan_out,), w.shape, b.shape
                    )
                )
            net.weights.append(w)
            net.biases.append(b)
        if not net.is_finite():
            raise InvalidParameterError("network parameters must be finite")
        return net

    def _check_architecture(self):
        if self.input_dim < 1:
            raise InvalidParameterError("input_dim must be positive")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2:
            raise InvalidParameterError(
                "time_embed_dim must be a positive even integer"
            )
        if any(w < 1 for w in self.hidden_widths):
            raise InvalidParameterError("hidden widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise InvalidParameterError(
                "activation must be one of {0}".format(sorted(ACTIVATIONS))
            )

    @property
    def layer_sizes(self):
        return (
            [self.input_dim + self.time_embed_dim]
            + self.hidden_widths
            + [self.input_dim]
        )

    def parameters(self):
        """Parameters in the order W_0, b_0, W_1, b_1, ... (references)."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    @property
    def n_parameters(self):
        return sum(p.size for p in self.parameters())

    def is_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def copy(self):
        return EpsilonNet.from_parameters(
            self.input_dim,
            self.hidden_widths,
            self.time_embed_dim,
            self.activation,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def _inputs(self, x, t_norm):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionMismatchError(
                "expected inputs of dimension {0}, got shape {1}".format(
                    self.input_dim, np.shape(x)
                )
            )
        t_norm = np.broadcast_to(
            np.asarray(t_norm, dtype=np.float64), (x.shape[0],)
        )
        if np.any(t_norm < 0) or np.any(t_norm > 1):
            raise InvalidParameterError("t_norm must lie in [0, 1]")
        h = np.concatenate(
            [x, time_embedding(t_norm, self.time_embed_dim)], axis=1
        )
        return h, single

    def _forward_layers(self, h):
        act = ACTIVATIONS[self.activation][0]
        inputs, pre = [h], []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            pre.append(z)
            if i < last:
                h = act(z)
                inputs.append(h)
        return inputs, pre

    def forward(self, x, t_norm):
        """Evaluates eps(x, t_norm).

        Parameters
        ----------
        x : array of shape (d,) or (n, d)
        t_norm : float or array of shape (n,)
            Normalized step in [0, 1].

        Returns
        -------
        array of the same shape as `x`

        Raises
        ------
        DimensionMismatchError
            if x does not have dimension d
        """
        h, single = self._inputs(x, t_norm)
        out = self._forward_layers(h)[1][-1]
        return out[0] if single else out

    __call__ = forward

    def loss_and_grads(
        self, batch_x, batch_t_norm, targets, norm="l2", weights=None
    ):
        """Batch regression loss and its exact gradients.

        loss = mean_i w_i * ||targets_i - eps(x_i, t_i)||, with the squared
        Euclidean norm for ``"l2"`` and the sum of absolute values for
        ``"l1"``. Sample weights default to one.

        Parameters
        ----------
        batch_x : array of shape (n, d)
        batch_t_norm : array of shape (n,)
        targets : array of shape (n, d)
        norm : string
            ``"l1"`` or ``"l2"``.
        weights : array of shape (n,), optional
            Per-sample loss weights.

        Returns
        -------
        loss : float
        grads : list of arrays
            Gradients in the order of ``parameters()``.

        Raises
        ------
        DimensionMismatchError
            if the batch shapes disagree
        NonFiniteLossError
            if the loss is not finite
        """
        h, _ = self._inputs(np.atleast_2d(batch_x), batch_t_norm)
        targets = np.asarray(targets, dtype=np.float64)
        n = h.shape[0]
        if targets.shape != (n, self.input_dim):
            raise DimensionMismatchError(
                "targets must have shape {0}, got {1}".format(
                    (n, self.input_dim), targets.shape
                )
            )
        inputs, pre = self._forward_layers(h)
        loss, dz = regression_loss(pre[-1] - targets, norm, weights)

        act_grad = ACTIVATIONS[self.activation][1]
        grads_w, grads_b = [], []
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w.append(dz.T @ inputs[i])
            grads_b.append(dz.sum(axis=0))
            if i > 0:
                dz = (dz @ self.weights[i]) * act_grad(pre[i - 1])
        grads = []
        for gw, gb in zip(reversed(grads_w), reversed(grads_b)):
            grads.extend([gw, gb])
        return loss, grads


def regression_loss(residual, norm="l2", weights=None):
    """Weighted mean per-sample norm of `residual` and its gradient.

    Parameters
    ----------
    residual : array of shape (n, d)
        Network output minus target.
    norm : string
        ``"l2"`` for the squared Euclidean norm, ``"l1"`` for the sum of
        absolute values.
    weights : array of shape (n,), optional

    Returns
    -------
    loss : float
    grad : array of shape (n, d)
        Derivative of the loss with respect to the output.
    """
    residual = np.atleast_2d(residual)
    n = residual.shape[0]
    if weights is None:
        weights = np.ones(n)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (n,):
        raise DimensionMismatchError("weights must have shape (n,)")
    if norm == "l2":
        per_sample = np.sum(residual ** 2, axis=1)
        grad = 2.0 * residual
    elif norm == "l1":
        per_sample = np.sum(np.abs(residual), axis=1)
        grad = np.sign(residual)
    else:
        raise InvalidParameterError("norm must be 'l1' or 'l2'")
    loss = float(np.mean(weights * per_sample))
    if not np.isfinite(loss):
        raise NonFiniteLossError(None, None, loss)
    return loss, grad * (weights / n)[:, None]


def net_forward(net, x, t_norm):
    """Functional form of ``EpsilonNet.forward``."""
    return net.forward(x, t_norm)


def loss_and_grads(
    net, batch_x, batch_t_norm, targets, norm="l2", weights=None
):
    """Functional form of ``EpsilonNet.loss_and_grads``."""
    return net.loss_and_grads(batch_x, batch_t_norm, targets, norm, weights)


class AdamState(object):
    """Moments and hyper-parameters of an Adam optimizer.

    Parameters
    ----------
    first_moment, second_moment : list of arrays
        Shaped like ``net.parameters()``.
    lr, beta1, beta2, eps : float
        Adam hyper-parameters.
    step_count : int
        Number of updates applied so far.
    """

    def __init__(
        self,
        first_moment,
        second_moment,
        lr=2e-4,
        beta1=0.9,
        beta2=0.999,
        eps=1e-8,
        step_count=0,
    ):
        if not lr > 0:
            raise InvalidParameterError("lr must be positive")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise InvalidParameterError("betas must lie in [0, 1)")
        self.first_moment = first_moment
        self.second_moment = second_moment
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = step_count

    @classmethod
    def for_net(cls, net, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        """Zero-initialized state matching the parameters of `net`."""
        params = net.parameters()
        return cls(
            [np.zeros_like(p) for p in params],
            [np.zeros_like(p) for p in params],
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )

    def copy(self):
        return AdamState(
            [m.copy() for m in self.first_moment],
            [v.copy() for v in self.second_moment],
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
            self.step_count,
        )


def adam_step(net, state, grads):
    """Applies one bias-corrected Adam update to `net` in place.

    Parameters
    ----------
    net : EpsilonNet
    state : AdamState
    grads : list of arrays
        Gradients in the order of ``net.parameters()``.

    Returns
    -------
    net, state : the updated (same) objects

    Raises
    ------
    DimensionMismatchError
        if a gradient shape differs from its parameter
    """
    params = net.parameters()
    if len(grads) != len(params) or any(
        g.shape != p.shape for g, p in zip(grads, params)
    ):
        raise DimensionMismatchError(
            "gradient shapes do not match the network parameters"
        )
    state.step_count += 1
    correction1 = 1.0 - state.beta1 ** state.step_count
    correction2 = 1.0 - state.beta2 ** state.step_count
    for p, g, m, v in zip(
        params, grads, state.first_moment, state.second_moment
    ):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / correction1) / (
            np.sqrt(v / correction2) + state.eps
        )
    return net, state
