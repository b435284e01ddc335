"""
stepfold.process
================

Closed-form Gaussian math of the teacher and student chains.

Every function takes the teacher schedule and a sub-sequence ``phi`` and
works on student step ``t``; the teacher is the case ``phi = identity``.
With ``a_t = alpha[phi_t]`` and ``a_prev = alpha[phi_{t-1}]``:

* forward step  q'(x_t | x_{t-1}) = N(sqrt(a_t/a_prev) x_{t-1}, 1 - a_t/a_prev)
* marginal      q'(x_t | x_0) = N(sqrt(a_t) x_0, 1 - a_t)
* posterior     q'(x_{t-1} | x_t, x_0)
* reverse step  p'(x_{t-1} | x_t), the posterior with x_0 predicted

Vectors may be a single point of shape ``(d,)`` or a batch ``(n, d)``.
All variances are isotropic scalars.

"""

from collections import namedtuple

import numpy as np

from .exceptions import DegenerateStepError, StepOutOfRangeError
from .schedule import check_pair


class GaussianParams(namedtuple("GaussianParams", ["mean", "variance"])):
    """Isotropic Gaussian N(mean, variance * I)."""

    __slots__ = ()

    def log_density(self, x):
        """Log density at `x`; last axis is the data dimension."""
        x = np.asarray(x, dtype=np.float64)
        d = x.shape[-1] if x.ndim else 1
        sq = np.sum(np.atleast_1d(x - self.mean) ** 2, axis=-1)
        log_norm = d * np.log(2 * np.pi * self.variance)
        return -0.5 * (log_norm + sq / self.variance)


def _step_alphas(schedule, phi, t, low=1):
    check_pair(schedule, phi)
    if int(t) != t or not low <= t <= phi.T_prime:
        raise StepOutOfRangeError(
            "step t={0} outside [{1}, {2}]".format(t, low, phi.T_prime)
        )
    t = int(t)
    a_t = schedule.full[phi[t]]
    a_prev = schedule.full[phi[t - 1]] if t >= 1 else 1.0
    return a_t, a_prev


def _as_array(x):
    return np.asarray(x, dtype=np.float64)


def forward_step_params(schedule, phi, t, x_prev):
    """Parameters of q'(x_t | x_{t-1}).

    Parameters
    ----------
    schedule : AlphaSchedule
    phi : SubSequence
    t : int
        Student step, 1 <= t <= T'.
    x_prev : array
        The state x_{t-1}.

    Returns
    -------
    GaussianParams
        mean sqrt(a_t/a_prev) x_prev, variance 1 - a_t/a_prev
    """
    a_t, a_prev = _step_alphas(schedule, phi, t)
    ratio = a_t / a_prev
    return GaussianParams(np.sqrt(ratio) * _as_array(x_prev), 1.0 - ratio)


def marginal_params(schedule, phi, t, x0):
    """Parameters of q'(x_t | x_0); t = 0 gives (x0, 0)."""
    a_t, _ = _step_alphas(schedule, phi, t, low=0)
    return GaussianParams(np.sqrt(a_t) * _as_array(x0), 1.0 - a_t)


def posterior_variance(schedule, phi, t):
    """sigma'_t = (1 - a_prev)(a_prev - a_t) / ((1 - a_t) a_prev)."""
    a_t, a_prev = _step_alphas(schedule, phi, t)
    if a_t == 1.0:
        raise DegenerateStepError("1 - a_t is zero at t={0}".format(t))
    return (1.0 - a_prev) * (a_prev - a_t) / ((1.0 - a_t) * a_prev)


def posterior_params(schedule, phi, t, x_t, x0):
    """Parameters of the forward posterior q'(x_{t-1} | x_t, x_0).

    Parameters
    ----------
    schedule : AlphaSchedule
    phi : SubSequence
    t : int
        Student step, 1 <= t <= T'.
    x_t, x0 : array
        Current state and clean sample.

    Returns
    -------
    GaussianParams

    Raises
    ------
    StepOutOfRangeError
        if t is outside [1, T']
    DegenerateStepError
        if a_t = 1
    """
    a_t, a_prev = _step_alphas(schedule, phi, t)
    if a_t == 1.0:
        raise DegenerateStepError("1 - a_t is zero at t={0}".format(t))
    denominator = (1.0 - a_t) * np.sqrt(a_prev)
    coef_xt = (1.0 - a_prev) * np.sqrt(a_t) / denominator
    coef_x0 = (a_prev - a_t) / denominator
    mean = coef_xt * _as_array(x_t) + coef_x0 * _as_array(x0)
    variance = (1.0 - a_prev) * (a_prev - a_t) / ((1.0 - a_t) * a_prev)
    return GaussianParams(mean, variance)


def net_epsilon(net, phi, t, x_t):
    """Evaluates the network at student step t, time input t / T'."""
    return net.forward(_as_array(x_t), t / float(phi.T_prime))


def predict_x0(net, schedule, phi, t, x_t, eps=None):
    """Estimate of x_0 from x_t and the predicted noise.

    (x_t - sqrt(1 - a_t) * eps_net(x_t, t)) / sqrt(a_t)

    `eps` may be passed when the network output is already at hand.
    """
    a_t, _ = _step_alphas(schedule, phi, t)
    x_t = _as_array(x_t)
    if eps is None:
        eps = net_epsilon(net, phi, t, x_t)
    return (x_t - np.sqrt(1.0 - a_t) * eps) / np.sqrt(a_t)


def reverse_params(net, schedule, phi, t, x_t):
    """Parameters of the reverse step p'(x_{t-1} | x_t).

    The forward posterior with x_0 replaced by ``predict_x0``; the variance
    is sigma'_t whatever the network returns.
    """
    x0_hat = predict_x0(net, schedule, phi, t, x_t)
    return posterior_params(schedule, phi, t, x_t, x0_hat)


def ddim_step(net, schedule, phi, t, x_t):
    """Deterministic update sqrt(a_prev) x0_hat + sqrt(1 - a_prev) eps."""
    _, a_prev = _step_alphas(schedule, phi, t)
    x_t = _as_array(x_t)
    eps = net_epsilon(net, phi, t, x_t)
    x0_hat = predict_x0(net, schedule, phi, t, x_t, eps=eps)
    return np.sqrt(a_prev) * x0_hat + np.sqrt(1.0 - a_prev) * eps


def gamma_weight(schedule, phi, t):
    """Loss weight of step t in the variational bound.

    gamma'_t = (a_prev - a_t)^2 / (2 sigma'_t a_t a_prev (1 - a_t))

    with sigma'_t the posterior variance. When sigma'_t is zero (the first
    step, a_prev = 1) the weight of the first step with a positive
    variance is used instead, and 1 when no such step exists.
    """
    _step_alphas(schedule, phi, t)
    for step in range(int(t), phi.T_prime + 1):
        a_t, a_prev = _step_alphas(schedule, phi, step)
        variance = posterior_variance(schedule, phi, step)
        if variance > 0:
            return (a_prev - a_t) ** 2 / (
                2.0 * variance * a_t * a_prev * (1.0 - a_t)
            )
    return 1.0


def gamma_weights(schedule, phi):
    """gamma'_t for t = 1..T' as an array of length T'."""
    return np.array(
        [gamma_weight(schedule, phi, t) for t in range(1, phi.T_prime + 1)]
    )


def posterior_kl(schedule, phi, t, x_t, x0, x0_hat):
    """KL(q'(x_{t-1} | x_t, x0) || q'(x_{t-1} | x_t, x0_hat)).

    Both Gaussians share the variance sigma'_t, so the divergence is
    ||mean difference||^2 / (2 sigma'_t), one value per row.

    Raises
    ------
    DegenerateStepError
        if sigma'_t is zero
    """
    target = posterior_params(schedule, phi, t, x_t, x0)
    model = posterior_params(schedule, phi, t, x_t, x0_hat)
    if target.variance <= 0:
        raise DegenerateStepError(
            "posterior variance is zero at t={0}".format(t)
        )
    sq = np.sum((target.mean - model.mean) ** 2, axis=-1)
    return sq / (2.0 * target.variance)


def teacher_forward_params(schedule, t, x_prev):
    """DDPM forward step q(x_t | x_{t-1}) written without a sub-sequence."""
    alpha = schedule.full
    ratio = alpha[t] / alpha[t - 1]
    return GaussianParams(np.sqrt(ratio) * _as_array(x_prev), 1.0 - ratio)


def teacher_reverse_mean(schedule, t, x_t, eps):
    """DDPM reverse mean in its noise form.

    mu = (x_t - (1 - alpha_t/alpha_{t-1}) / sqrt(1 - alpha_t) eps)
         / sqrt(alpha_t/alpha_{t-1})
    """
    alpha = schedule.full
    ratio = alpha[t] / alpha[t - 1]
    x_t = _as_array(x_t)
    return (x_t - (1.0 - ratio) / np.sqrt(1.0 - alpha[t]) * eps) / np.sqrt(
        ratio
    )
