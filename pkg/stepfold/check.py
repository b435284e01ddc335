"""
stepfold.check
==============

Invariant checks for checkpoints and the closed-form chain math.

``BundleTester`` works from the raw checkpoint document rather than a
loaded bundle, so that a corrupted file can still be inspected property by
property: each ``assert_*`` method rebuilds the pieces it needs and raises
``AssertionError`` naming the violated invariant. The module-level
functions are the numerical oracles the methods are built on.

"""

import numpy as np
from scipy import stats

from .exceptions import StepfoldError
from .persistence import (
    bundle_to_document,
    check_version,
    net_from_document,
    phi_from_document,
    schedule_from_document,
)
from .process import (
    forward_step_params,
    marginal_params,
    net_epsilon,
    posterior_params,
    posterior_variance,
    reverse_params,
    teacher_forward_params,
    teacher_reverse_mean,
)
from .schedule import identity_subsequence


def composed_forward_moments(schedule, phi, t, x0, n_draws, rng):
    """Moments of x_t reached by composing forward steps 1..t from `x0`.

    Returns
    -------
    mean : array of shape (d,)
    variance : array of shape (d,)
        Per-coordinate sample mean and (unbiased) variance of the draws.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    x = np.tile(x0, (int(n_draws), 1))
    for step in range(1, int(t) + 1):
        params = forward_step_params(schedule, phi, step, x)
        x = params.mean + np.sqrt(params.variance) * rng.standard_normal(
            x.shape
        )
    return x.mean(axis=0), x.var(axis=0, ddof=1)


def marginal_z_scores(schedule, phi, t, x0, n_draws, rng):
    """Standard errors separating composed and closed-form moments.

    Returns the largest deviation of the sample mean and of the sample
    variance from ``marginal_params``, each in units of its standard error.
    """
    mean, variance = composed_forward_moments(
        schedule, phi, t, x0, n_draws, rng
    )
    target = marginal_params(schedule, phi, t, x0)
    if target.variance == 0:
        return float(np.max(np.abs(mean - target.mean))), float(
            np.max(variance)
        )
    se_mean = np.sqrt(target.variance / n_draws)
    se_var = target.variance * np.sqrt(2.0 / (n_draws - 1))
    z_mean = np.max(np.abs(mean - target.mean)) / se_mean
    z_var = np.max(np.abs(variance - target.variance)) / se_var
    return float(z_mean), float(z_var)


def bayes_log_density_gap(schedule, phi, t, x_t, x0, grid):
    """Largest log-density gap between the posterior and Bayes' rule.

    On a 1-D grid of x_{t-1} values, compares log q'(x_{t-1} | x_t, x_0)
    with log q'(x_t | x_{t-1}) + log q'(x_{t-1} | x_0) - log q'(x_t | x_0).
    Requires t >= 2 so that x_{t-1} given x_0 is not a point mass.
    """
    a_t = schedule.full[phi[t]]
    a_prev = schedule.full[phi[t - 1]]
    grid = np.asarray(grid, dtype=np.float64)
    forward_std = np.sqrt((a_prev - a_t) / a_prev)
    rhs = (
        stats.norm.logpdf(x_t, np.sqrt(a_t / a_prev) * grid, forward_std)
        + stats.norm.logpdf(grid, np.sqrt(a_prev) * x0, np.sqrt(1 - a_prev))
        - stats.norm.logpdf(x_t, np.sqrt(a_t) * x0, np.sqrt(1 - a_t))
    )
    posterior = posterior_params(schedule, phi, t, [x_t], [x0])
    lhs = posterior.log_density(grid[:, None])
    return float(np.max(np.abs(lhs - rhs)))


def grid_posterior_moments(schedule, phi, t, x_t, x0, n_grid=20001, width=12):
    """Posterior mean and variance of x_{t-1} by numerical Bayes.

    The unnormalized posterior q'(x_t | x_{t-1}) q'(x_{t-1} | x_0) is
    evaluated in log space on a grid spanning `width` prior standard
    deviations around the prior mean, then normalized.
    """
    a_t = schedule.full[phi[t]]
    a_prev = schedule.full[phi[t - 1]]
    prior_mean = np.sqrt(a_prev) * x0
    prior_std = np.sqrt(1 - a_prev)
    grid = np.linspace(
        prior_mean - width * prior_std, prior_mean + width * prior_std, n_grid
    )
    log_w = stats.norm.logpdf(
        x_t, np.sqrt(a_t / a_prev) * grid, np.sqrt((a_prev - a_t) / a_prev)
    ) + stats.norm.logpdf(grid, prior_mean, prior_std)
    w = np.exp(log_w - log_w.max())
    w /= w.sum()
    mean = np.sum(w * grid)
    return float(mean), float(np.sum(w * (grid - mean) ** 2))


def gradient_relative_errors(
    net,
    batch_x,
    batch_t_norm,
    targets,
    norm="l2",
    h=1e-5,
    n_entries=None,
    rng=None,
):
    """Central finite differences against ``loss_and_grads``.

    Parameters
    ----------
    net : EpsilonNet
        Parameters are perturbed in place and restored.
    n_entries : int, optional
        Entries checked per parameter array, drawn at random with `rng`;
        all entries when None.

    Returns
    -------
    list of float
        ``|g - g_fd| / (|g| + |g_fd|)`` (norms over the checked entries)
        for every parameter array, in the order of ``net.parameters()``.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    _, grads = net.loss_and_grads(batch_x, batch_t_norm, targets, norm)
    errors = []
    for param, grad in zip(net.parameters(), grads):
        flat, flat_grad = param.reshape(-1), grad.reshape(-1)
        if n_entries is None or n_entries >= flat.size:
            entries = np.arange(flat.size)
        else:
            entries = rng.choice(flat.size, int(n_entries), replace=False)
        numeric = np.empty(len(entries))
        for k, i in enumerate(entries):
            original = flat[i]
            flat[i] = original + h
            plus = net.loss_and_grads(batch_x, batch_t_norm, targets, norm)[0]
            flat[i] = original - h
            minus = net.loss_and_grads(batch_x, batch_t_norm, targets, norm)[
                0
            ]
            flat[i] = original
            numeric[k] = (plus - minus) / (2 * h)
        analytic = flat_grad[entries]
        scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
        gap = np.linalg.norm(analytic - numeric)
        errors.append(float(gap / scale) if scale > 0 else 0.0)
    return errors


class _ZeroNet(object):
    def __init__(self, input_dim):
        self.input_dim = input_dim

    def forward(self, x, t_norm):
        return np.zeros_like(np.asarray(x, dtype=np.float64))


class BundleTester(object):
    """Runs invariant checks against a checkpoint document.

    Parameters
    ----------
    document : dict
        A parsed checkpoint (see ``persistence.bundle_to_document``).
    seed : int
        Seed of every random case the checks draw.
    """

    def __init__(self, document, seed=0):
        self.document = document
        self.seed = seed

    @classmethod
    def from_bundle(cls, bundle, seed=0):
        return cls(bundle_to_document(bundle), seed=seed)

    def _rng(self):
        return np.random.default_rng(self.seed)

    def _get(self, build, message):
        try:
            return build()
        except (StepfoldError, KeyError, TypeError) as e:
            raise AssertionError(message.format(e))

    @property
    def schedule(self):
        return self._get(
            lambda: schedule_from_document(self.document),
            "Schedule is invalid: {0}",
        )

    @property
    def phi(self):
        schedule = self.schedule
        return self._get(
            lambda: phi_from_document(self.document, schedule),
            "Sub-sequence is invalid: {0}",
        )

    @property
    def net(self):
        return self._get(
            lambda: net_from_document(self.document),
            "Network is invalid: {0}",
        )

    @property
    def input_dim(self):
        return self._get(
            lambda: int(self.document["net"]["input_dim"]),
            "Network is invalid: missing input_dim {0}",
        )

    def _steps(self, rng, n, low=1):
        return rng.integers(low, self.phi.T_prime + 1, n)

    def assert_format_version(
        self, message="Checkpoint format is not supported: {0}"
    ):
        """Asserts that the document declares format_version 1."""
        self._get(lambda: check_version(self.document), message)

    def assert_schedule_valid(self, message="Schedule is invalid: {0}"):
        """Asserts that alpha is non-empty, strictly decreasing, inside
        (0, 1] and that T matches its length."""
        self._get(lambda: schedule_from_document(self.document), message)

    def assert_phi_valid(self, message="Sub-sequence is invalid: {0}"):
        """Asserts that phi starts at 0, increases strictly and ends at T,
        and that a teacher checkpoint carries the identity."""
        phi = self.phi
        kind = self.document.get("kind")
        if kind not in ("teacher", "student"):
            raise AssertionError(
                message.format("unknown kind {0!r}".format(kind))
            )
        if kind == "teacher" and not phi.is_identity:
            raise AssertionError(
                message.format("a teacher must carry the identity")
            )

    def assert_net_valid(self, message="Network is invalid: {0}"):
        """Asserts that the layer shapes chain and every weight is
        finite."""
        self._get(lambda: net_from_document(self.document), message)

    def assert_marginal_composition(
        self,
        n_cases=3,
        n_draws=200000,
        n_se=4.0,
        message="Composed forward steps disagree with the marginal at "
        "t={0}: {1}",
    ):
        """Asserts that composing forward steps reproduces the marginal.

        For random (t, x0), x_t is drawn by applying the forward step t
        times from x0, and its sample mean and variance must lie within
        `n_se` standard errors of ``marginal_params``.
        """
        schedule, phi = self.schedule, self.phi
        d = self.input_dim
        rng = self._rng()
        for t in self._steps(rng, n_cases):
            x0 = rng.standard_normal(d)
            z_mean, z_var = marginal_z_scores(
                schedule, phi, t, x0, n_draws, rng
            )
            if z_mean > n_se or z_var > n_se:
                detail = "mean off by {0:.2f} SE, variance by {1:.2f} SE"
                raise AssertionError(
                    message.format(t, detail.format(z_mean, z_var))
                )

    def assert_posterior_mean(
        self,
        n_cases=100,
        tolerance=1e-12,
        message="Posterior mean of a noiseless point is not sqrt(a_prev) x0 "
        "at t={0}",
    ):
        """Asserts posterior mean at x_t = sqrt(a_t) x0 is sqrt(a_prev) x0.
        """
        schedule, phi = self.schedule, self.phi
        d = self.input_dim
        rng = self._rng()
        for t in self._steps(rng, n_cases):
            x0 = rng.standard_normal(d)
            a_t = schedule.full[phi[t]]
            a_prev = schedule.full[phi[t - 1]]
            mean = posterior_params(schedule, phi, t, np.sqrt(a_t) * x0, x0)[0]
            if not np.allclose(
                mean, np.sqrt(a_prev) * x0, rtol=tolerance, atol=tolerance
            ):
                raise AssertionError(message.format(t))

    def assert_posterior_bayes(
        self,
        n_cases=100,
        tolerance=1e-8,
        message="Posterior density breaks Bayes' rule at t={0}: log "
        "density gap {1:.3g}",
    ):
        """Asserts the posterior density equals forward x prior / evidence
        on a 1-D grid of x_{t-1}, for random t >= 2."""
        schedule, phi = self.schedule, self.phi
        if phi.T_prime < 2:
            return
        rng = self._rng()
        for t in self._steps(rng, n_cases, low=2):
            a_t = schedule.full[phi[t]]
            x0 = rng.standard_normal()
            x_t = np.sqrt(a_t) * x0 + np.sqrt(1 - a_t) * rng.standard_normal()
            posterior = posterior_params(schedule, phi, t, [x_t], [x0])
            std = np.sqrt(posterior.variance)
            grid = posterior.mean[0] + std * np.linspace(-4, 4, 41)
            gap = bayes_log_density_gap(schedule, phi, t, x_t, x0, grid)
            if gap > tolerance:
                raise AssertionError(message.format(t, gap))

    def assert_identity_degeneration(
        self,
        n_points=1000,
        tolerance=1e-10,
        message="Identity sub-sequence differs from the DDPM formulas at "
        "t={0}: {1}",
    ):
        """Asserts that with phi = identity the forward step, posterior
        variance and reverse mean equal the DDPM teacher formulas."""
        schedule, net = self.schedule, self.net
        identity = identity_subsequence(schedule.T)
        alpha = schedule.full
        rng = self._rng()
        for t in rng.integers(1, schedule.T + 1, n_points):
            x_prev = rng.standard_normal(net.input_dim)
            x_t = rng.standard_normal(net.input_dim)

            ours = forward_step_params(schedule, identity, t, x_prev)
            ddpm = teacher_forward_params(schedule, t, x_prev)
            if not (
                np.allclose(ours.mean, ddpm.mean, tolerance, tolerance)
                and np.isclose(ours.variance, ddpm.variance, tolerance, 0)
            ):
                raise AssertionError(message.format(t, "forward step"))

            beta = 1.0 - alpha[t] / alpha[t - 1]
            ddpm_var = (1.0 - alpha[t - 1]) / (1.0 - alpha[t]) * beta
            ours_var = posterior_variance(schedule, identity, t)
            if not np.isclose(ours_var, ddpm_var, tolerance, tolerance):
                raise AssertionError(message.format(t, "posterior variance"))

            eps = net_epsilon(net, identity, t, x_t)
            ours_mean = reverse_params(net, schedule, identity, t, x_t).mean
            ddpm_mean = teacher_reverse_mean(schedule, t, x_t, eps)
            if not np.allclose(ours_mean, ddpm_mean, tolerance, tolerance):
                raise AssertionError(message.format(t, "reverse mean"))

    def assert_reverse_variance(
        self,
        message="Reverse variance at t={0} is not the posterior variance "
        "{1}",
    ):
        """Asserts the reverse variance equals sigma'_t for every step and
        any network output, and that sigma'_t > 0 for t >= 2."""
        schedule, phi, net = self.schedule, self.phi, self.net
        rng = self._rng()
        zero = _ZeroNet(net.input_dim)
        for t in range(1, phi.T_prime + 1):
            sigma = posterior_variance(schedule, phi, t)
            x_t = rng.standard_normal(net.input_dim)
            for model in (net, zero):
                variance = reverse_params(model, schedule, phi, t, x_t)[1]
                if variance != sigma:
                    raise AssertionError(message.format(t, sigma))
            if t >= 2 and not sigma > 0:
                raise AssertionError(message.format(t, "(must be > 0)"))

    def assert_gradients(
        self,
        batch_size=8,
        n_entries=10,
        tolerance=1e-4,
        message="Gradient of parameter {0} disagrees with finite "
        "differences: relative error {1:.3g}",
    ):
        """Asserts reverse-mode gradients match central differences on a
        random batch, for `n_entries` random entries of every parameter."""
        net = self.net
        rng = self._rng()
        x = rng.standard_normal((batch_size, net.input_dim))
        t_norm = rng.uniform(0, 1, batch_size)
        targets = rng.standard_normal((batch_size, net.input_dim))
        errors = gradient_relative_errors(
            net, x, t_norm, targets, n_entries=n_entries, rng=rng
        )
        for i, error in enumerate(errors):
            if error > tolerance:
                name = "{0}{1}".format("Wb"[i % 2], i // 2)
                raise AssertionError(message.format(name, error))

    def checks(self):
        """(method, description) pairs in the order they are reported."""
        return [
            (self.assert_format_version, "format version"),
            (self.assert_schedule_valid, "schedule"),
            (self.assert_phi_valid, "sub-sequence"),
            (self.assert_net_valid, "network"),
            (self.assert_marginal_composition, "marginal composition"),
            (self.assert_posterior_mean, "posterior mean"),
            (self.assert_posterior_bayes, "posterior Bayes identity"),
            (self.assert_identity_degeneration, "identity degeneration"),
            (self.assert_reverse_variance, "reverse variance"),
            (self.assert_gradients, "gradients"),
        ]
