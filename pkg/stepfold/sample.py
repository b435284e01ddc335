"""
stepfold.sample
===============

Sampling from a trained bundle: the stochastic ancestral sampler, the
deterministic DDIM-style sampler used for teacher/student pair
correspondence, forward-chain trajectories and interpolation between two
initial noises.

Every chain of the ancestral sampler draws its noise from its own
generator, derived from ``(seed, chain index)``, so the output for a chain
does not depend on how many other chains are sampled alongside it.

"""

import logging
import warnings

import numpy as np

from .exceptions import (
    DegenerateInterpolationWarning,
    DimensionMismatchError,
    InvalidParameterError,
)
from .process import ddim_step, forward_step_params, reverse_params

logger = logging.getLogger(__name__)

NOISE_SCALES = ("stddev", "raw")
ANTIPARALLEL_TOL = 1e-9


def chain_noise(seed, n, T_prime, d):
    """Standard normal draws of shape (T' + 1, n, d), one stream per chain.

    Row 0 is the initial state x_{T'}; row t is the noise of reverse step t.
    """
    children = np.random.SeedSequence(seed).spawn(n)
    draws = np.empty((T_prime + 1, n, d))
    for i, child in enumerate(children):
        draws[:, i, :] = np.random.default_rng(child).standard_normal(
            (T_prime + 1, d)
        )
    return draws


def ancestral_sample(
    bundle, n, seed=0, noise_scale="stddev", return_trajectory=False
):
    """Draws `n` samples with the stochastic reverse chain.

    x_{T'} ~ N(0, I); for t = T', ..., 1 the state moves to the reverse
    mean plus scaled noise, with no noise at the last step (t = 1).

    Parameters
    ----------
    bundle : ModelBundle
    n : int
        Number of samples, >= 1.
    seed : int
    noise_scale : string
        ``"stddev"`` scales the noise by sqrt(sigma'_t), the standard
        deviation of the reverse step. ``"raw"`` scales it by sigma'_t
        itself.
    return_trajectory : boolean
        Also return every state of the chain.

    Returns
    -------
    samples : array of shape (n, d)
    trajectory : array of shape (T' + 1, n, d)
        States x_{T'}, ..., x_0; only if `return_trajectory` is True.
    """
    if int(n) != n or n < 1:
        raise InvalidParameterError("n must be a positive integer")
    if noise_scale not in NOISE_SCALES:
        raise InvalidParameterError(
            "noise_scale must be 'stddev' or 'raw', got {0!r}".format(
                noise_scale
            )
        )
    T_prime = bundle.phi.T_prime
    noise = chain_noise(seed, int(n), T_prime, bundle.input_dim)
    logger.debug("ancestral sampling of %d chains over %d steps", n, T_prime)

    x = noise[0]
    states = [x]
    for t in range(T_prime, 0, -1):
        params = reverse_params(bundle.net, bundle.schedule, bundle.phi, t, x)
        if t > 1:
            if noise_scale == "stddev":
                scale = np.sqrt(params.variance)
            else:
                scale = params.variance
            x = params.mean + scale * noise[t]
        else:
            x = params.mean
        states.append(x)

    if return_trajectory:
        return x, np.stack(states)
    return x


def ddim_sample(bundle, init_noise, return_trajectory=False):
    """Deterministic reverse chain from the given initial noise.

    The output is a pure function of `init_noise`, which is what makes a
    teacher and a student comparable sample by sample.

    Parameters
    ----------
    bundle : ModelBundle
    init_noise : array of shape (n, d)
    return_trajectory : boolean
        Also return every state of the chain.

    Returns
    -------
    samples : array of shape (n, d)
    trajectory : array of shape (T' + 1, n, d)
        Only if `return_trajectory` is True.

    Raises
    ------
    DimensionMismatchError
        if the noise dimension differs from the bundle's
    """
    x = np.atleast_2d(np.asarray(init_noise, dtype=np.float64))
    if x.ndim != 2 or x.shape[1] != bundle.input_dim:
        raise DimensionMismatchError(
            "init_noise has shape {0}, expected (n, {1})".format(
                np.shape(init_noise), bundle.input_dim
            )
        )
    states = [x]
    for t in range(bundle.phi.T_prime, 0, -1):
        x = ddim_step(bundle.net, bundle.schedule, bundle.phi, t, x)
        states.append(x)
    if return_trajectory:
        return x, np.stack(states)
    return x


def forward_trajectory(schedule, phi, x0, seed=0):
    """Runs the forward chain one step at a time from `x0`.

    Returns
    -------
    array of shape (T' + 1, n, d)
        States x_0, ..., x_{T'}.
    """
    rng = np.random.default_rng(seed)
    x = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    states = [x]
    for t in range(1, phi.T_prime + 1):
        params = forward_step_params(schedule, phi, t, x)
        x = params.mean + np.sqrt(params.variance) * rng.standard_normal(
            x.shape
        )
        states.append(x)
    return np.stack(states)


def interpolate_noises(a, b, k=8):
    """Spherical interpolation between two noise vectors.

    Rows are taken at k evenly spaced angles from `a` to `b`; the first and
    last rows are `a` and `b` exactly.

    Parameters
    ----------
    a, b : array of shape (d,)
    k : int
        Number of rows, >= 2.

    Returns
    -------
    array of shape (k, d)

    Warns
    -----
    DegenerateInterpolationWarning
        if `a` and `b` point in opposite directions, where the great circle
        is not unique; linear interpolation is used instead.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatchError(
            "a and b differ in shape: {0} vs {1}".format(a.shape, b.shape)
        )
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidParameterError("noise vectors must be finite")
    if int(k) != k or k < 2:
        raise InvalidParameterError("k must be an integer >= 2")
    k = int(k)
    s = np.linspace(0.0, 1.0, k)[:, None]

    if np.array_equal(a, b):
        return np.tile(a, (k, 1))

    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        rows = (1.0 - s) * a + s * b
    else:
        unit_a, unit_b = a / norm_a, b / norm_b
        opposite = np.linalg.norm(unit_a + unit_b)
        # arccos of the cosine loses precision near pi
        theta = 2.0 * np.arctan2(np.linalg.norm(unit_a - unit_b), opposite)
        if opposite < ANTIPARALLEL_TOL:
            warnings.warn(
                "a and b are antiparallel; falling back to linear "
                "interpolation",
                DegenerateInterpolationWarning,
            )
            rows = (1.0 - s) * a + s * b
        elif theta == 0:
            rows = (1.0 - s) * a + s * b
        else:
            rows = (
                np.sin((1.0 - s) * theta) * a + np.sin(s * theta) * b
            ) / np.sin(theta)
    rows[0], rows[-1] = a, b
    return rows
