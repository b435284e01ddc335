"""
stepfold.schedule
=================

Teacher noise schedules (the decreasing alpha sequence) and the student
step sub-sequences that map student steps onto teacher steps.

Both value types are immutable once built and are validated on
construction, so any schedule or sub-sequence that exists satisfies its
invariants.

"""

import numpy as np
from scipy.special import expit

from .exceptions import InvalidParameterError

ALPHA_MIN = 1e-5
ALPHA_GAP = 1e-8
PLATEAU_SLOPE = 1e-12


class AlphaSchedule(object):
    """The teacher's noise sequence alpha_1, ..., alpha_T.

    The convention alpha_0 = 1 is implicit: ``schedule.at(0)`` returns 1
    and ``schedule.full`` prepends it.

    Parameters
    ----------
    alpha : array-like of float
        Values alpha_1 .. alpha_T, strictly decreasing, in (0, 1].

    Raises
    ------
    InvalidParameterError
        if the sequence is empty, not strictly decreasing, or leaves (0, 1]
    """

    def __init__(self, alpha):
        alpha = np.array(alpha, dtype=np.float64).ravel()
        _validate_alpha(alpha)
        alpha.setflags(write=False)
        self._alpha = alpha
        full = np.concatenate([[1.0], alpha])
        full.setflags(write=False)
        self._full = full

    @property
    def T(self):
        return self._alpha.shape[0]

    @property
    def alpha(self):
        """alpha_1 .. alpha_T as a read-only array of length T."""
        return self._alpha

    @property
    def full(self):
        """alpha_0 .. alpha_T as a read-only array of length T + 1."""
        return self._full

    def at(self, index):
        """Returns alpha at teacher index (or array of indices) in 0..T."""
        index = np.asarray(index)
        if np.any(index < 0) or np.any(index > self.T):
            raise InvalidParameterError(
                "Teacher index must lie in [0, {0}]".format(self.T)
            )
        return self._full[index]

    def __eq__(self, other):
        if not isinstance(other, AlphaSchedule):
            return NotImplemented
        return np.array_equal(self._alpha, other._alpha)

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __repr__(self):
        return "AlphaSchedule(T={0}, alpha_T={1:.3g})".format(
            self.T, self._alpha[-1]
        )


class SubSequence(object):
    """Increasing teacher indices phi_0 = 0 < ... < phi_T' = T.

    Student step t corresponds to teacher step ``phi[t]``.

    Parameters
    ----------
    phi : array-like of int
        The sub-sequence, including both endpoints.

    Raises
    ------
    InvalidParameterError
        if phi has fewer than two entries, does not start at 0 or is not
        strictly increasing
    """

    def __init__(self, phi):
        raw = np.asarray(phi)
        if raw.size and not np.all(np.equal(np.mod(raw, 1), 0)):
            raise InvalidParameterError("phi must contain integers only")
        phi = raw.astype(np.int64).ravel()
        _validate_phi(phi)
        phi.setflags(write=False)
        self._phi = phi

    @property
    def phi(self):
        return self._phi

    @property
    def T_prime(self):
        return self._phi.shape[0] - 1

    @property
    def T(self):
        """The teacher step count this sub-sequence ends on."""
        return int(self._phi[-1])

    @property
    def is_identity(self):
        return self.T_prime == self.T

    def __getitem__(self, t):
        return self._phi[t]

    def __len__(self):
        return self._phi.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SubSequence):
            return NotImplemented
        return np.array_equal(self._phi, other._phi)

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __repr__(self):
        if self.T_prime <= 8:
            return "SubSequence({0})".format(self._phi.tolist())
        return "SubSequence(T={0}, T_prime={1})".format(
            self.T, self.T_prime
        )


def _validate_alpha(alpha):
    if alpha.shape[0] < 1:
        raise InvalidParameterError("alpha must hold at least one value")
    if not np.all(np.isfinite(alpha)):
        raise InvalidParameterError("alpha values must be finite")
    bad = np.flatnonzero((alpha <= 0) | (alpha > 1))
    if bad.size:
        t = bad[0] + 1
        raise InvalidParameterError(
            "alpha values must lie in (0, 1]: alpha[{0}]={1!r}".format(
                t, alpha[t - 1]
            )
        )
    full = np.concatenate([[1.0], alpha])
    bad = np.flatnonzero(np.diff(full) >= 0)
    if bad.size:
        t = bad[0] + 1
        raise InvalidParameterError(
            "alpha must be strictly decreasing: "
            "alpha[{0}]={1!r} >= alpha[{2}]={3!r}".format(
                t, full[t], t - 1, full[t - 1]
            )
        )


def _validate_phi(phi):
    if phi.shape[0] < 2:
        raise InvalidParameterError(
            "phi must hold at least the two endpoints"
        )
    if phi[0] != 0:
        raise InvalidParameterError(
            "phi must start at 0, found phi[0]={0}".format(phi[0])
        )
    bad = np.flatnonzero(np.diff(phi) <= 0)
    if bad.size:
        t = bad[0] + 1
        raise InvalidParameterError(
            "phi must be strictly increasing: "
            "phi[{0}]={1} <= phi[{2}]={3}".format(
                t, phi[t], t - 1, phi[t - 1]
            )
        )


def check_pair(schedule, phi):
    """Asserts that `phi` ends on the last step of `schedule`.

    Raises
    ------
    InvalidParameterError
        if phi_T' differs from schedule.T
    """
    if phi.T != schedule.T:
        raise InvalidParameterError(
            "phi must end at T={0} of the schedule, found phi_last={1}".format(
                schedule.T, phi.T
            )
        )


def make_sigmoid_schedule(
    T, start=-3.0, end=3.0, tau=1.0, alpha_min=ALPHA_MIN, alpha_gap=ALPHA_GAP
):
    """Builds the normalized-logistic ("sigmoid") schedule.

    alpha_t = (sig(-((t/T)(end-start)+start)/tau) - sig(-end/tau))
              / (sig(-start/tau) - sig(-end/tau)),

    clamped into [alpha_min, 1 - alpha_gap]. If clamping produces a
    plateau, t * 1e-12 is subtracted from every alpha_t so the sequence is
    strictly decreasing again.

    Parameters
    ----------
    T : int
        Number of teacher steps, at least 2.
    start, end : float
        Logistic input range, start < end.
    tau : float
        Temperature, positive.
    alpha_min : float
        Clamp floor.
    alpha_gap : float
        Distance of the clamp ceiling from 1.

    Returns
    -------
    AlphaSchedule
    """
    if int(T) != T or T < 2:
        raise InvalidParameterError("T must be an integer >= 2")
    if not start < end:
        raise InvalidParameterError("start must be smaller than end")
    if not tau > 0:
        raise InvalidParameterError("tau must be positive")
    if not 0 < alpha_min < 1 - alpha_gap <= 1:
        raise InvalidParameterError(
            "clamp range [alpha_min, 1 - alpha_gap] must lie in (0, 1]"
        )
    T = int(T)
    t = np.arange(1, T + 1, dtype=np.float64)
    v_end = expit(-end / tau)
    numerator = expit(-((t / T) * (end - start) + start) / tau) - v_end
    alpha = numerator / (expit(-start / tau) - v_end)
    alpha = np.clip(alpha, alpha_min, 1.0 - alpha_gap)
    if np.any(np.diff(np.concatenate([[1.0], alpha])) >= 0):
        alpha = alpha - t * PLATEAU_SLOPE
    return AlphaSchedule(alpha)


def make_linear_beta_schedule(T, beta1=1e-4, betaT=0.02):
    """Builds the DDPM linear-beta schedule, alpha_t = prod (1 - beta_s).

    Parameters
    ----------
    T : int
        Number of teacher steps, at least 1.
    beta1, betaT : float
        First and last beta, 0 < beta1 <= betaT < 1.

    Returns
    -------
    AlphaSchedule
    """
    if int(T) != T or T < 1:
        raise InvalidParameterError("T must be a positive integer")
    if not 0 < beta1 <= betaT < 1:
        raise InvalidParameterError(
            "betas must satisfy 0 < beta1 <= betaT < 1"
        )
    betas = np.linspace(beta1, betaT, int(T), dtype=np.float64)
    return AlphaSchedule(np.cumprod(1.0 - betas))


def uniform_subsequence(T, T_prime):
    """Evenly spaced sub-sequence phi_t = round(t * T / T_prime).

    Rounding is half-up. Colliding indices are bumped upward by one so the
    result stays strictly increasing; the endpoints are 0 and T.

    Parameters
    ----------
    T : int
        Teacher step count.
    T_prime : int
        Student step count, 1 <= T_prime <= T.

    Returns
    -------
    SubSequence
    """
    if int(T) != T or int(T_prime) != T_prime:
        raise InvalidParameterError("T and T_prime must be integers")
    T, T_prime = int(T), int(T_prime)
    if T < 1 or not 1 <= T_prime <= T:
        raise InvalidParameterError(
            "T_prime must satisfy 1 <= T_prime <= T, got T={0}, "
            "T_prime={1}".format(T, T_prime)
        )
    t = np.arange(T_prime + 1, dtype=np.float64)
    phi = np.floor(t * T / T_prime + 0.5).astype(np.int64)
    phi[0], phi[-1] = 0, T
    for i in range(1, T_prime + 1):
        if phi[i] <= phi[i - 1]:
            phi[i] = phi[i - 1] + 1
    if phi[-1] != T:
        raise InvalidParameterError(
            "could not place {0} steps in [0, {1}]".format(T_prime, T)
        )
    return SubSequence(phi)


def identity_subsequence(T):
    """phi_t = t, the sub-sequence carried by a teacher bundle."""
    return SubSequence(np.arange(int(T) + 1))


def concentrated_subsequence(T, T_prime, fraction, window, seed=0):
    """Sub-sequence with a share of its steps packed around the midpoint.

    ``floor(fraction * T_prime)`` interior indices are drawn without
    replacement from the integers in [T/2 (1 - window), T/2 (1 + window)];
    the remaining interior indices are drawn from the integers of
    [1, T - 1] not chosen yet. With ``fraction=0`` this is the "scattered"
    sub-sequence.

    Parameters
    ----------
    T, T_prime : int
        Teacher and student step counts, T_prime <= T.
    fraction : float
        Share of the student steps placed in the window, in [0, 1].
    window : float
        Relative half-width of the window around T/2, in (0, 1].
    seed : int
        Seed of the draw; equal seeds give equal sub-sequences.

    Returns
    -------
    SubSequence

    Raises
    ------
    InvalidParameterError
        if the window cannot host the requested number of indices
    """
    if int(T) != T or int(T_prime) != T_prime:
        raise InvalidParameterError("T and T_prime must be integers")
    T, T_prime = int(T), int(T_prime)
    if T < 1 or not 1 <= T_prime <= T:
        raise InvalidParameterError("T_prime must satisfy 1 <= T_prime <= T")
    if not 0 <= fraction <= 1:
        raise InvalidParameterError("fraction must lie in [0, 1]")
    if not 0 < window <= 1:
        raise InvalidParameterError("window must lie in (0, 1]")

    n_interior = T_prime - 1
    n_window = min(int(np.floor(fraction * T_prime)), n_interior)
    low = max(int(np.ceil(T / 2.0 * (1 - window))), 1)
    high = min(int(np.floor(T / 2.0 * (1 + window))), T - 1)
    window_pool = np.arange(low, high + 1)
    if window_pool.shape[0] < n_window:
        raise InvalidParameterError(
            "window [{0}, {1}] holds {2} indices, {3} requested".format(
                low, high, window_pool.shape[0], n_window
            )
        )

    rng = np.random.default_rng(seed)
    chosen = rng.choice(window_pool, size=n_window, replace=False)
    rest_pool = np.setdiff1d(np.arange(1, T), chosen)
    rest = rng.choice(rest_pool, size=n_interior - n_window, replace=False)
    interior = np.sort(np.concatenate([chosen, rest]).astype(np.int64))
    return SubSequence(np.concatenate([[0], interior, [T]]))


def parse_phi(text):
    """Parses a comma separated list of teacher indices into a SubSequence."""
    try:
        values = [int(v) for v in text.replace("\n", ",").split(",") if v]
    except ValueError:
        raise InvalidParameterError(
            "phi must be a comma separated list of integers: {0!r}".format(
                text
            )
        )
    return SubSequence(values)


def make_subsequence(T, T_prime, mode="uniform", seed=0):
    """Builds a sub-sequence from a mode string.

    Parameters
    ----------
    T, T_prime : int
        Teacher and student step counts.
    mode : string
        One of ``"uniform"``, ``"scattered"`` or
        ``"concentrated:<fraction>,<window>"``.
    seed : int
        Seed for the random modes.

    Returns
    -------
    SubSequence
    """
    if mode == "uniform":
        return uniform_subsequence(T, T_prime)
    if mode == "scattered":
        return concentrated_subsequence(T, T_prime, 0.0, 1.0, seed=seed)
    if mode.startswith("concentrated:"):
        try:
            values = mode.split(":", 1)[1].split(",")
            fraction, window = [float(v) for v in values]
        except ValueError:
            raise InvalidParameterError(
                "concentrated mode must read concentrated:<fraction>,<window>"
            )
        return concentrated_subsequence(T, T_prime, fraction, window, seed)
    raise InvalidParameterError(
        "mode must be uniform, scattered or concentrated:<fraction>,<window>"
    )
