"""
stepfold.evaluate
=================

Two-sample distances for low-dimensional sample sets and the
teacher/student consistency score.

"""

import logging

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import (
    DimensionMismatchError,
    InsufficientSamplesError,
    InvalidParameterError,
)
from .sample import ddim_sample

logger = logging.getLogger(__name__)

DEFAULT_BLOCK = 2048
DEFAULT_PROJECTIONS = 64


def _check_pair(A, B):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatchError(
            "sample sets differ in dimension: {0} vs {1}".format(
                A.shape[1], B.shape[1]
            )
        )
    if A.shape[0] < 2 or B.shape[0] < 2:
        raise InsufficientSamplesError(
            "need at least 2 samples per set, got {0} and {1}".format(
                A.shape[0], B.shape[0]
            )
        )
    return A, B


def mean_pairwise_distance(A, B, block_size=DEFAULT_BLOCK):
    """Mean Euclidean distance over all pairs (a, b), computed in blocks.

    Blocks are reduced in a fixed order, so the result does not depend on
    how the work is split.
    """
    total = 0.0
    for i in range(0, A.shape[0], block_size):
        row_total = 0.0
        for j in range(0, B.shape[0], block_size):
            row_total += cdist(
                A[i : i + block_size], B[j : j + block_size]
            ).sum()
        total += row_total
    return total / (A.shape[0] * B.shape[0])


def energy_distance(A, B, block_size=DEFAULT_BLOCK):
    """Energy distance 2 E|a - b| - E|a - a'| - E|b - b'|.

    Expectations are exact means over all pairs (V-statistic), which keeps
    the value non-negative.

    Parameters
    ----------
    A : array of shape (n, d)
    B : array of shape (m, d)
    block_size : int
        Rows per block of the pairwise distance computation.

    Returns
    -------
    float

    Raises
    ------
    InsufficientSamplesError
        if n < 2 or m < 2
    """
    A, B = _check_pair(A, B)
    value = (
        2.0 * mean_pairwise_distance(A, B, block_size)
        - mean_pairwise_distance(A, A, block_size)
        - mean_pairwise_distance(B, B, block_size)
    )
    # rounding can leave a tiny negative value for identical sets
    return max(value, 0.0)


def sliced_wasserstein(A, B, n_projections=DEFAULT_PROJECTIONS, seed=0):
    """Sliced 2-Wasserstein distance.

    The mean, over random unit directions, of the 1-D 2-Wasserstein
    distance between the sorted projections of the two sets. When the sets
    differ in size the larger one is subsampled without replacement to the
    size of the smaller.

    Parameters
    ----------
    A : array of shape (n, d)
    B : array of shape (m, d)
    n_projections : int
        Number of random directions, >= 1.
    seed : int

    Returns
    -------
    float
    """
    A, B = _check_pair(A, B)
    if int(n_projections) != n_projections or n_projections < 1:
        raise InvalidParameterError("n_projections must be >= 1")
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((int(n_projections), A.shape[1]))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    n = min(A.shape[0], B.shape[0])
    if A.shape[0] != B.shape[0]:
        logger.debug("subsampling sets of %d and %d rows", len(A), len(B))
        if A.shape[0] > n:
            A = A[np.sort(rng.choice(A.shape[0], n, replace=False))]
        else:
            B = B[np.sort(rng.choice(B.shape[0], n, replace=False))]

    proj_a = np.sort(A @ directions.T, axis=0)
    proj_b = np.sort(B @ directions.T, axis=0)
    per_direction = np.sqrt(np.mean((proj_a - proj_b) ** 2, axis=0))
    return float(np.mean(per_direction))


def consistency_score(teacher, student, n=1000, seed=0):
    """How closely a student reproduces its teacher sample for sample.

    Both bundles are run through the deterministic sampler on the same n
    initial noises.

    Parameters
    ----------
    teacher, student : ModelBundle
    n : int
        Number of shared noises, >= 2.
    seed : int

    Returns
    -------
    paired_mse : float
        Mean squared distance between outputs from the same noise.
    random_baseline_mse : float
        The same quantity after pairing every teacher output with a
        different, randomly chosen student output.

    Raises
    ------
    DimensionMismatchError
        if the bundles differ in data dimension
    InsufficientSamplesError
        if n < 2
    """
    if teacher.input_dim != student.input_dim:
        raise DimensionMismatchError(
            "teacher has dimension {0}, student {1}".format(
                teacher.input_dim, student.input_dim
            )
        )
    if int(n) != n or n < 2:
        raise InsufficientSamplesError("n must be an integer >= 2")
    n = int(n)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((n, teacher.input_dim))
    out_teacher = ddim_sample(teacher, noise)
    out_student = ddim_sample(student, noise)
    paired = np.mean(np.sum((out_teacher - out_student) ** 2, axis=1))

    # random cyclic derangement: nobody keeps its own partner
    order = rng.permutation(n)
    partner = np.empty(n, dtype=np.int64)
    partner[order] = np.roll(order, 1)
    shuffled = out_student[partner]
    baseline = np.mean(np.sum((out_teacher - shuffled) ** 2, axis=1))
    logger.info(
        "consistency: paired_mse %.6g, random_baseline_mse %.6g",
        paired,
        baseline,
    )
    return float(paired), float(baseline)
