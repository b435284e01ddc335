"""
stepfold.data
=============

Synthetic low-dimensional datasets and CSV ingestion of sample matrices.

CSV files carry a header ``x0,x1,...,x{d-1}`` and one sample per row;
floats are written with 17 significant digits so a save/load round trip
is lossless.

"""

import numpy as np
import pandas as pd

from .exceptions import (
    DimensionMismatchError,
    InvalidParameterError,
    ParseError,
)

ROLL_START = 1.5 * np.pi
ROLL_END = 4.5 * np.pi


def swiss_roll(n, noise_std=0.0, seed=0, standardize=True):
    """Two-turn Swiss Roll in the plane.

    t ~ U[1.5 pi, 4.5 pi], point = (t cos t, t sin t) / (4.5 pi) plus
    Gaussian noise of standard deviation `noise_std`, then standardized to
    zero mean and unit variance per axis with the statistics of the batch.

    Parameters
    ----------
    n : int
        Number of points.
    noise_std : float
        Noise standard deviation, >= 0.
    seed : int
    standardize : boolean
        Set to False to get the raw curve points.

    Returns
    -------
    array of shape (n, 2)
    """
    if int(n) != n or n < 1:
        raise InvalidParameterError("n must be a positive integer")
    if not noise_std >= 0:
        raise InvalidParameterError("noise_std must be non-negative")
    rng = np.random.default_rng(seed)
    t = rng.uniform(ROLL_START, ROLL_END, int(n))
    points = np.stack([t * np.cos(t), t * np.sin(t)], axis=1) / ROLL_END
    points = points + noise_std * rng.standard_normal(points.shape)
    if standardize:
        points = _standardize(points)
    return points


def _standardize(points):
    points = points - points.mean(axis=0)
    std = points.std(axis=0)
    # a single point (or a degenerate axis) is only centred
    std[std == 0] = 1.0
    return points / std


def gaussian_mixture(n, centers, std=1.0, seed=0):
    """Isotropic Gaussian mixture with equally likely components.

    Parameters
    ----------
    n : int
        Number of points.
    centers : array of shape (k, d)
        Component means, k >= 1.
    std : float
        Per-axis standard deviation of every component, >= 0.
    seed : int

    Returns
    -------
    array of shape (n, d)
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if centers.shape[0] < 1 or centers.ndim != 2:
        raise InvalidParameterError("centers must hold at least one row")
    if int(n) != n or n < 1:
        raise InvalidParameterError("n must be a positive integer")
    if not std >= 0:
        raise InvalidParameterError("std must be non-negative")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, centers.shape[0], int(n))
    noise = rng.standard_normal((int(n), centers.shape[1]))
    return centers[labels] + std * noise


def ring_centers(k=8, radius=2.0):
    """k points evenly spaced on a circle of the given radius."""
    angles = 2 * np.pi * np.arange(k) / k
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def column_names(d):
    return ["x{0}".format(i) for i in range(d)]


def save_csv(path, matrix, labels=None):
    """Writes a sample matrix with header ``x0,...`` and 17 digit floats.

    `labels` optionally maps extra leading column names to one value per
    row; such files are outputs only and are not read by ``load_csv``.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    frame = pd.DataFrame(matrix, columns=column_names(matrix.shape[1]))
    for position, (name, values) in enumerate((labels or {}).items()):
        frame.insert(position, name, values)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def _field_counts(path):
    """(line number, field count) of every non-blank line after the header.

    pandas pads short rows with empty strings, so a missing field and an
    empty one can only be told apart from the raw text.
    """
    with open(path) as f:
        numbered = [
            (number, line)
            for number, line in enumerate(f.read().splitlines(), start=1)
            if line.strip()
        ]
    return [(number, line.count(",") + 1) for number, line in numbered[1:]]


def load_csv(path):
    """Reads a sample matrix written by ``save_csv``.

    Parameters
    ----------
    path : string or path-like

    Returns
    -------
    array of shape (n, d)

    Raises
    ------
    ParseError
        if the file is empty, has no data rows, or holds an empty or
        non-numeric value
    DimensionMismatchError
        if a row has a different number of fields than the header
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty", line=1)
    except pd.errors.ParserError as e:
        raise DimensionMismatchError("ragged row: {0}".format(e))
    if frame.shape[0] == 0:
        raise ParseError("no data rows after the header", line=2)

    counts = _field_counts(path)
    values = np.empty(frame.shape, dtype=np.float64)
    for row, record in enumerate(frame.itertuples(index=False)):
        line, n_fields = counts[row]
        if n_fields < frame.shape[1]:
            raise DimensionMismatchError(
                "row on line {0} has {1} of {2} fields".format(
                    line, n_fields, frame.shape[1]
                )
            )
        for col, cell in enumerate(record):
            if cell == "":
                raise ParseError(
                    "empty value in column {0}".format(frame.columns[col]),
                    line=line,
                )
            try:
                values[row, col] = float(cell)
            except ValueError:
                raise ParseError(
                    "non-numeric value {0!r} in column {1}".format(
                        cell, frame.columns[col]
                    ),
                    line=line,
                )
    return values
