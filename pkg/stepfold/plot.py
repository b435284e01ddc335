"""
stepfold.plot
=============

Static SVG figures of sample sets and chain trajectories.

Figures are drawn on a bare ``matplotlib.figure.Figure`` (no pyplot state)
with a fixed SVG hash salt and no date stamp, so the same data always
produces the same file.

"""

import numpy as np
import matplotlib
from matplotlib.figure import Figure

from .exceptions import DimensionMismatchError, InvalidParameterError

SVG_SALT = "stepfold"
SAMPLE_COLOR = "tab:blue"
REFERENCE_COLOR = "0.8"


def _xy(points):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if points.ndim != 2:
        raise DimensionMismatchError("points must be an (n, d) matrix")
    if points.shape[1] == 1:
        return points[:, 0], np.zeros(points.shape[0])
    return points[:, 0], points[:, 1]


def _save(fig, path):
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def scatter_svg(samples, path, title=None, reference=None):
    """Scatter plot of the first two coordinates of `samples`.

    Parameters
    ----------
    samples : array of shape (n, d)
        One-dimensional data is drawn along the x axis.
    path : string or path-like
        Destination SVG file.
    title : string, optional
    reference : array of shape (m, d), optional
        Drawn underneath in light grey, e.g. the training data.
    """
    fig = Figure(figsize=(5, 5))
    ax = fig.add_subplot(1, 1, 1)
    if reference is not None:
        ax.scatter(*_xy(reference), s=2, c=REFERENCE_COLOR, label="data")
    ax.scatter(*_xy(samples), s=2, c=SAMPLE_COLOR, label="samples")
    ax.set_aspect("equal", adjustable="datalim")
    if title:
        ax.set_title(title)
    if reference is not None:
        ax.legend(loc="upper right", markerscale=4)
    _save(fig, path)


def panel_indices(n_states, n_panels):
    """Evenly spaced indices into a chain of `n_states`, ends included."""
    n_panels = min(int(n_panels), n_states)
    return np.unique(np.round(np.linspace(0, n_states - 1, n_panels)))


def trajectory_svg(trajectory, path, n_panels=5, labels=None):
    """A row of scatter panels along a chain of states.

    Parameters
    ----------
    trajectory : array of shape (S, n, d)
        Chain states, as returned by ``forward_trajectory`` or by
        ``ancestral_sample(..., return_trajectory=True)``.
    path : string or path-like
    n_panels : int
        Number of evenly spaced states to draw, first and last included.
    labels : sequence of string, optional
        One panel title per state of the chain; defaults to the state
        index.
    """
    trajectory = np.asarray(trajectory, dtype=np.float64)
    if trajectory.ndim != 3:
        raise DimensionMismatchError(
            "trajectory must have shape (states, n, d)"
        )
    if int(n_panels) != n_panels or n_panels < 1:
        raise InvalidParameterError("n_panels must be a positive integer")
    indices = panel_indices(trajectory.shape[0], n_panels).astype(int)

    fig = Figure(figsize=(3 * len(indices), 3))
    x_all, y_all = _xy(trajectory.reshape(-1, trajectory.shape[2]))
    for k, index in enumerate(indices):
        ax = fig.add_subplot(1, len(indices), k + 1)
        ax.scatter(*_xy(trajectory[index]), s=2, c=SAMPLE_COLOR)
        if x_all.max() > x_all.min():
            ax.set_xlim(x_all.min(), x_all.max())
        if y_all.max() > y_all.min():
            ax.set_ylim(y_all.min(), y_all.max())
        ax.set_title(labels[index] if labels else "step {0}".format(index))
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    _save(fig, path)
