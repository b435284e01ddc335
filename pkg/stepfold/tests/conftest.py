"""Pytest fixtures for stepfold tests"""
import numpy as np
import pytest

from stepfold.net import EpsilonNet
from stepfold.schedule import (
    identity_subsequence,
    make_linear_beta_schedule,
    make_sigmoid_schedule,
    uniform_subsequence,
)
from stepfold.train import ModelBundle, TrainConfig


def pytest_addoption(parser):
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="run the end-to-end training tests",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


class StubNet(object):
    """Minimal stand-in for EpsilonNet: anything with ``forward``."""

    def __init__(self, input_dim, func):
        self.input_dim = input_dim
        self.func = func

    def forward(self, x, t_norm):
        x = np.asarray(x, dtype=np.float64)
        return self.func(x, t_norm)


class OracleNet(StubNet):
    """Returns the noise that explains x_t exactly for a fixed x0.

    Step t is recovered from ``t_norm * T'``, so the net is tied to one
    (schedule, phi) pair.
    """

    def __init__(self, schedule, phi, x0):
        self.schedule = schedule
        self.phi = phi
        self.x0 = np.asarray(x0, dtype=np.float64)
        super(OracleNet, self).__init__(self.x0.shape[-1], self._eps)

    def _eps(self, x, t_norm):
        t = np.rint(np.asarray(t_norm) * self.phi.T_prime).astype(int)
        a = self.schedule.full[self.phi.phi[t]]
        if np.ndim(a):
            a = a[:, None]
        return (x - np.sqrt(a) * self.x0) / np.sqrt(1.0 - a)


@pytest.fixture
def linear_schedule():
    """A 10 step linear-beta schedule with large enough betas to matter"""
    return make_linear_beta_schedule(10, 0.01, 0.2)


@pytest.fixture
def sigmoid_schedule():
    """A 50 step sigmoid schedule"""
    return make_sigmoid_schedule(50)


@pytest.fixture
def strided_phi():
    """Uniform 5 step sub-sequence of the 10 step schedule"""
    return uniform_subsequence(10, 5)


@pytest.fixture
def tiny_net():
    """A 2-D net with one small hidden layer"""
    return EpsilonNet(2, hidden_widths=[8], time_embed_dim=4, seed=3)


@pytest.fixture
def zero_net():
    """A stub net predicting no noise at all"""
    return StubNet(2, lambda x, t_norm: np.zeros_like(x))


@pytest.fixture
def oracle_factory():
    """Builds an OracleNet for a (schedule, phi, x0) triple"""
    return OracleNet


@pytest.fixture
def stub_factory():
    """Builds a StubNet from a function of (x, t_norm)"""
    return StubNet


@pytest.fixture
def teacher_bundle(linear_schedule, tiny_net):
    """An untrained teacher bundle on the 10 step schedule"""
    return ModelBundle(
        "teacher",
        linear_schedule,
        identity_subsequence(linear_schedule.T),
        tiny_net,
        {"dataset": "unit"},
    )


@pytest.fixture
def student_bundle(linear_schedule, strided_phi):
    """An untrained student bundle with its own weights"""
    net = EpsilonNet(2, hidden_widths=[8], time_embed_dim=4, seed=11)
    return ModelBundle("student", linear_schedule, strided_phi, net)


@pytest.fixture
def small_config():
    """Short training run on a small network"""
    return TrainConfig(
        steps=20,
        batch_size=16,
        lr=1e-3,
        seed=5,
        log_every=5,
        hidden_widths=[16, 16],
        time_embed_dim=8,
    )


@pytest.fixture
def roll_data():
    """500 points of the standardized Swiss Roll"""
    from stepfold.data import swiss_roll

    return swiss_roll(500, noise_std=0.05, seed=1)


@pytest.fixture
def teacher_ckpt(tmp_path, teacher_bundle):
    """Path of the teacher bundle saved as a checkpoint"""
    from stepfold.persistence import save_bundle

    path = tmp_path / "teacher.json"
    save_bundle(teacher_bundle, str(path))
    return str(path)
