"""Tests for the samplers and noise interpolation"""
import numpy as np
import pytest

from stepfold.exceptions import (
    DegenerateInterpolationWarning,
    DimensionMismatchError,
    InvalidParameterError,
)
from stepfold.process import predict_x0
from stepfold.sample import (
    ancestral_sample,
    chain_noise,
    ddim_sample,
    forward_trajectory,
    interpolate_noises,
)
from stepfold.schedule import SubSequence
from stepfold.train import ModelBundle, copy_bundle


@pytest.fixture
def one_step_bundle(linear_schedule, zero_net):
    """A single-step student predicting no noise"""
    phi = SubSequence([0, linear_schedule.T])
    return ModelBundle("student", linear_schedule, phi, zero_net)


"""ANCESTRAL SAMPLER"""


def test_single_step_chain_is_the_reverse_mean(one_step_bundle):
    """With eps = 0 one step maps the noise to x_T / sqrt(a_T)"""
    samples = ancestral_sample(one_step_bundle, 4, seed=3)
    noise = chain_noise(3, 4, 1, 2)[0]
    a_T = one_step_bundle.schedule.alpha[-1]
    np.testing.assert_allclose(samples, noise / np.sqrt(a_T))
    np.testing.assert_array_equal(
        samples, ancestral_sample(one_step_bundle, 4, seed=3)
    )


def test_same_seed_same_samples(student_bundle):
    one = ancestral_sample(student_bundle, 50, seed=7)
    two = ancestral_sample(student_bundle, 50, seed=7)
    other = ancestral_sample(student_bundle, 50, seed=8)
    np.testing.assert_array_equal(one, two)
    assert not np.array_equal(one, other)


def test_chains_do_not_depend_on_batch_size(student_bundle):
    few = ancestral_sample(student_bundle, 3, seed=1)
    many = ancestral_sample(student_bundle, 10, seed=1)
    np.testing.assert_array_equal(few, many[:3])


def test_oracle_on_a_point_mass_recovers_the_point(
    linear_schedule, strided_phi, oracle_factory
):
    """A net that knows the single data point lands every chain on it"""
    x_star = np.array([0.8, -1.3])
    net = oracle_factory(linear_schedule, strided_phi, x_star)
    bundle = ModelBundle("student", linear_schedule, strided_phi, net)
    samples = ancestral_sample(bundle, 200, seed=0)
    np.testing.assert_allclose(samples.mean(axis=0), x_star, atol=1e-6)
    np.testing.assert_allclose(samples, np.tile(x_star, (200, 1)), atol=1e-6)


def test_trajectory_shape_and_ends(student_bundle):
    samples, states = ancestral_sample(
        student_bundle, 6, seed=2, return_trajectory=True
    )
    assert states.shape == (student_bundle.phi.T_prime + 1, 6, 2)
    np.testing.assert_array_equal(states[0], chain_noise(2, 6, 5, 2)[0])
    np.testing.assert_array_equal(states[-1], samples)


def test_noise_scales_differ(student_bundle):
    stddev = ancestral_sample(student_bundle, 20, seed=0)
    raw = ancestral_sample(student_bundle, 20, seed=0, noise_scale="raw")
    assert not np.array_equal(stddev, raw)


@pytest.mark.parametrize(
    "kwargs, match",
    [({"n": 0}, "positive"), ({"n": 5, "noise_scale": "big"}, "noise_scale")],
)
def test_ancestral_rejects_bad_arguments(student_bundle, kwargs, match):
    with pytest.raises(InvalidParameterError, match=match):
        ancestral_sample(student_bundle, **kwargs)


"""DETERMINISTIC SAMPLER"""


def test_ddim_is_a_function_of_the_noise(student_bundle):
    noise = np.random.default_rng(0).standard_normal((30, 2))
    np.testing.assert_array_equal(
        ddim_sample(student_bundle, noise), ddim_sample(student_bundle, noise)
    )


def test_ddim_single_step_is_x0_estimate(linear_schedule, tiny_net):
    phi = SubSequence([0, linear_schedule.T])
    bundle = ModelBundle("student", linear_schedule, phi, tiny_net)
    noise = np.random.default_rng(1).standard_normal((5, 2))
    np.testing.assert_array_equal(
        ddim_sample(bundle, noise),
        predict_x0(tiny_net, linear_schedule, phi, 1, noise),
    )


def test_ddim_teacher_against_itself(teacher_bundle):
    twin = copy_bundle(teacher_bundle)
    noise = np.random.default_rng(2).standard_normal((10, 2))
    _, one = ddim_sample(teacher_bundle, noise, return_trajectory=True)
    _, two = ddim_sample(twin, noise, return_trajectory=True)
    assert one.shape == (11, 10, 2)
    np.testing.assert_array_equal(one, two)


def test_ddim_rejects_wrong_dimension(student_bundle):
    with pytest.raises(DimensionMismatchError, match="init_noise"):
        ddim_sample(student_bundle, np.zeros((4, 3)))


"""FORWARD TRAJECTORY"""


def test_forward_trajectory(linear_schedule, strided_phi):
    x0 = np.random.default_rng(0).standard_normal((2000, 2))
    states = forward_trajectory(linear_schedule, strided_phi, x0, seed=4)
    assert states.shape == (6, 2000, 2)
    np.testing.assert_array_equal(states[0], x0)
    again = forward_trajectory(linear_schedule, strided_phi, x0, seed=4)
    np.testing.assert_array_equal(states, again)
    # unit-variance data stays at unit variance under the forward chain
    np.testing.assert_allclose(states[-1].var(axis=0), 1.0, atol=0.1)


"""INTERPOLATION"""


def test_interpolate_two_rows_are_the_endpoints():
    a, b = np.array([1.0, 2.0]), np.array([-3.0, 0.5])
    np.testing.assert_array_equal(interpolate_noises(a, b, 2), [a, b])


def test_interpolate_equal_endpoints():
    a = np.array([0.3, -0.7, 1.1])
    rows = interpolate_noises(a, a.copy(), 5)
    np.testing.assert_array_equal(rows, np.tile(a, (5, 1)))


def test_interpolate_quarter_turn():
    rows = interpolate_noises([1.0, 0.0], [0.0, 1.0], 3)
    np.testing.assert_allclose(rows[1], [np.sqrt(2) / 2, np.sqrt(2) / 2])


def test_interpolate_keeps_the_norm_on_the_great_circle():
    rng = np.random.default_rng(3)
    a = rng.standard_normal(4)
    b = rng.standard_normal(4)
    b *= np.linalg.norm(a) / np.linalg.norm(b)
    rows = interpolate_noises(a, b, 8)
    assert rows.shape == (8, 4)
    np.testing.assert_allclose(
        np.linalg.norm(rows, axis=1), np.linalg.norm(a), rtol=1e-12
    )
    np.testing.assert_array_equal(rows[0], a)
    np.testing.assert_array_equal(rows[-1], b)


def test_interpolate_antiparallel_falls_back_to_lerp():
    a = np.array([1.0, 1.0])
    with pytest.warns(DegenerateInterpolationWarning, match="antiparallel"):
        rows = interpolate_noises(a, -a, 5)
    np.testing.assert_allclose(rows, np.linspace(1, -1, 5)[:, None] * a)


@pytest.mark.parametrize("scale", [1.0, 2.5])
def test_interpolate_flags_every_antiparallel_pair(scale):
    rng = np.random.default_rng(12)
    s = np.linspace(0.0, 1.0, 8)[:, None]
    for _ in range(200):
        a = rng.standard_normal(64)
        b = -scale * a
        with pytest.warns(DegenerateInterpolationWarning):
            rows = interpolate_noises(a, b, 8)
        np.testing.assert_allclose(rows, (1.0 - s) * a + s * b, atol=1e-12)


def test_interpolate_nearly_antiparallel_stays_on_the_sphere():
    rng = np.random.default_rng(4)
    a = rng.standard_normal(64)
    b = -a + 1e-3 * rng.standard_normal(64)
    b *= np.linalg.norm(a) / np.linalg.norm(b)
    rows = interpolate_noises(a, b, 9)
    np.testing.assert_allclose(
        np.linalg.norm(rows, axis=1), np.linalg.norm(a), rtol=1e-9
    )


@pytest.mark.parametrize(
    "a, b, k, error",
    [
        ([1.0, 0.0], [0.0, 1.0], 1, InvalidParameterError),
        ([1.0, 0.0], [0.0, 1.0, 2.0], 3, DimensionMismatchError),
        ([np.inf, 0.0], [0.0, 1.0], 3, InvalidParameterError),
    ],
)
def test_interpolate_rejects_bad_arguments(a, b, k, error):
    with pytest.raises(error):
        interpolate_noises(a, b, k)
