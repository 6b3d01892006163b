import math

import numpy as np
import pytest

from coslat.statespace import (
    BoxVelocityPrior,
    DiracPrior,
    GaussianPrior,
    GaussianRangeNoise,
    MotionModel,
    propagate,
    propagate_many,
    range_likelihood,
    range_measurement,
)


def manual_propagate(state, G, W, u):
    # independent oracle: explicit row-by-row matrix multiply
    out = []
    for row_g, row_w in zip(G, W):
        out.append(sum(g * x for g, x in zip(row_g, state)) + sum(w * v for w, v in zip(row_w, u)))
    return np.array(out)


def test_propagate_zero_state_fixed_point():
    model = MotionModel()
    assert np.array_equal(propagate(np.zeros(4), model, np.zeros(2)), np.zeros(4))


def test_propagate_constant_velocity_advance():
    model = MotionModel()
    out = propagate(np.array([0.0, 0.0, 1.0, 0.0]), model, np.zeros(2))
    assert np.allclose(out, [1.0, 0.0, 1.0, 0.0])


def test_propagate_matches_manual_matrix_multiply():
    model = MotionModel()
    sigma = math.sqrt(model.sigma_u2)
    state = np.array([2.0, 3.0, 0.0, 0.0])
    u = np.array([sigma, sigma])
    expected = manual_propagate(state, model.G.tolist(), model.W.tolist(), u)
    assert np.allclose(propagate(state, model, u), expected, atol=1e-15)


def test_propagate_is_linear():
    model = MotionModel()
    rng = np.random.default_rng(3)
    for _ in range(20):
        x, z = rng.normal(size=4), rng.normal(size=4)
        a, b = rng.normal(size=2)
        lhs = propagate(a * x + b * z, model, np.zeros(2))
        rhs = a * propagate(x, model, np.zeros(2)) + b * propagate(z, model, np.zeros(2))
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_propagate_identity_on_location_without_motion():
    model = MotionModel()
    state = np.array([7.5, -2.25, 0.0, 0.0])
    assert np.allclose(propagate(state, model, np.zeros(2))[:2], state[:2])


def test_propagate_many_matches_single():
    model = MotionModel()
    rng = np.random.default_rng(11)
    states = rng.normal(size=(40, 4))
    us = rng.normal(size=(40, 2))
    batch = propagate_many(states, model, us)
    for i in range(40):
        assert np.allclose(batch[i], propagate(states[i], model, us[i]), atol=1e-12)


def test_range_measurement_345_triangle():
    assert range_measurement(np.array([0.0, 0.0]), np.array([3.0, 4.0])) == pytest.approx(5.0)


def test_range_measurement_coincident():
    a = np.array([1.0, 2.0, 0.3, 0.3])
    assert range_measurement(a, a) == 0.0


def test_range_measurement_offset():
    got = range_measurement(np.array([1.0, 1.0]), np.array([4.0, 5.0]), v=0.5)
    assert got == pytest.approx(5.5)


def test_range_measurement_symmetric():
    rng = np.random.default_rng(5)
    for _ in range(20):
        a, b = rng.normal(size=2), rng.normal(size=2)
        assert range_measurement(a, b, v=0.25) == pytest.approx(range_measurement(b, a, v=0.25))


def test_range_likelihood_peak_value():
    # Gaussian peak at zero error: 1/sqrt(2 pi sigma_v^2) with sigma_v^2 = 2
    noise = GaussianRangeNoise(2.0)
    a, b = np.array([0.0, 0.0]), np.array([3.0, 4.0])
    assert range_likelihood(5.0, a, b, noise) == pytest.approx(1.0 / math.sqrt(4.0 * math.pi))


def test_range_likelihood_even_in_error():
    noise = GaussianRangeNoise(2.0)
    a, b = np.array([1.0, 1.0]), np.array([4.0, 5.0])
    for delta in (0.3, 1.1, 2.7):
        assert range_likelihood(5.0 + delta, a, b, noise) == pytest.approx(
            range_likelihood(5.0 - delta, a, b, noise))


def test_range_likelihood_matches_direct_pdf():
    # oracle: independently coded Gaussian pdf
    noise = GaussianRangeNoise(2.0)
    a, b = np.array([0.5, -0.5]), np.array([2.5, 3.5])
    d = math.hypot(2.0, 4.0)
    for y in np.linspace(-3.0, 12.0, 31):
        expected = math.exp(-((y - d) ** 2) / 4.0) / math.sqrt(4.0 * math.pi)
        assert range_likelihood(y, a, b, noise) == pytest.approx(expected, abs=1e-12)


def test_range_likelihood_rigid_motion_invariant():
    noise = GaussianRangeNoise(2.0)
    rng = np.random.default_rng(9)
    a, b = rng.normal(size=2), rng.normal(size=2)
    base = range_likelihood(3.0, a, b, noise)
    for _ in range(10):
        phi = rng.uniform(0, 2 * np.pi)
        R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
        t = rng.normal(size=2) * 10
        assert range_likelihood(3.0, R @ a + t, R @ b + t, noise) == pytest.approx(base)


def test_noise_density_integrates_to_one():
    noise = GaussianRangeNoise(2.0)
    grid = np.linspace(-20, 20, 4001)
    integral = np.trapezoid(noise.density(grid), grid)
    assert abs(integral - 1.0) < 0.01


def test_noise_sampler_variance():
    noise = GaussianRangeNoise(2.0)
    draws = noise.sample(np.random.default_rng(2), 200_000)
    assert np.var(draws) == pytest.approx(2.0, rel=0.02)


def test_priors_sample_shapes_and_means():
    rng = np.random.default_rng(1)
    dirac = DiracPrior([1.0, 2.0, 0.0, 0.0])
    assert np.array_equal(dirac.sample(5, rng), np.tile([1.0, 2.0, 0.0, 0.0], (5, 1)))

    box = BoxVelocityPrior(((-500, 500), (-500, 500)), (-0.1, -0.1), ((0.1, 0), (0, 0.1)))
    draws = box.sample(20_000, rng)
    assert draws.shape == (20_000, 4)
    assert abs(draws[:, 0].mean()) < 10
    assert np.allclose(draws[:, 2:].mean(axis=0), [-0.1, -0.1], atol=0.01)

    gauss = GaussianPrior([0, 5, 0.4, 0.4], np.diag([1, 1, 0.001, 0.001]))
    draws = gauss.sample(20_000, rng)
    assert np.allclose(draws.mean(axis=0), [0, 5, 0.4, 0.4], atol=0.05)


def test_motion_model_validation():
    with pytest.raises(ValueError):
        MotionModel(G=np.eye(3))
    with pytest.raises(ValueError):
        MotionModel(sigma_u2=-1.0)
    with pytest.raises(ValueError):
        GaussianRangeNoise(0.0)
