import math

import numpy as np
import pytest

from coslat.particles import (
    DegenerateWeightsError,
    KernelMessage,
    ParticleSet,
    effective_sample_size,
    importance_weight,
    kde_evaluate,
    kde_log_many,
    moments,
    resample,
)


def direct_kde(centers, weights, sigma2, query):
    # brute-force summation oracle, coded independently of the library path
    total = 0.0
    for c, w in zip(centers, weights):
        d2 = (query[0] - c[0]) ** 2 + (query[1] - c[1]) ** 2
        total += w * math.exp(-d2 / (2.0 * sigma2)) / (2.0 * math.pi * sigma2)
    return total


def direct_moments(states, weights):
    mean = np.zeros(states.shape[1])
    for s, w in zip(states, weights):
        mean += w * s
    cov = np.zeros((states.shape[1], states.shape[1]))
    for s, w in zip(states, weights):
        d = s - mean
        cov += w * np.outer(d, d)
    return mean, cov


def test_kde_single_kernel_peak():
    msg = KernelMessage(np.array([[0.0, 0.0]]), np.array([1.0]), 2.0)
    assert kde_evaluate(msg, np.array([0.0, 0.0])) == pytest.approx(1.0 / (4.0 * math.pi))


def test_kde_far_tail_vanishes():
    msg = KernelMessage(np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([0.5, 0.5]), 2.0)
    sigma = math.sqrt(2.0)
    far = np.array([20.0 * sigma + 1.0, 0.0])
    assert kde_evaluate(msg, far) < 1e-12


def test_kde_matches_direct_summation():
    rng = np.random.default_rng(7)
    centers = rng.normal(0, 5, size=(50, 2))
    weights = rng.random(50)
    weights /= weights.sum()
    msg = KernelMessage(centers, weights, 2.0)
    for _ in range(20):
        q = rng.normal(0, 5, size=2)
        expected = direct_kde(centers, weights, 2.0, q)
        assert kde_evaluate(msg, q) == pytest.approx(expected, rel=1e-12)


def test_kde_log_many_consistent_with_kde_evaluate():
    rng = np.random.default_rng(8)
    centers = rng.normal(0, 3, size=(40, 2))
    msg = KernelMessage(centers, np.full(40, 1 / 40), 2.0)
    pts = rng.normal(0, 3, size=(25, 2))
    logs = kde_log_many(msg, pts)
    vals = kde_evaluate(msg, pts)
    assert np.allclose(np.exp(logs), vals, rtol=1e-9)


def test_kde_integrates_to_one():
    rng = np.random.default_rng(12)
    centers = rng.normal(0, 2, size=(30, 2))
    msg = KernelMessage(centers, np.full(30, 1 / 30), 2.0)
    sigma = math.sqrt(2.0)
    half = 20 * sigma
    xs = np.linspace(centers[:, 0].min() - half, centers[:, 0].max() + half, 221)
    ys = np.linspace(centers[:, 1].min() - half, centers[:, 1].max() + half, 221)
    gx, gy = np.meshgrid(xs, ys)
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    vals = kde_evaluate(msg, grid).reshape(gx.shape)
    integral = np.trapezoid(np.trapezoid(vals, ys, axis=0), xs)
    assert abs(integral - 1.0) < 1e-3


def test_resample_uniform_weights_preserves_mean():
    rng = np.random.default_rng(21)
    states = rng.normal(0, 3, size=(4000, 2))
    p = ParticleSet.equal_weights(states)
    out = resample(p, 4000, rng)
    assert np.all(out.weights == out.weights[0])
    assert set(map(tuple, out.states)) <= set(map(tuple, states))
    assert np.allclose(out.states.mean(axis=0), states.mean(axis=0), atol=4 * 3 / math.sqrt(4000))


def test_resample_degenerate_weight_selects_single_particle():
    states = np.arange(10, dtype=float).reshape(5, 2)
    weights = np.array([1.0, 0, 0, 0, 0])
    out = resample(ParticleSet(states, weights), 5, np.random.default_rng(0))
    assert np.all(out.states == states[0])


def test_resample_mean_within_monte_carlo_error():
    # Monte Carlo oracle: mean of resampled means matches the weighted mean
    rng = np.random.default_rng(4)
    states = rng.normal(0, 2, size=(10_000, 2))
    weights = rng.random(10_000)
    weights /= weights.sum()
    p = ParticleSet(states, weights)
    target = weights @ states
    means = [resample(p, 10_000, rng).states.mean(axis=0) for _ in range(100)]
    spread = math.sqrt(np.sum(weights**2 * np.sum((states - target) ** 2, axis=1)))
    err = np.linalg.norm(np.mean(means, axis=0) - target)
    assert err < 3 * spread / math.sqrt(100) + 1e-9


def test_resample_rejects_zero_weights():
    p = ParticleSet.equal_weights(np.zeros((4, 2)))
    bad = np.zeros(4)
    with pytest.raises(DegenerateWeightsError):
        resample(ParticleSet(p.states, bad + 1e-30), 4, np.random.default_rng(0))
        raise AssertionError  # pragma: no cover
    # direct zero vector refuses to normalize at construction
    with pytest.raises((DegenerateWeightsError, ValueError)):
        ParticleSet(p.states, bad)


def test_importance_weight_identity():
    rng = np.random.default_rng(2)
    p = ParticleSet.equal_weights(rng.normal(size=(50, 2)))
    out = importance_weight(p, lambda s: np.ones(len(s)))
    assert np.allclose(out.weights, p.weights)


def test_importance_weight_halfplane_indicator():
    states = np.array([[-1.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    p = ParticleSet.equal_weights(states)
    out = importance_weight(p, lambda s: (s[:, 0] > 0).astype(float))
    assert out.weights[0] == 0.0
    assert out.weights[1] == pytest.approx(0.5)


def test_importance_weight_conjugate_gaussian():
    # conjugate closed form: N(m0, s0^2) x N(c, s1^2) posterior mean
    rng = np.random.default_rng(6)
    m0, s0 = np.array([1.0, -2.0]), 2.0
    c, s1 = np.array([3.0, 1.0]), 1.5
    states = rng.normal(0, 1, size=(200_000, 2)) * s0 + m0
    p = ParticleSet.equal_weights(states)
    out = importance_weight(p, lambda s: np.exp(-np.sum((s - c) ** 2, axis=1) / (2 * s1**2)))
    post_mean = (m0 / s0**2 + c / s1**2) / (1 / s0**2 + 1 / s1**2)
    post_var = 1.0 / (1 / s0**2 + 1 / s1**2)
    mean, _ = moments(out)
    se = math.sqrt(post_var / effective_sample_size(out.weights))
    assert np.all(np.abs(mean - post_mean) < 3 * se + 1e-12)


def test_importance_weight_all_zero_raises():
    p = ParticleSet.equal_weights(np.zeros((5, 2)))
    with pytest.raises(DegenerateWeightsError):
        importance_weight(p, lambda s: np.zeros(len(s)))


def test_importance_weight_constant_idempotent():
    rng = np.random.default_rng(14)
    p = ParticleSet(rng.normal(size=(30, 2)), rng.dirichlet(np.ones(30)))
    once = importance_weight(p, lambda s: np.full(len(s), 0.7))
    twice = importance_weight(once, lambda s: np.full(len(s), 0.7))
    assert np.allclose(once.weights, twice.weights)


def test_moments_single_particle():
    p = ParticleSet(np.array([[2.0, 3.0]]), np.array([1.0]))
    mean, cov = moments(p)
    assert np.allclose(mean, [2.0, 3.0])
    assert np.allclose(cov, 0.0)


def test_moments_two_point():
    p = ParticleSet.equal_weights(np.array([[0.0, 0.0], [2.0, 0.0]]))
    mean, cov = moments(p)
    assert np.allclose(mean, [1.0, 0.0])
    assert cov[0, 0] == pytest.approx(1.0)


def test_moments_matches_direct_summation():
    rng = np.random.default_rng(13)
    states = rng.normal(size=(80, 4))
    weights = rng.dirichlet(np.ones(80))
    mean, cov = moments(ParticleSet(states, weights))
    omean, ocov = direct_moments(states, weights)
    assert np.allclose(mean, omean, atol=1e-12)
    assert np.allclose(cov, ocov, atol=1e-12)


def test_particleset_validation():
    with pytest.raises(ValueError):
        ParticleSet(np.array([[np.inf, 0.0]]), np.array([1.0]))
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((2, 2)), np.array([0.5, -0.5]))
    with pytest.raises(ValueError):
        KernelMessage(np.zeros((2, 2)), np.array([0.5, 0.5]), 0.0)
    # weights renormalized when off by more than tolerance
    p = ParticleSet(np.zeros((2, 2)), np.array([2.0, 2.0]))
    assert p.weights.sum() == pytest.approx(1.0)
