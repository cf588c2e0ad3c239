#!/usr/bin/env python3
"""
Tests for the pull-back metric providers
"""

import numpy as np
import pytest

from conftest import linear_generator, random_stochastic
from src.errors import DimensionMismatchError, InvalidInputError, UnsupportedModeError
from src.linalg import psd_eig
from src.metrics import (
    ConformalMetric,
    DeterministicMetric,
    FeatureMetric,
    StochasticFeatureMetric,
    StochasticMetric,
    build_metric,
    gaussian_bumps,
    metric_at,
    speed,
)
from src.models import Activation, MetricVariant
from src.network import FeatureMap, Layer, Mlp, StochasticGenerator, init_mlp

DRAWS = 100_000


def relative_frobenius(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_linear_generator_metric_is_constant(rng):
    a = rng.standard_normal((3, 2))
    p = DeterministicMetric(linear_generator(a))
    for z in rng.standard_normal((4, 2)):
        assert np.allclose(metric_at(p, z), a.T @ a, atol=1e-12)


def test_metric_is_symmetric_psd(rng, tanh_mlp, stochastic, logistic):
    providers = [
        DeterministicMetric(tanh_mlp),
        StochasticMetric(stochastic),
        FeatureMetric(stochastic.mu_net, logistic),
        StochasticFeatureMetric(stochastic, logistic),
    ]
    for p in providers:
        m = p.metric_at(rng.standard_normal(2))
        assert np.array_equal(m, m.T)
        assert psd_eig(m).eigenvalues[0] >= 0.0


def test_expected_metric_matches_sampled_decoder_jacobians(rng):
    for _ in range(5):
        gen = random_stochastic(rng)
        z = rng.standard_normal(2)
        j_mu, j_sigma = gen.mu_net.jacobian(z), gen.sigma_net.jacobian(z)
        eps = rng.standard_normal((DRAWS, gen.output_dim))
        # J(eps) = J_mu + diag(eps) J_sigma for the sample x = mu + sigma * eps
        sampled = j_mu[None] + eps[:, :, None] * j_sigma[None]
        oracle = np.einsum("nki,nkj->ij", sampled, sampled) / DRAWS
        assert relative_frobenius(StochasticMetric(gen).metric_at(z), oracle) < 0.02


def test_feature_stochastic_metric_matches_sampled_oracle(rng, logistic):
    for _ in range(5):
        gen = random_stochastic(rng)
        z = rng.standard_normal(2)
        j_fx = logistic.jacobian(gen.mu_net.forward(z))
        j_mu, j_sigma = gen.mu_net.jacobian(z), gen.sigma_net.jacobian(z)
        eps = rng.standard_normal((DRAWS, gen.output_dim))
        sampled = np.einsum("fk,nki->nfi", j_fx, j_mu[None] + eps[:, :, None] * j_sigma[None])
        oracle = np.einsum("nfi,nfj->ij", sampled, sampled) / DRAWS
        p = StochasticFeatureMetric(gen, logistic)
        assert relative_frobenius(p.metric_at(z), oracle) < 0.02


def test_identity_feature_reduces_to_plain_metrics(rng, stochastic):
    identity = FeatureMap.identity()
    z = rng.standard_normal(2)
    assert np.allclose(FeatureMetric(stochastic.mu_net, identity).metric_at(z),
                       DeterministicMetric(stochastic.mu_net).metric_at(z), atol=1e-12)
    assert np.allclose(StochasticFeatureMetric(stochastic, identity).metric_at(z),
                       StochasticMetric(stochastic).metric_at(z), atol=1e-12)


def constant_sigma(stochastic):
    """Same mean network, sigma net whose last layer ignores its input"""
    hidden, last = stochastic.sigma_net.layers
    flat = Layer(np.zeros_like(last.weight), last.bias, Activation.SOFTPLUS)
    return StochasticGenerator(stochastic.mu_net, Mlp((hidden, flat)))


def test_constant_sigma_reduces_to_mean_metrics(rng, stochastic, logistic):
    gen = constant_sigma(stochastic)
    for z in rng.standard_normal((5, 2)):
        assert np.allclose(StochasticMetric(gen).metric_at(z),
                           DeterministicMetric(gen.mu_net).metric_at(z), atol=1e-12)
        assert np.allclose(StochasticFeatureMetric(gen, logistic).metric_at(z),
                           FeatureMetric(gen.mu_net, logistic).metric_at(z), atol=1e-12)


def test_batched_speeds_match_quadratic_form(rng, tanh_mlp, stochastic, logistic, two_bumps):
    providers = [
        DeterministicMetric(tanh_mlp),
        StochasticMetric(stochastic),
        FeatureMetric(stochastic.mu_net, logistic),
        StochasticFeatureMetric(stochastic, logistic),
        two_bumps,
    ]
    zs = rng.standard_normal((6, 2))
    vs = rng.standard_normal((6, 2))
    for p in providers:
        expected = [np.sqrt(v @ p.metric_at(z) @ v) for z, v in zip(zs, vs)]
        assert np.allclose(p.speeds(zs, vs), expected, rtol=1e-9)
        assert speed(p, zs[0], vs[0]) == pytest.approx(expected[0], rel=1e-9)


def test_speed_rejects_wrong_velocity(tanh_mlp):
    with pytest.raises(DimensionMismatchError):
        speed(DeterministicMetric(tanh_mlp), np.zeros(2), np.zeros(3))
    with pytest.raises(DimensionMismatchError):
        metric_at(DeterministicMetric(tanh_mlp), np.zeros(4))


def test_embed_vjp_is_cotangent_times_jacobian(rng, stochastic):
    p = StochasticMetric(stochastic)
    zs = rng.standard_normal((3, 2))
    us = [rng.standard_normal((3, 4)), rng.standard_normal((3, 4))]
    expected = [
        us[0][b] @ stochastic.mu_net.jacobian(z) + us[1][b] @ stochastic.sigma_net.jacobian(z)
        for b, z in enumerate(zs)
    ]
    assert np.allclose(p.embed_vjp(zs, us), expected, atol=1e-12)


def test_feature_metrics_do_not_telescope(stochastic, logistic):
    p = StochasticFeatureMetric(stochastic, logistic)
    assert not p.telescoping
    with pytest.raises(UnsupportedModeError):
        p.embed(np.zeros((2, 2)))


def test_build_metric_dispatch(tanh_mlp, stochastic, logistic, tiny_vae):
    assert isinstance(build_metric(tanh_mlp), DeterministicMetric)
    assert isinstance(build_metric(stochastic), StochasticMetric)
    assert isinstance(build_metric(tiny_vae), StochasticMetric)
    assert isinstance(build_metric(stochastic, logistic), StochasticFeatureMetric)
    assert isinstance(build_metric(tanh_mlp, FeatureMap.identity()), DeterministicMetric)

    det = build_metric(stochastic, variant=MetricVariant.DETERMINISTIC)
    assert isinstance(det, DeterministicMetric) and det.generator is stochastic.mu_net

    with pytest.raises(InvalidInputError):
        build_metric(logistic)
    with pytest.raises(InvalidInputError):
        build_metric(tanh_mlp, variant=MetricVariant.STOCHASTIC)
    with pytest.raises(InvalidInputError):
        build_metric(stochastic, variant=MetricVariant.CONFORMAL)


def test_conformal_metric():
    p = gaussian_bumps(centers=[[0.0, 0.0]], heights=[3.0], widths=[1.0])
    assert isinstance(p, ConformalMetric)
    assert np.allclose(p.metric_at(np.zeros(2)), 16.0 * np.eye(2))
    assert np.allclose(p.metric_at(np.array([50.0, 0.0])), np.eye(2))


def test_relu_metric_is_piecewise_constant(rng):
    net = init_mlp([2, 8, 3], [Activation.RELU, Activation.IDENTITY], rng)
    p = DeterministicMetric(net)
    z = rng.standard_normal(2)
    assert np.allclose(p.metric_at(z), p.metric_at(z + 1e-9), atol=1e-12)
