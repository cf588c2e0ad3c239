#!/usr/bin/env python3
"""
Tests for the feed-forward networks, their derivatives and model files
"""

import json

import numpy as np
import pytest

from conftest import linear_generator, random_stochastic
from src.errors import DimensionMismatchError, ModelFormatError
from src.models import Activation
from src.network import (
    FeatureMap,
    Layer,
    Mlp,
    StochasticGenerator,
    audit_jacobians,
    feature_forward,
    feature_jacobian,
    finite_difference_jacobian,
    init_mlp,
    jacobian,
    jvp,
    load_model,
    save_model,
    vjp,
)

SMOOTH = [Activation.TANH, Activation.SIGMOID, Activation.SOFTPLUS, Activation.IDENTITY]


def random_smooth_net(rng, widths):
    activations = [SMOOTH[i] for i in rng.integers(0, len(SMOOTH), size=len(widths) - 1)]
    return init_mlp(widths, activations, rng)


def test_jacobian_matches_finite_differences_on_many_nets(rng):
    worst = 0.0
    for _ in range(50):
        widths = [int(w) for w in rng.integers(1, 6, size=rng.integers(2, 5))]
        net = random_smooth_net(rng, widths)
        z = rng.standard_normal(net.input_dim)
        reference = finite_difference_jacobian(net.forward, z)
        scale = max(1.0, np.max(np.abs(reference)))
        worst = max(worst, np.max(np.abs(jacobian(net, z) - reference)) / scale)
    assert worst < 1e-4


def test_vjp_and_jvp_agree_with_jacobian(rng, tanh_mlp):
    z = rng.standard_normal(2)
    u = rng.standard_normal(3)
    v = rng.standard_normal(2)
    j = jacobian(tanh_mlp, z)
    assert np.allclose(vjp(tanh_mlp, z, u), u @ j, atol=1e-10)
    assert np.allclose(jvp(tanh_mlp, z, v), j @ v, atol=1e-10)


def test_batched_evaluation_matches_pointwise(rng, tanh_mlp):
    zs = rng.standard_normal((7, 2))
    vs = rng.standard_normal((7, 2))
    us = rng.standard_normal((7, 3))
    assert np.allclose(tanh_mlp.forward_batch(zs), [tanh_mlp.forward(z) for z in zs])
    assert np.allclose(tanh_mlp.jvp_batch(zs, vs), [tanh_mlp.jacobian(z) @ v for z, v in zip(zs, vs)])
    assert np.allclose(tanh_mlp.vjp_batch(zs, us), [u @ tanh_mlp.jacobian(z) for z, u in zip(zs, us)])


def test_backward_batch_parameter_gradients(rng, tanh_mlp):
    zs = rng.standard_normal((4, 2))
    grad_out = rng.standard_normal((4, 3))
    grads, _ = tanh_mlp.backward_batch(tanh_mlp.trace_batch(zs), grad_out)

    def objective():
        return float(np.sum(grad_out * tanh_mlp.forward_batch(zs)))

    # layer 0 weight, entry (1, 0)
    weight = tanh_mlp.parameters()[0]
    h = 1e-6
    weight[1, 0] += h
    upper = objective()
    weight[1, 0] -= 2 * h
    lower = objective()
    weight[1, 0] += h
    assert grads[0][1, 0] == pytest.approx((upper - lower) / (2 * h), rel=1e-5)


def test_linear_generator_jacobian_is_its_matrix():
    a = np.array([[3.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    assert np.allclose(jacobian(linear_generator(a), np.array([0.3, -2.0])), a)


def test_dimension_mismatch(tanh_mlp):
    with pytest.raises(DimensionMismatchError):
        tanh_mlp.forward(np.zeros(3))
    with pytest.raises(DimensionMismatchError):
        vjp(tanh_mlp, np.zeros(2), np.zeros(2))


def test_layers_must_chain():
    with pytest.raises(ModelFormatError):
        Mlp((
            Layer(np.ones((3, 2)), np.zeros(3), Activation.TANH),
            Layer(np.ones((2, 4)), np.zeros(2), Activation.TANH),
        ))


def test_sigma_net_must_end_in_softplus(rng):
    mu = init_mlp([2, 3], [Activation.IDENTITY], rng)
    with pytest.raises(ModelFormatError):
        StochasticGenerator(mu, init_mlp([2, 3], [Activation.TANH], rng))


def test_sigma_includes_floor(stochastic, rng):
    z = rng.standard_normal(2)
    assert np.allclose(stochastic.sigma(z), stochastic.sigma_floor + stochastic.sigma_net.forward(z))
    assert np.all(stochastic.sigma(z) > 0)


def test_feature_jacobian_matches_finite_differences(logistic, rng):
    x = rng.uniform(0.0, 1.0, 4)
    j = feature_jacobian(logistic, x)
    assert np.allclose(j, finite_difference_jacobian(logistic.forward, x), atol=1e-8)
    assert np.allclose(j.sum(axis=0), 0.0, atol=1e-10)
    assert feature_forward(logistic, x).sum() == pytest.approx(1.0, abs=1e-12)
    us = rng.standard_normal((3, 4))
    xs = rng.uniform(0.0, 1.0, (3, 4))
    assert np.allclose(logistic.jvp_batch(xs, us), [logistic.jacobian(x) @ u for x, u in zip(xs, us)])
    diag = [np.diag(logistic.jacobian(x).T @ logistic.jacobian(x)) for x in xs]
    assert np.allclose(logistic.metric_diagonal_batch(xs), diag)


def test_predict_returns_class_labels(logistic):
    labels = logistic.predict(np.eye(4))
    assert set(labels.tolist()) <= {2, 5, 7}


@pytest.mark.parametrize("kind", ["mlp", "stochastic", "vae", "logreg"])
def test_model_files_reload_exactly(tmp_path, rng, kind, tiny_vae, logistic):
    model = {
        "mlp": init_mlp([2, 4, 3], [Activation.RELU, Activation.SIGMOID], rng),
        "stochastic": random_stochastic(rng),
        "vae": tiny_vae,
        "logreg": logistic,
    }[kind]
    path = save_model(tmp_path / f"{kind}.json", model)
    assert json.loads(path.read_text())["kind"] == kind
    reloaded = load_model(path)
    assert type(reloaded) is type(model)
    assert save_model(tmp_path / "again.json", reloaded).read_text() == path.read_text()


def test_vae_file_keeps_encoder_and_decoder(tmp_path, tiny_vae, rng):
    reloaded = load_model(save_model(tmp_path / "vae.json", tiny_vae))
    x = rng.uniform(size=784)
    mean, log_var = reloaded.encoder.posterior(x)
    expected_mean, expected_log_var = tiny_vae.encoder.posterior(x)
    assert np.array_equal(mean, expected_mean) and np.array_equal(log_var, expected_log_var)
    z = rng.standard_normal(2)
    assert np.array_equal(reloaded.generator.mu_net.forward(z), tiny_vae.generator.mu_net.forward(z))
    assert reloaded.generator.sigma_floor == tiny_vae.generator.sigma_floor


def test_model_file_errors_name_the_problem(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text('{"format_version": 1, "kind": ')
    with pytest.raises(ModelFormatError, match="line 1"):
        load_model(broken)

    doc = {
        "format_version": 1,
        "kind": "mlp",
        "layers": [
            {"in": 2, "out": 3, "activation": "tanh", "weights": [0.0] * 6, "bias": [0.0] * 3},
            {"in": 4, "out": 1, "activation": "identity", "weights": [0.0] * 4, "bias": [0.0]},
        ],
    }
    mismatched = tmp_path / "mismatched.json"
    mismatched.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match=r"layers\[1\]"):
        load_model(mismatched)

    doc["format_version"] = 2
    mismatched.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        load_model(mismatched)


def test_audit_passes_for_smooth_models(tiny_vae):
    audits = audit_jacobians(tiny_vae, n_points=2, seed=0)
    assert [a.network for a in audits] == ["encoder", "mu_net", "sigma_net"]
    assert all(a.passed for a in audits)


def test_identity_feature_map_is_transparent(rng):
    f = FeatureMap.identity()
    x = rng.standard_normal(5)
    assert np.array_equal(f.forward(x), x)
    assert np.array_equal(f.jacobian(x), np.eye(5))
