#!/usr/bin/env python3
"""
Tests for the optimizers, the VAE / logistic regression trainers and latent lookup
"""

import numpy as np
import pytest

from conftest import linear_generator
from src.data import Dataset, load_idx
from src.errors import DimensionMismatchError, InvalidInputError, TrainingError
from src.models import Activation, TrainConfig
from src.network import StochasticGenerator, init_mlp
from src.optim import Adam, backtracking_step, clip_gradients, gradient_descent
from src.training import accuracy, build_vae, encode, encode_batch, invert, train_logreg, train_vae

TINY = dict(hidden=[8], latent_dim=2, batch_size=16, epochs=2, variance_epochs=1, learning_rate=1e-2)


def test_adam_minimizes_quadratic():
    x = np.array([3.0, -2.0])
    opt = Adam([x], lr=0.1)
    for _ in range(500):
        opt.step([2.0 * x])
    assert np.linalg.norm(x) < 1e-2


def test_clip_gradients():
    grads, norm = clip_gradients([np.array([3.0]), np.array([4.0])], 1.0)
    assert norm == pytest.approx(5.0)
    assert np.sqrt(sum(float(g @ g) for g in grads)) == pytest.approx(1.0)


def test_backtracking_gives_up_at_a_minimum():
    def f(x):
        return float(x @ x)

    assert backtracking_step(f, np.zeros(2), 0.0, np.array([1.0, 0.0]), 1.0) is None
    accepted = backtracking_step(f, np.ones(2), 2.0, 2.0 * np.ones(2), 4.0)
    assert accepted.value < 2.0


def test_gradient_descent_on_quadratic():
    target = np.array([1.0, -3.0])
    x, value = gradient_descent(lambda x: float((x - target) @ (x - target)), lambda x: 2.0 * (x - target),
                                np.zeros(2))
    assert np.allclose(x, target, atol=1e-6)


def test_build_vae_shapes(rng):
    vae = build_vae(784, TrainConfig(hidden=[16, 8]), rng)
    assert vae.encoder.latent_dim == 2
    assert vae.generator.output_dim == 784
    assert vae.generator.mu_net.layers[-1].activation == Activation.SIGMOID
    assert vae.generator.sigma_net.layers[-1].activation == Activation.SOFTPLUS


def test_train_vae_history_and_determinism(idx_files):
    ds = load_idx(*idx_files)
    cfg = TrainConfig(seed=5, **TINY)
    first = train_vae(ds, cfg)
    assert [h.phase for h in first.history] == ["init", "mean", "mean", "variance"]
    assert all(np.isfinite(h.heldout_elbo) for h in first.history)
    second = train_vae(ds, cfg)
    for a, b in zip(first.generator.mu_net.parameters(), second.generator.mu_net.parameters()):
        assert np.array_equal(a, b)


def test_train_vae_rejects_non_finite_data():
    images = np.full((8, 4), np.nan)
    with pytest.raises(TrainingError, match="epoch 1"):
        train_vae(Dataset(images, np.zeros(8, dtype=int)), TrainConfig(**TINY))


def test_train_logreg_separates_clusters(rng):
    centers = np.array([[0.9, 0.1, 0.1, 0.1], [0.1, 0.1, 0.9, 0.9]])
    labels = np.repeat([4, 7], 50)
    images = centers[(labels == 7).astype(int)] + 0.05 * rng.standard_normal((100, 4))
    ds = Dataset(images, labels)
    result = train_logreg(ds, TrainConfig(epochs=30, batch_size=10, learning_rate=0.05))
    assert result.feature_map.classes == (4, 7)
    assert accuracy(result.feature_map, ds) > 0.95
    assert result.train_accuracy == pytest.approx(accuracy(result.feature_map, ds))


def test_train_logreg_needs_two_classes():
    with pytest.raises(InvalidInputError):
        train_logreg(Dataset(np.zeros((4, 3)), np.full(4, 2)), TrainConfig(epochs=1))


def test_encode_returns_posterior_mean(tiny_vae, rng):
    x = rng.uniform(0.0, 1.0, 784)
    z = encode(tiny_vae.encoder, x)
    assert z.shape == (2,)
    assert np.allclose(z, tiny_vae.encoder.net.forward(x)[:2])
    xs = rng.uniform(0.0, 1.0, (3, 784))
    assert np.allclose(encode_batch(tiny_vae.encoder, xs), [encode(tiny_vae.encoder, x) for x in xs], atol=1e-12)
    with pytest.raises(DimensionMismatchError):
        encode(tiny_vae.encoder, np.zeros(10))


def test_invert_recovers_latent_of_linear_decoder(rng):
    a = np.array([[1.0, 0.5], [0.0, 2.0], [1.0, -1.0]])
    sigma_net = init_mlp([2, 3], [Activation.SOFTPLUS], rng)
    gen = StochasticGenerator(linear_generator(a), sigma_net)
    z_true = np.array([0.7, -0.4])
    z = invert(gen, a @ z_true, seed=0)
    assert np.allclose(z, z_true, atol=1e-5)
