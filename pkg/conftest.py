import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.data import write_idx
from src.metrics import gaussian_bumps
from src.models import Activation, TrainConfig
from src.network import FeatureMap, Layer, Mlp, StochasticGenerator, init_mlp
from src.training import build_vae

MNIST_DIR = os.getenv("LATENT_GEODESICS_MNIST_DIR")

requires_mnist = pytest.mark.skipif(
    not MNIST_DIR or not Path(MNIST_DIR).is_dir(),
    reason="set LATENT_GEODESICS_MNIST_DIR to run the MNIST experiments",
)


def linear_generator(a) -> Mlp:
    """g(z) = A z as a single identity layer"""
    a = np.asarray(a, dtype=float)
    return Mlp((Layer(a, np.zeros(a.shape[0]), Activation.IDENTITY),))


def read_grid_csv(path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, size, maxval, body = raw.split(b"\n", 3)
    assert magic == b"P5" and maxval == b"255", f"{path} is not an 8-bit P5 image"
    width, height = (int(v) for v in size.split())
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)


def random_stochastic(rng: np.random.Generator, latent: int = 2, hidden: int = 6, out: int = 4) -> StochasticGenerator:
    mu_net = init_mlp([latent, hidden, out], [Activation.TANH, Activation.SIGMOID], rng)
    sigma_net = init_mlp([latent, hidden, out], [Activation.TANH, Activation.SOFTPLUS], rng)
    return StochasticGenerator(mu_net, sigma_net)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tanh_mlp(rng):
    return init_mlp([2, 5, 3], [Activation.TANH, Activation.TANH], rng)


@pytest.fixture
def stochastic(rng):
    return random_stochastic(rng)


@pytest.fixture
def logistic(rng):
    return FeatureMap.logistic(rng.standard_normal((3, 4)), rng.standard_normal(3), classes=[2, 5, 7])


@pytest.fixture
def two_bumps():
    """Two offset bumps that make straight lines through them expensive"""
    return gaussian_bumps(centers=[[0.0, 0.3], [0.0, -0.5]], heights=[4.0, 3.0], widths=[0.3, 0.25])


@pytest.fixture
def tiny_vae(rng):
    """Untrained 784-dim VAE, big enough for image strips and cheap to evaluate"""
    return build_vae(784, TrainConfig(hidden=[8], latent_dim=2, seed=3), np.random.default_rng(3))


@pytest.fixture
def idx_files(tmp_path, rng):
    """Synthetic 28x28 IDX pair with 40 images of digits 0..9"""
    images = rng.integers(0, 256, size=(40, 28, 28), dtype=np.uint8)
    labels = np.tile(np.arange(10, dtype=np.uint8), 4)
    images_path, labels_path = tmp_path / "images-idx3-ubyte", tmp_path / "labels-idx1-ubyte"
    write_idx(images_path, labels_path, images, labels)
    return images_path, labels_path
