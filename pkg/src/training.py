"""Desk-scale trainers for the artifacts the geometry code consumes.

The VAE is trained in two phases: encoder and mean decoder first under a
unit-variance Gaussian likelihood, then the softplus sigma head alone on the
frozen mean by Gaussian negative log-likelihood. Every random choice (init,
shuffling, held-out split, reparameterization noise) comes from one generator
seeded with ``TrainConfig.seed``.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from pydantic import BaseModel

from .data import Dataset
from .errors import DimensionMismatchError, EmptyDatasetError, InvalidInputError, TrainingError
from .models import Activation, TrainConfig
from .network import Encoder, FeatureMap, StochasticGenerator, VaeModel, softmax, init_mlp
from .optim import Adam, clip_gradients, gradient_descent

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


class EpochStats(BaseModel):
    """One line of training history"""
    phase: str
    epoch: int
    train_loss: Optional[float] = None
    heldout_elbo: Optional[float] = None
    accuracy: Optional[float] = None


@dataclass
class VaeTrainingResult:
    model: VaeModel
    history: List[EpochStats] = field(default_factory=list)

    @property
    def encoder(self) -> Encoder:
        return self.model.encoder

    @property
    def generator(self) -> StochasticGenerator:
        return self.model.generator


@dataclass
class LogRegTrainingResult:
    feature_map: FeatureMap
    train_accuracy: float
    history: List[EpochStats] = field(default_factory=list)


def build_vae(input_dim: int, cfg: TrainConfig, rng: np.random.Generator) -> VaeModel:
    """Encoder D-h1-..-(d+d) and mirrored mean/sigma decoders"""
    hidden = list(cfg.hidden)
    tanh = [Activation.TANH] * len(hidden)
    encoder = init_mlp([input_dim, *hidden, 2 * cfg.latent_dim], tanh + [Activation.IDENTITY], rng)
    decoder_widths = [cfg.latent_dim, *reversed(hidden), input_dim]
    mu_net = init_mlp(decoder_widths, tanh + [Activation.SIGMOID], rng)
    sigma_net = init_mlp(decoder_widths, tanh + [Activation.SOFTPLUS], rng)
    return VaeModel(Encoder(encoder), StochasticGenerator(mu_net, sigma_net, cfg.sigma_floor))


def _split(n: int, cfg: TrainConfig, rng: np.random.Generator):
    order = rng.permutation(n)
    n_hold = max(1, int(round(cfg.holdout_fraction * n))) if n > 1 else 0
    heldout, train = order[:n_hold], order[n_hold:]
    return train, (heldout if len(heldout) else train)


def _kl(mean: np.ndarray, logvar: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(np.exp(logvar) + mean ** 2 - 1.0 - logvar, axis=1)


def _gaussian_nll(x: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    return np.sum(np.log(sigma) + 0.5 * ((x - mu) / sigma) ** 2, axis=1) + 0.5 * x.shape[1] * LOG_2PI


def heldout_elbo(model: VaeModel, images: np.ndarray, rng: np.random.Generator,
                 unit_variance: bool = False) -> float:
    """Single-sample ELBO estimate averaged over images"""
    mean, logvar = model.encoder.posterior_batch(images)
    z = mean + np.exp(0.5 * logvar) * rng.standard_normal(mean.shape)
    mu = model.generator.mu_net.forward_batch(z)
    if unit_variance:
        sigma = np.ones_like(mu)
    else:
        sigma = model.generator.sigma_floor + model.generator.sigma_net.forward_batch(z)
    return float(np.mean(-_gaussian_nll(images, mu, sigma) - _kl(mean, logvar)))


def _check_finite(loss: float, phase: str, epoch: int, batch: int) -> None:
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite {phase} loss at epoch {epoch}, batch {batch}")


def train_vae(ds: Dataset, cfg: TrainConfig) -> VaeTrainingResult:
    if len(ds) == 0:
        raise EmptyDatasetError("cannot train a VAE on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    model = build_vae(ds.image_dim, cfg, rng)
    encoder, mu_net, sigma_net = model.encoder.net, model.generator.mu_net, model.generator.sigma_net
    train_idx, heldout_idx = _split(len(ds), cfg, rng)
    heldout = ds.images[heldout_idx]
    initial = heldout_elbo(model, heldout, np.random.default_rng(cfg.seed + 1), unit_variance=True)
    history: List[EpochStats] = [EpochStats(phase="init", epoch=0, heldout_elbo=initial)]

    optimizer = Adam(encoder.parameters() + mu_net.parameters(), cfg.learning_rate,
                     cfg.beta1, cfg.beta2, cfg.adam_eps)
    d = cfg.latent_dim
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(train_idx)
        total = 0.0
        for batch, start in enumerate(range(0, len(order), cfg.batch_size)):
            x = ds.images[order[start:start + cfg.batch_size]]
            b = len(x)
            enc_trace = encoder.trace_batch(x)
            mean, logvar = enc_trace.output[:, :d], enc_trace.output[:, d:]
            std = np.exp(0.5 * logvar)
            eps = rng.standard_normal(mean.shape)
            z = mean + std * eps
            dec_trace = mu_net.trace_batch(z)
            mu = dec_trace.output

            loss = float(np.mean(0.5 * np.sum((x - mu) ** 2, axis=1) + _kl(mean, logvar)))
            _check_finite(loss, "vae", epoch, batch)
            total += loss * b

            mu_grads, dz = mu_net.backward_batch(dec_trace, (mu - x) / b)
            d_mean = dz + mean / b
            d_logvar = dz * eps * 0.5 * std + 0.5 * (np.exp(logvar) - 1.0) / b
            enc_grads, _ = encoder.backward_batch(enc_trace, np.concatenate([d_mean, d_logvar], axis=1))
            grads, _ = clip_gradients(enc_grads + mu_grads, cfg.grad_clip)
            optimizer.step(grads)

        elbo = heldout_elbo(model, heldout, np.random.default_rng(cfg.seed + 1), unit_variance=True)
        history.append(EpochStats(phase="mean", epoch=epoch, train_loss=total / len(train_idx), heldout_elbo=elbo))
        logger.info("vae epoch %d: loss %.4f, held-out ELBO %.4f", epoch, total / len(train_idx), elbo)

    optimizer = Adam(sigma_net.parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    for epoch in range(1, cfg.variance_epochs + 1):
        order = rng.permutation(train_idx)
        total = 0.0
        for batch, start in enumerate(range(0, len(order), cfg.batch_size)):
            x = ds.images[order[start:start + cfg.batch_size]]
            b = len(x)
            mean, logvar = model.encoder.posterior_batch(x)
            z = mean + np.exp(0.5 * logvar) * rng.standard_normal(mean.shape)
            mu = mu_net.forward_batch(z)
            sig_trace = sigma_net.trace_batch(z)
            sigma = cfg.sigma_floor + sig_trace.output

            loss = float(np.mean(_gaussian_nll(x, mu, sigma)))
            _check_finite(loss, "variance", epoch, batch)
            total += loss * b

            d_sigma = (1.0 / sigma - (x - mu) ** 2 / sigma ** 3) / b
            grads, _ = sigma_net.backward_batch(sig_trace, d_sigma)
            grads, _ = clip_gradients(grads, cfg.grad_clip)
            optimizer.step(grads)

        elbo = heldout_elbo(model, heldout, np.random.default_rng(cfg.seed + 1))
        history.append(EpochStats(phase="variance", epoch=epoch, train_loss=total / len(train_idx), heldout_elbo=elbo))
        logger.info("variance epoch %d: nll %.4f, held-out ELBO %.4f", epoch, total / len(train_idx), elbo)

    return VaeTrainingResult(model=model, history=history)


def train_logreg(ds: Dataset, cfg: TrainConfig) -> LogRegTrainingResult:
    """Softmax regression over the classes present in ds"""
    classes = np.unique(ds.labels)
    if len(classes) < 2:
        raise InvalidInputError(f"logistic regression needs at least 2 classes, got {classes.tolist()}")
    rng = np.random.default_rng(cfg.seed)
    targets = np.searchsorted(classes, ds.labels)
    onehot = np.eye(len(classes))[targets]
    weights = np.zeros((len(classes), ds.image_dim))
    bias = np.zeros(len(classes))
    optimizer = Adam([weights, bias], cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    history: List[EpochStats] = []

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(ds))
        total = 0.0
        for batch, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            x, y = ds.images[idx], onehot[idx]
            p = softmax(x @ weights.T + bias)
            loss = float(-np.mean(np.sum(y * np.log(np.clip(p, 1e-300, None)), axis=1)))
            _check_finite(loss, "logreg", epoch, batch)
            total += loss * len(idx)
            residual = (p - y) / len(idx)
            optimizer.step([residual.T @ x + cfg.l2 * weights, residual.sum(axis=0)])

        accuracy = float(np.mean(np.argmax(ds.images @ weights.T + bias, axis=1) == targets))
        history.append(EpochStats(phase="logreg", epoch=epoch, train_loss=total / len(ds), accuracy=accuracy))
        logger.info("logreg epoch %d: loss %.4f, accuracy %.4f", epoch, total / len(ds), accuracy)

    feature_map = FeatureMap.logistic(weights.copy(), bias.copy(), classes.tolist())
    return LogRegTrainingResult(feature_map, history[-1].accuracy, history)


def accuracy(f: FeatureMap, ds: Dataset) -> float:
    return float(np.mean(f.predict(ds.images) == ds.labels))


def encode(enc: Encoder, x: np.ndarray) -> np.ndarray:
    """Posterior mean of one image"""
    x = np.asarray(x, dtype=float)
    if x.shape != (enc.input_dim,):
        raise DimensionMismatchError(f"expected image of dim {enc.input_dim}, got shape {x.shape}")
    return enc.posterior(x)[0]


def encode_batch(enc: Encoder, xs: np.ndarray) -> np.ndarray:
    return enc.posterior_batch(xs)[0]


def invert(
    gen: StochasticGenerator,
    x: np.ndarray,
    seed: int,
    n_starts: int = 8,
    max_iters: int = 300,
    init: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Latent point whose mean decode is closest to x, best over random starts"""
    x = np.asarray(x, dtype=float)
    if x.shape != (gen.output_dim,):
        raise DimensionMismatchError(f"expected image of dim {gen.output_dim}, got shape {x.shape}")
    rng = np.random.default_rng(seed)
    starts = list(rng.standard_normal((n_starts, gen.latent_dim)))
    if init is not None:
        starts.insert(0, np.asarray(init, dtype=float))

    def loss(z: np.ndarray) -> float:
        r = gen.mu_net.forward(z) - x
        return float(r @ r)

    def grad(z: np.ndarray) -> np.ndarray:
        return gen.mu_net.vjp(z, 2.0 * (gen.mu_net.forward(z) - x))

    best_z, best_loss = None, np.inf
    for start in starts:
        if not np.isfinite(loss(start)):
            raise TrainingError("non-finite inversion loss at a start point")
        z, value = gradient_descent(loss, grad, start, step_size=1.0, max_iters=max_iters)
        if value < best_loss:
            best_z, best_loss = z, value
    logger.debug("inversion loss %.3e after %d starts", best_loss, len(starts))
    return best_z
