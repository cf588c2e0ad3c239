from typing import List

import numpy as np

from ..linalg import SymMatrix
from ..models import MetricVariant
from ..network import StochasticGenerator
from .base import MetricProvider


class StochasticMetric(MetricProvider):
    """Expected metric of a Gaussian decoder: J_mu^T J_mu + J_sigma^T J_sigma"""

    telescoping = True

    def __init__(self, generator: StochasticGenerator):
        super().__init__(MetricVariant.STOCHASTIC, generator.latent_dim)
        self.generator = generator

    def metric_at(self, z: np.ndarray) -> SymMatrix:
        z = self._point(z)
        j_mu = self.generator.mu_net.jacobian(z)
        j_sigma = self.generator.sigma_net.jacobian(z)
        return self._finite(j_mu.T @ j_mu + j_sigma.T @ j_sigma)

    def speeds(self, zs: np.ndarray, vs: np.ndarray) -> np.ndarray:
        mu_dot = self.generator.mu_net.jvp_batch(zs, vs)
        sigma_dot = self.generator.sigma_net.jvp_batch(zs, vs)
        return np.sqrt(np.sum(mu_dot ** 2, axis=1) + np.sum(sigma_dot ** 2, axis=1))

    def embed(self, zs: np.ndarray) -> List[np.ndarray]:
        # the sigma floor is a constant offset and cancels in differences
        return [self.generator.mu_net.forward_batch(zs), self.generator.sigma_net.forward_batch(zs)]

    def embed_vjp(self, zs: np.ndarray, cotangents: List[np.ndarray]) -> np.ndarray:
        return (self.generator.mu_net.vjp_batch(zs, cotangents[0])
                + self.generator.sigma_net.vjp_batch(zs, cotangents[1]))
