"""Pull-back metrics measured in a feature space F through f o g.

For a stochastic decoder the variance term only needs the diagonal of
M_FX = J_FX^T J_FX, because the output covariance is diagonal. J_FX is
evaluated at the decoder mean mu(z).
"""
import numpy as np

from ..linalg import SymMatrix
from ..models import MetricVariant
from ..network import FeatureMap, Mlp, StochasticGenerator
from .base import MetricProvider


class FeatureMetric(MetricProvider):
    """J_XZ^T M_FX J_XZ at x = g(z)"""

    def __init__(self, generator: Mlp, feature: FeatureMap):
        super().__init__(MetricVariant.FEATURE_DET, generator.input_dim)
        self.generator = generator
        self.feature = feature

    def metric_at(self, z: np.ndarray) -> SymMatrix:
        z = self._point(z)
        x = self.generator.forward(z)
        chained = self.feature.jacobian(x) @ self.generator.jacobian(z)
        return self._finite(chained.T @ chained)

    def speeds(self, zs: np.ndarray, vs: np.ndarray) -> np.ndarray:
        xs = self.generator.forward_batch(zs)
        x_dot = self.generator.jvp_batch(zs, vs)
        return np.linalg.norm(self.feature.jvp_batch(xs, x_dot), axis=1)


class StochasticFeatureMetric(MetricProvider):
    """J_mu^T M_FX J_mu + J_sigma^T diag(M_FX) J_sigma, M_FX taken at mu(z)"""

    def __init__(self, generator: StochasticGenerator, feature: FeatureMap):
        super().__init__(MetricVariant.FEATURE_STOCH, generator.latent_dim)
        self.generator = generator
        self.feature = feature

    def metric_at(self, z: np.ndarray) -> SymMatrix:
        z = self._point(z)
        x = self.generator.mu_net.forward(z)
        j_fx = self.feature.jacobian(x)
        j_mu = self.generator.mu_net.jacobian(z)
        j_sigma = self.generator.sigma_net.jacobian(z)
        chained = j_fx @ j_mu
        # diagonal entries of J_FX^T J_FX; off-diagonals are zeroed
        m_hat = np.einsum("kd,kd->d", j_fx, j_fx)
        return self._finite(chained.T @ chained + j_sigma.T @ (m_hat[:, None] * j_sigma))

    def speeds(self, zs: np.ndarray, vs: np.ndarray) -> np.ndarray:
        mu_net, sigma_net = self.generator.mu_net, self.generator.sigma_net
        xs = mu_net.forward_batch(zs)
        mean_term = self.feature.jvp_batch(xs, mu_net.jvp_batch(zs, vs))
        sigma_dot = sigma_net.jvp_batch(zs, vs)
        m_hat = self.feature.metric_diagonal_batch(xs)
        return np.sqrt(np.sum(mean_term ** 2, axis=1) + np.sum(m_hat * sigma_dot ** 2, axis=1))
