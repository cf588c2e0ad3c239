from abc import ABC, abstractmethod
from typing import List

import numpy as np

from ..errors import DimensionMismatchError, InvalidInputError, NonPsdError, UnsupportedModeError
from ..linalg import EigenPairs, SymMatrix, psd_eig, quadratic_form
from ..models import MetricVariant

SPEED_TOL = 1e-10


class MetricProvider(ABC):
    """Base class for all pull-back metric evaluators"""

    # True when the path energy telescopes over output-space differences,
    # which is what makes exact vjp gradients possible
    telescoping: bool = False

    def __init__(self, variant: MetricVariant, latent_dim: int):
        self.variant = variant
        self.latent_dim = latent_dim

    @abstractmethod
    def metric_at(self, z: np.ndarray) -> SymMatrix:
        """Metric tensor at latent point z"""
        pass

    def _point(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.latent_dim,):
            raise DimensionMismatchError(f"expected latent point of shape ({self.latent_dim},), got {z.shape}")
        if not np.all(np.isfinite(z)):
            raise InvalidInputError("latent point has non-finite entries")
        return z

    @staticmethod
    def _finite(m: np.ndarray) -> SymMatrix:
        if not np.all(np.isfinite(m)):
            raise InvalidInputError("network produced a non-finite metric")
        return 0.5 * (m + m.T)

    def speed(self, z: np.ndarray, v: np.ndarray) -> float:
        """sqrt(v^T M(z) v); tiny negative radicands clamp to 0"""
        m = self.metric_at(z)
        v = np.asarray(v, dtype=float)
        if v.shape != (self.latent_dim,):
            raise DimensionMismatchError(f"expected velocity of shape ({self.latent_dim},), got {v.shape}")
        q = quadratic_form(m, v)
        if q < -SPEED_TOL * max(1.0, float(np.linalg.norm(m)) * float(v @ v)):
            raise NonPsdError(f"negative squared speed {q:.3e}")
        return float(np.sqrt(max(q, 0.0)))

    def speeds(self, zs: np.ndarray, vs: np.ndarray) -> np.ndarray:
        """Speeds along a batch of (point, velocity) rows"""
        return np.array([self.speed(z, v) for z, v in zip(zs, vs)])

    def eigen_at(self, z: np.ndarray) -> EigenPairs:
        return psd_eig(self.metric_at(z))

    def embed(self, zs: np.ndarray) -> List[np.ndarray]:
        """Output-space images whose squared differences make up the discrete energy"""
        raise UnsupportedModeError(f"{self.variant.value} metric has no telescoping energy")

    def embed_vjp(self, zs: np.ndarray, cotangents: List[np.ndarray]) -> np.ndarray:
        """Sum of cotangent^T J over the embedded outputs, row by row"""
        raise UnsupportedModeError(f"{self.variant.value} metric has no telescoping energy")
