from typing import Callable, Sequence

import numpy as np

from ..linalg import SymMatrix
from ..models import MetricVariant
from .base import MetricProvider


class ConformalMetric(MetricProvider):
    """Synthetic metric h(z)^2 I for a positive scale field h"""

    def __init__(self, scale: Callable[[np.ndarray], np.ndarray], latent_dim: int = 2):
        super().__init__(MetricVariant.CONFORMAL, latent_dim)
        self.scale = scale

    def metric_at(self, z: np.ndarray) -> SymMatrix:
        h = float(self.scale(self._point(z)[None, :])[0])
        return self._finite(h * h * np.eye(self.latent_dim))

    def speeds(self, zs: np.ndarray, vs: np.ndarray) -> np.ndarray:
        return self.scale(np.asarray(zs, dtype=float)) * np.linalg.norm(vs, axis=1)


def gaussian_bumps(
    centers: Sequence[Sequence[float]],
    heights: Sequence[float],
    widths: Sequence[float],
) -> ConformalMetric:
    """h(z) = 1 + sum_i a_i exp(-|z - c_i|^2 / (2 w_i^2))"""
    centers = np.asarray(centers, dtype=float)
    heights = np.asarray(heights, dtype=float)
    widths = np.asarray(widths, dtype=float)

    def scale(zs: np.ndarray) -> np.ndarray:
        sq = np.sum((zs[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        return 1.0 + np.sum(heights * np.exp(-sq / (2.0 * widths ** 2)), axis=1)

    return ConformalMetric(scale, latent_dim=centers.shape[1])
