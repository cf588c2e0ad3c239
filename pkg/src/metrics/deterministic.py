from typing import List

import numpy as np

from ..linalg import SymMatrix
from ..models import MetricVariant
from ..network import Mlp
from .base import MetricProvider


class DeterministicMetric(MetricProvider):
    """M = J^T J for a deterministic generator g"""

    telescoping = True

    def __init__(self, generator: Mlp):
        super().__init__(MetricVariant.DETERMINISTIC, generator.input_dim)
        self.generator = generator

    def metric_at(self, z: np.ndarray) -> SymMatrix:
        jac = self.generator.jacobian(self._point(z))
        return self._finite(jac.T @ jac)

    def speeds(self, zs: np.ndarray, vs: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.generator.jvp_batch(zs, vs), axis=1)

    def embed(self, zs: np.ndarray) -> List[np.ndarray]:
        return [self.generator.forward_batch(zs)]

    def embed_vjp(self, zs: np.ndarray, cotangents: List[np.ndarray]) -> np.ndarray:
        return self.generator.vjp_batch(zs, cotangents[0])
