# Pull-back metric providers
from typing import Optional

import numpy as np

from ..errors import InvalidInputError
from ..linalg import SymMatrix
from ..models import FeatureKind, MetricVariant
from ..network import FeatureMap, Mlp, Model, StochasticGenerator, VaeModel
from .base import MetricProvider
from .conformal import ConformalMetric, gaussian_bumps
from .deterministic import DeterministicMetric
from .feature import FeatureMetric, StochasticFeatureMetric
from .stochastic import StochasticMetric

__all__ = [
    "MetricProvider", "DeterministicMetric", "StochasticMetric", "FeatureMetric",
    "StochasticFeatureMetric", "ConformalMetric", "gaussian_bumps", "build_metric",
    "metric_at", "speed",
]


def build_metric(
    model: Model,
    feature: Optional[FeatureMap] = None,
    variant: Optional[MetricVariant] = None,
) -> MetricProvider:
    """Pick the provider for a loaded model

    Without an explicit variant, deterministic generators get the plain or
    feature-chained deterministic metric and stochastic ones the expected
    (optionally feature-chained) metric. A stochastic model asked for a
    deterministic variant uses its mean network.
    """
    if isinstance(model, VaeModel):
        model = model.generator
    if isinstance(model, FeatureMap):
        raise InvalidInputError("a feature map alone does not define a generator")
    if feature is not None and feature.kind == FeatureKind.IDENTITY and variant is None:
        feature = None

    if variant is None:
        if isinstance(model, Mlp):
            variant = MetricVariant.DETERMINISTIC if feature is None else MetricVariant.FEATURE_DET
        else:
            variant = MetricVariant.STOCHASTIC if feature is None else MetricVariant.FEATURE_STOCH

    mean_net = model if isinstance(model, Mlp) else model.mu_net
    if variant == MetricVariant.DETERMINISTIC:
        return DeterministicMetric(mean_net)
    if variant == MetricVariant.FEATURE_DET:
        return FeatureMetric(mean_net, feature or FeatureMap.identity())
    if not isinstance(model, StochasticGenerator):
        raise InvalidInputError(f"{variant.value} metric needs a stochastic generator")
    if variant == MetricVariant.STOCHASTIC:
        return StochasticMetric(model)
    if variant == MetricVariant.FEATURE_STOCH:
        return StochasticFeatureMetric(model, feature or FeatureMap.identity())
    raise InvalidInputError(f"cannot build a {variant.value} metric from a model file")


def metric_at(p: MetricProvider, z: np.ndarray) -> SymMatrix:
    return p.metric_at(z)


def speed(p: MetricProvider, z: np.ndarray, v: np.ndarray) -> float:
    return p.speed(z, v)
