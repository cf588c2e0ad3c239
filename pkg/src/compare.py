"""Pick comparable interpolations across two generators.

Two models see the same pairs of test images. Each encodes both endpoints,
shortens the curve between them and reports its relative improvement; pairs
whose improvements differ by at most a threshold sit in similar metric
neighbourhoods and are the fair ones to compare visually.
"""
import logging
from dataclasses import dataclass
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .coordinator import run_jobs
from .data import Dataset
from .errors import DimensionMismatchError, InvalidInputError, UnsupportedFeatureError
from .geodesic import shorten
from .metrics import build_metric
from .models import CompareConfig, ComparisonRow, CurveOptConfig, FeatureKind, MetricVariant, ModelImprovement
from .network import FeatureMap, Mlp, StochasticGenerator, VaeModel
from .spline import BSplineCurve, eval_matrix, straight_line_curve
from .training import encode, invert

logger = logging.getLogger(__name__)

TILE = 28

Generator = Union[Mlp, StochasticGenerator]
ComparedModel = Union[VaeModel, StochasticGenerator]


@dataclass(frozen=True)
class PairSample:
    start_index: int
    end_index: int
    start_image: np.ndarray
    end_image: np.ndarray


def sample_test_pairs(ds: Dataset, n: int, seed: int) -> List[PairSample]:
    """n disjoint pairs drawn uniformly without replacement"""
    if n < 1:
        raise InvalidInputError(f"need at least one pair, got {n}")
    if len(ds) < 2 * n:
        raise InvalidInputError(f"dataset of {len(ds)} images is too small for {n} disjoint pairs")
    idx = np.random.default_rng(seed).choice(len(ds), 2 * n, replace=False)
    return [
        PairSample(int(a), int(b), ds.images[a], ds.images[b])
        for a, b in zip(idx[0::2], idx[1::2])
    ]


def _mean_net(gen: Generator) -> Mlp:
    return gen if isinstance(gen, Mlp) else gen.mu_net


def endpoint_latent(model: ComparedModel, x: np.ndarray, seed: int) -> np.ndarray:
    """Encoder mean when the model has one, gradient inversion otherwise"""
    if isinstance(model, VaeModel):
        return encode(model.encoder, x)
    return invert(model, x, seed)


def model_improvement(
    model: ComparedModel,
    pair: PairSample,
    pair_index: int,
    variant: MetricVariant,
    cfg: CurveOptConfig,
    seed: int,
) -> ModelImprovement:
    z0 = endpoint_latent(model, pair.start_image, seed + 2 * pair_index)
    z1 = endpoint_latent(model, pair.end_image, seed + 2 * pair_index + 1)
    result = shorten(z0, z1, build_metric(model, variant=variant), cfg)
    return ModelImprovement(
        z0=z0.tolist(),
        z1=z1.tolist(),
        d_straight=result.d_straight,
        d_short=result.d_short,
        rel_improvement=result.rel_improvement,
    )


def rank_rows(rows: List[ComparisonRow]) -> List[ComparisonRow]:
    """Set rank 1..n by ascending gap, ties by pair index; row order is kept"""
    order = sorted(range(len(rows)), key=lambda i: (rows[i].gap, rows[i].pair_index))
    ranked = list(rows)
    for position, i in enumerate(order, start=1):
        ranked[i] = rows[i].model_copy(update={"rank": position})
    return ranked


def compare_models(
    model_a: ComparedModel,
    model_b: ComparedModel,
    pairs: Sequence[PairSample],
    cfg: Optional[CompareConfig] = None,
) -> List[ComparisonRow]:
    cfg = cfg or CompareConfig()
    for name, model in (("model_a", model_a), ("model_b", model_b)):
        out_dim = model.generator.output_dim if isinstance(model, VaeModel) else model.output_dim
        for pair in pairs:
            if pair.start_image.shape != (out_dim,) or pair.end_image.shape != (out_dim,):
                raise DimensionMismatchError(f"{name} works on images of dim {out_dim}")

    jobs = []
    for i, pair in enumerate(pairs):
        for model in (model_a, model_b):
            jobs.append(partial(model_improvement, model, pair, i, cfg.variant, cfg.shorten, cfg.seed))
    outcomes = run_jobs(jobs, cfg.workers)
    for outcome in outcomes:
        if not outcome.ok:
            raise outcome.error

    rows = []
    for i, pair in enumerate(pairs):
        a, b = outcomes[2 * i].value, outcomes[2 * i + 1].value
        gap = abs(a.rel_improvement - b.rel_improvement)
        rows.append(ComparisonRow(
            pair_index=i,
            start_index=pair.start_index,
            end_index=pair.end_index,
            model_a=a,
            model_b=b,
            gap=gap,
            selected=False,
        ))
    chosen = {r.pair_index for r in select_rows(rows, cfg.threshold)}
    rows = rank_rows([r.model_copy(update={"selected": r.pair_index in chosen}) for r in rows])
    logger.info("%d of %d pairs within gap %.3f", len(chosen), len(rows), cfg.threshold)
    return rows


def select_rows(rows: Sequence[ComparisonRow], threshold: float) -> List[ComparisonRow]:
    if threshold < 0:
        raise InvalidInputError(f"threshold must be nonnegative, got {threshold}")
    return [r for r in rows if r.gap <= threshold]


def _decode_along(gen: Generator, curve: BSplineCurve, n: int) -> np.ndarray:
    net = _mean_net(gen)
    if curve.dim != net.input_dim:
        raise DimensionMismatchError(f"curve lives in {curve.dim}D but the generator expects {net.input_dim}D")
    return net.forward_batch(eval_matrix(curve, np.linspace(0.0, 1.0, n)) @ curve.control_points)


def interpolation_sequence(gen: Generator, curve: BSplineCurve, n_frames: int, tile: int = TILE) -> np.ndarray:
    """Mean decodes at uniform t tiled into one (tile, tile * n_frames) strip"""
    if n_frames < 2:
        raise InvalidInputError(f"need at least 2 frames, got {n_frames}")
    if _mean_net(gen).output_dim != tile * tile:
        raise DimensionMismatchError(f"outputs of dim {_mean_net(gen).output_dim} are not {tile}x{tile} images")
    frames = _decode_along(gen, curve, n_frames)
    return np.hstack([frame.reshape(tile, tile) for frame in frames])


def class_sequence(f: FeatureMap, gen: Generator, curve: BSplineCurve, n_eval: int) -> np.ndarray:
    if f.kind == FeatureKind.IDENTITY:
        raise UnsupportedFeatureError("class transitions need a logistic regression feature map")
    if n_eval < 2:
        raise InvalidInputError(f"need at least 2 evaluation points, got {n_eval}")
    return f.predict(_decode_along(gen, curve, n_eval))


def class_transition_count(f: FeatureMap, gen: Generator, curve: BSplineCurve, n_eval: int) -> int:
    labels = class_sequence(f, gen, curve, n_eval)
    return int(np.count_nonzero(labels[1:] != labels[:-1]))


def interpolation_curves(
    gen: StochasticGenerator,
    z0: np.ndarray,
    z1: np.ndarray,
    cfg: Optional[CurveOptConfig] = None,
    feature: Optional[FeatureMap] = None,
) -> Dict[str, Tuple[BSplineCurve, float]]:
    """Straight, stochastic-shortened and (with a feature) feature-shortened curves

    Each entry carries its relative improvement over the straight line.
    """
    curves = {"straight": (straight_line_curve(z0, z1, 2), 0.0)}
    result = shorten(z0, z1, build_metric(gen, variant=MetricVariant.STOCHASTIC), cfg)
    curves["shortened"] = (result.curve, result.rel_improvement)
    if feature is not None and feature.kind != FeatureKind.IDENTITY:
        result = shorten(z0, z1, build_metric(gen, feature, MetricVariant.FEATURE_STOCH), cfg)
        curves["feature_shortened"] = (result.curve, result.rel_improvement)
    return curves
