"""Scalar-field grids and eigenvector streamlines over a 2D latent window."""
import logging
from dataclasses import dataclass
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .coordinator import run_jobs
from .errors import (
    DimensionMismatchError,
    InvalidInputError,
    LatentGeometryError,
    NonPositiveDefiniteError,
    NonPsdError,
    SingularMetricError,
)
from .linalg import condition_number, log_sqrt_det
from .metrics.base import MetricProvider
from .models import Bounds, FieldKind, StreamKind

logger = logging.getLogger(__name__)

MISSING = float("nan")


@dataclass(frozen=True)
class GridField:
    kind: FieldKind
    bounds: Bounds
    nx: int
    ny: int
    # values[j, i] belongs to node (xs[i], ys[j])
    values: np.ndarray

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.bounds.xmin, self.bounds.xmax, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(self.bounds.ymin, self.bounds.ymax, self.ny)

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.values).sum())


@dataclass(frozen=True)
class StreamlineSet:
    kind: StreamKind
    step_length: float
    lines: List[np.ndarray]


def _require_planar(p: MetricProvider) -> None:
    if p.latent_dim != 2:
        raise DimensionMismatchError(f"field diagnostics need a 2D latent space, got {p.latent_dim}")


def node_value(p: MetricProvider, kind: FieldKind, z: np.ndarray) -> float:
    """Field value at one node; singular metrics give the NaN marker"""
    m = p.metric_at(z)
    try:
        if kind == FieldKind.LOG_CONDITION:
            return float(np.log(condition_number(m)))
        return log_sqrt_det(m)
    except (SingularMetricError, NonPositiveDefiniteError, NonPsdError):
        return MISSING


def _grid_row(p: MetricProvider, kind: FieldKind, xs: np.ndarray, y: float) -> np.ndarray:
    return np.array([node_value(p, kind, np.array([x, y])) for x in xs])


def scalar_grid(
    p: MetricProvider,
    kind: FieldKind,
    bounds: Bounds,
    resolution: Tuple[int, int],
    workers: int = 1,
) -> GridField:
    _require_planar(p)
    nx, ny = resolution
    if nx < 2 or ny < 2:
        raise InvalidInputError(f"grid resolution must be at least 2 per axis, got {resolution}")
    xs = np.linspace(bounds.xmin, bounds.xmax, nx)
    ys = np.linspace(bounds.ymin, bounds.ymax, ny)

    outcomes = run_jobs([partial(_grid_row, p, kind, xs, y) for y in ys], workers)
    for outcome in outcomes:
        if not outcome.ok:
            raise outcome.error
    field = GridField(kind=kind, bounds=bounds, nx=nx, ny=ny, values=np.vstack([o.value for o in outcomes]))
    if field.n_missing:
        logger.info("%d of %d grid nodes have a singular metric", field.n_missing, nx * ny)
    return field


def trace_streamline(
    p: MetricProvider,
    kind: StreamKind,
    seed: Sequence[float],
    step_length: float,
    n_steps: int,
    bounds: Optional[Bounds] = None,
    initial_direction: Sequence[float] = (1.0, 0.0),
) -> np.ndarray:
    """Euler polyline along the extreme eigenvector field, shape (k, 2)"""
    z = np.asarray(seed, dtype=float)
    previous = np.asarray(initial_direction, dtype=float)
    points = [z]
    for _ in range(n_steps):
        try:
            eig = p.eigen_at(z)
        except LatentGeometryError as e:
            logger.debug("streamline from %s stopped at %s: %s", seed, z, e)
            break
        direction = eig.min_vector if kind == StreamKind.MIN_EIG else eig.max_vector
        direction = direction / np.linalg.norm(direction)
        if direction @ previous < 0:
            direction = -direction
        z = z + step_length * direction
        if bounds is not None and not bounds.contains(z[0], z[1]):
            break
        points.append(z)
        previous = direction
    return np.vstack(points)


def streamlines(
    p: MetricProvider,
    kind: StreamKind,
    seeds: Sequence[Sequence[float]],
    step_length: float,
    n_steps: int,
    bounds: Optional[Bounds] = None,
    initial_direction: Sequence[float] = (1.0, 0.0),
    workers: int = 1,
) -> StreamlineSet:
    _require_planar(p)
    if step_length <= 0 or n_steps < 1:
        raise InvalidInputError(f"need step_length > 0 and n_steps >= 1, got {step_length}, {n_steps}")
    seeds = np.asarray(seeds, dtype=float)
    if seeds.ndim != 2 or seeds.shape[1] != 2:
        raise DimensionMismatchError(f"seeds must be a list of 2D points, got shape {seeds.shape}")
    jobs = [
        partial(trace_streamline, p, kind, seed, step_length, n_steps, bounds, initial_direction)
        for seed in seeds
    ]
    outcomes = run_jobs(jobs, workers)
    for outcome in outcomes:
        if not outcome.ok:
            raise outcome.error
    return StreamlineSet(kind=kind, step_length=step_length, lines=[o.value for o in outcomes])
