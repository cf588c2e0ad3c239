"""Clamped cubic (order 4) B-spline curves in latent space.

Basis functions follow the Cox-de Boor recursion with 0/0 := 0. At t = 1 the
half-open order-1 indicator would vanish everywhere, so the last non-empty
knot span is used instead (left limit), which makes C(1) equal the last
control point.
"""
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from .errors import CurveDomainError, DegenerateEndpointsError, InvalidInputError, ModelFormatError

ORDER = 4
DEGREE = ORDER - 1


def basis_matrix(knots: np.ndarray, ts: np.ndarray, k: int = ORDER) -> np.ndarray:
    """Values N_{i,k}(t) for every basis index i (rows) and parameter t (columns)"""
    knots = np.asarray(knots, dtype=float)
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    lo, hi = knots[:-1, None], knots[1:, None]
    n = (lo <= ts) & (ts < hi)
    # left-limit convention at the right end of the domain
    last_span = np.flatnonzero(knots[:-1] < knots[1:])[-1]
    at_end = ts == knots[-1]
    n[last_span, at_end] = True
    n = n.astype(float)

    for order in range(2, k + 1):
        count = len(knots) - order
        left_den = knots[order - 1:order - 1 + count] - knots[:count]
        right_den = knots[order:order + count] - knots[1:1 + count]
        left_num = ts[None, :] - knots[:count, None]
        right_num = knots[order:order + count, None] - ts[None, :]
        left = np.divide(left_num, left_den[:, None], out=np.zeros_like(left_num), where=left_den[:, None] != 0)
        right = np.divide(right_num, right_den[:, None], out=np.zeros_like(right_num), where=right_den[:, None] != 0)
        n = left * n[:count] + right * n[1:count + 1]
    return n


def basis(i: int, k: int, t: float, knots: np.ndarray) -> float:
    """Single Cox-de Boor value N_{i,k}(t)"""
    knots = np.asarray(knots, dtype=float)
    if not 0 <= i < len(knots) - k:
        raise InvalidInputError(f"basis index {i} out of range for {len(knots)} knots at order {k}")
    return float(basis_matrix(knots, [t], k)[i, 0])


@dataclass(frozen=True)
class BSplineCurve:
    control_points: np.ndarray
    knots: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.control_points, dtype=float)
        knots = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "control_points", points)
        object.__setattr__(self, "knots", knots)
        if points.ndim != 2 or len(points) < ORDER:
            raise InvalidInputError(f"need at least {ORDER} control points, got shape {points.shape}")
        if len(knots) != len(points) + ORDER:
            raise InvalidInputError(f"expected {len(points) + ORDER} knots, got {len(knots)}")
        if np.any(np.diff(knots) < 0):
            raise InvalidInputError("knots must be nondecreasing")
        if np.any(knots[:ORDER] != 0.0) or np.any(knots[-ORDER:] != 1.0):
            raise InvalidInputError("knot vector must be clamped to 0 and 1 with multiplicity 4")
        interior = knots[ORDER:-ORDER]
        if np.any((interior <= 0.0) | (interior >= 1.0)):
            raise InvalidInputError("interior knots must lie strictly inside (0, 1)")

    @property
    def n_control(self) -> int:
        return len(self.control_points)

    @property
    def dim(self) -> int:
        return self.control_points.shape[1]

    @property
    def start(self) -> np.ndarray:
        return self.control_points[0]

    @property
    def end(self) -> np.ndarray:
        return self.control_points[-1]

    def with_control_points(self, points: np.ndarray) -> "BSplineCurve":
        return BSplineCurve(points, self.knots)

    def to_document(self) -> "CurveDocument":
        return CurveDocument(control_points=self.control_points.tolist(), knots=self.knots.tolist())


def _params(ts: Union[float, Sequence[float], np.ndarray]) -> np.ndarray:
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any((ts < 0.0) | (ts > 1.0)) or not np.all(np.isfinite(ts)):
        raise CurveDomainError("curve parameter must lie in [0, 1]")
    return ts


def eval_matrix(c: BSplineCurve, ts: np.ndarray) -> np.ndarray:
    """B such that eval(c, ts) == B @ control_points"""
    return basis_matrix(c.knots, _params(ts)).T


def derivative_matrix(c: BSplineCurve, ts: np.ndarray) -> np.ndarray:
    """D such that derivative(c, ts) == D @ control_points"""
    ts = _params(ts)
    n = c.n_control - 1
    lower = basis_matrix(c.knots, ts, ORDER - 1)  # N_{i,3}, i = 0..n+1
    spans = c.knots[4:4 + n] - c.knots[1:1 + n]  # T_{i+4} - T_{i+1}
    coef = np.divide(DEGREE * lower[1:n + 1], spans[:, None],
                     out=np.zeros((n, len(ts))), where=spans[:, None] != 0)
    d = np.zeros((len(ts), n + 1))
    d[:, 1:] += coef.T
    d[:, :-1] -= coef.T
    return d


def eval(c: BSplineCurve, t):
    """C(t) for a scalar t, or an array of points for an array of t"""
    points = eval_matrix(c, t) @ c.control_points
    return points[0] if np.ndim(t) == 0 else points


def derivative(c: BSplineCurve, t):
    velocities = derivative_matrix(c, t) @ c.control_points
    return velocities[0] if np.ndim(t) == 0 else velocities


def insert_control_point(c: BSplineCurve) -> BSplineCurve:
    """Insert a knot in the middle of the widest span without changing the curve

    Ties between equally wide spans go to the lowest span index.
    """
    knots, points = c.knots, c.control_points
    spans = np.diff(knots)
    l = DEGREE + int(np.argmax(spans[DEGREE:len(knots) - ORDER]))
    t_new = 0.5 * (knots[l] + knots[l + 1])

    new_points = np.empty((len(points) + 1, points.shape[1]))
    new_points[:l - DEGREE + 1] = points[:l - DEGREE + 1]
    new_points[l + 1:] = points[l:]
    for i in range(l, l - DEGREE, -1):
        a = (t_new - knots[i]) / (knots[i + DEGREE] - knots[i])
        new_points[i] = (1.0 - a) * points[i - 1] + a * points[i]
    new_knots = np.insert(knots, l + 1, t_new)
    return BSplineCurve(new_points, new_knots)


def uniform_knots(n_control: int) -> np.ndarray:
    interior = n_control - ORDER
    inner = np.arange(1, interior + 1) / (interior + 1)
    return np.concatenate([np.zeros(ORDER), inner, np.ones(ORDER)])


def straight_line_curve(z0: np.ndarray, z1: np.ndarray, interior: int = 2) -> BSplineCurve:
    """Control points equally spaced on [z0, z1], interior knots uniform"""
    z0 = np.asarray(z0, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    if z0.shape != z1.shape or z0.ndim != 1:
        raise InvalidInputError(f"endpoints must be vectors of equal length, got {z0.shape} and {z1.shape}")
    if interior < 2:
        raise InvalidInputError(f"need at least 2 interior control points, got {interior}")
    if np.array_equal(z0, z1):
        raise DegenerateEndpointsError("start and end point coincide")
    fractions = np.linspace(0.0, 1.0, interior + 2)
    points = z0[None, :] + fractions[:, None] * (z1 - z0)[None, :]
    points[0], points[-1] = z0, z1
    return BSplineCurve(points, uniform_knots(interior + 2))


class CurveDocument(BaseModel):
    """On-disk curve layout"""
    control_points: list[list[float]]
    knots: list[float]


def curve_from_document(doc: Union[CurveDocument, dict]) -> BSplineCurve:
    try:
        doc = CurveDocument.model_validate(doc) if isinstance(doc, dict) else doc
        return BSplineCurve(np.asarray(doc.control_points, dtype=float), np.asarray(doc.knots, dtype=float))
    except (ValidationError, ValueError) as e:
        raise ModelFormatError(f"invalid curve document: {e}") from e
