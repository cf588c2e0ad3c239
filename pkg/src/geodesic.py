"""Curve length, path energy and the shorter-curve optimizer.

The discrete energy for deterministic and stochastic decoders telescopes over
output-space differences, S * sum_i |g(C(t_{i+1})) - g(C(t_i))|^2 (plus the
same term for sigma), so its exact gradient needs only vector-Jacobian
products. Feature-chained metrics integrate C'(t)^T M C'(t) by the trapezoid
rule instead and are differentiated by central differences.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DegenerateEndpointsError, InvalidInputError, UnsupportedModeError
from .metrics.base import MetricProvider
from .models import CurveOptConfig, GradientMode
from .optim import backtracking_step
from .spline import BSplineCurve, derivative_matrix, eval_matrix, insert_control_point, straight_line_curve

logger = logging.getLogger(__name__)


def _trapezoid(values: np.ndarray) -> float:
    h = 1.0 / (len(values) - 1)
    return float(h * (np.sum(values) - 0.5 * (values[0] + values[-1])))


def curve_length(c: BSplineCurve, p: MetricProvider, n: int = 256) -> float:
    """Riemannian length by composite trapezoid over n uniform parameters"""
    if n < 2:
        raise InvalidInputError(f"need at least 2 quadrature points, got {n}")
    ts = np.linspace(0.0, 1.0, n)
    zs = eval_matrix(c, ts) @ c.control_points
    vs = derivative_matrix(c, ts) @ c.control_points
    return _trapezoid(p.speeds(zs, vs))


class CurveEnergy:
    """Discrete path energy of curves sharing one knot vector"""

    def __init__(self, knots_from: BSplineCurve, p: MetricProvider, segments: int = 64):
        if segments < 1:
            raise InvalidInputError(f"need at least 1 energy segment, got {segments}")
        self.p = p
        self.segments = segments
        ts = np.linspace(0.0, 1.0, segments + 1)
        self.basis = eval_matrix(knots_from, ts)
        self.velocity_basis = None if p.telescoping else derivative_matrix(knots_from, ts)

    def __call__(self, points: np.ndarray) -> float:
        zs = self.basis @ points
        if self.p.telescoping:
            return float(self.segments * sum(np.sum(np.diff(out, axis=0) ** 2) for out in self.p.embed(zs)))
        return _trapezoid(self.p.speeds(zs, self.velocity_basis @ points) ** 2)

    def exact_gradient(self, points: np.ndarray) -> np.ndarray:
        """dE/dP for every control point via network vjps"""
        if not self.p.telescoping:
            raise UnsupportedModeError(
                f"exact_vjp gradients are unavailable for the {self.p.variant.value} metric"
            )
        zs = self.basis @ points
        cotangents = []
        for out in self.p.embed(zs):
            diff = 2.0 * self.segments * np.diff(out, axis=0)
            cot = np.zeros_like(out)
            cot[1:] += diff
            cot[:-1] -= diff
            cotangents.append(cot)
        return self.basis.T @ self.p.embed_vjp(zs, cotangents)

    def finite_difference_gradient(self, points: np.ndarray, h: float = 1e-4) -> np.ndarray:
        """Central differences over the interior control points; endpoint rows are 0"""
        grad = np.zeros_like(points)
        trial = points.copy()
        for i in range(1, len(points) - 1):
            for j in range(points.shape[1]):
                trial[i, j] = points[i, j] + h
                upper = self(trial)
                trial[i, j] = points[i, j] - h
                lower = self(trial)
                trial[i, j] = points[i, j]
                grad[i, j] = (upper - lower) / (2.0 * h)
        return grad

    def interior_gradient(self, points: np.ndarray, mode: GradientMode, h: float = 1e-4) -> np.ndarray:
        if mode == GradientMode.EXACT_VJP:
            return self.exact_gradient(points)[1:-1]
        return self.finite_difference_gradient(points, h)[1:-1]


def path_energy(c: BSplineCurve, p: MetricProvider, s: int = 64) -> float:
    return CurveEnergy(c, p, s)(c.control_points)


def resolve_mode(p: MetricProvider, mode: Optional[GradientMode]) -> GradientMode:
    if mode is None:
        return GradientMode.EXACT_VJP if p.telescoping else GradientMode.FINITE_DIFFERENCE
    if mode == GradientMode.EXACT_VJP and not p.telescoping:
        raise UnsupportedModeError(f"exact_vjp gradients are unavailable for the {p.variant.value} metric")
    return mode


def energy_gradient(
    c: BSplineCurve,
    p: MetricProvider,
    s: int = 64,
    mode: Optional[GradientMode] = GradientMode.EXACT_VJP,
    h: float = 1e-4,
) -> np.ndarray:
    """Gradient of path_energy w.r.t. the interior control points, shape (n-1, d)"""
    return CurveEnergy(c, p, s).interior_gradient(c.control_points, resolve_mode(p, mode), h)


@dataclass(frozen=True)
class ShortenResult:
    curve: BSplineCurve
    d_straight: float
    d_short: float
    iterations: int
    control_points: int
    fallback_used: bool
    energy_trace: List[float] = field(default_factory=list)
    insertions: List[int] = field(default_factory=list)

    @property
    def rel_improvement(self) -> float:
        return (self.d_straight - self.d_short) / self.d_straight


def shorten(
    z0: np.ndarray,
    z1: np.ndarray,
    p: MetricProvider,
    cfg: Optional[CurveOptConfig] = None,
) -> ShortenResult:
    """Gradient descent on the path energy from the straight line

    A control point is inserted whenever the energy plateaus; optimization ends
    at max_control_points or max_iters. The shortest curve seen at a plateau or
    at the end is returned, falling back to the straight line if nothing beat it.
    """
    cfg = cfg or CurveOptConfig()
    z0 = np.asarray(z0, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    if np.array_equal(z0, z1):
        raise DegenerateEndpointsError("cannot shorten a curve between identical endpoints")
    mode = resolve_mode(p, cfg.gradient_mode)

    straight = straight_line_curve(z0, z1, 2)
    d_straight = curve_length(straight, p, cfg.quad_points)
    best_curve, best_length = straight, d_straight

    curve = straight
    energy_of = CurveEnergy(curve, p, cfg.energy_segments)
    points = curve.control_points.copy()
    energy = energy_of(points)
    trace = [energy]
    insertions: List[int] = []
    window_start = 0
    step = cfg.step_size
    iterations = 0

    while iterations < cfg.max_iters:
        iterations += 1
        grad = energy_of.interior_gradient(points, mode, cfg.fd_step)
        plateau = not np.all(np.isfinite(grad)) or not np.any(grad)
        if not plateau:
            interior_shape = points[1:-1].shape

            def objective(flat: np.ndarray) -> float:
                trial = points.copy()
                trial[1:-1] = flat.reshape(interior_shape)
                return energy_of(trial)

            accepted = backtracking_step(objective, points[1:-1].ravel(), energy, grad.ravel(),
                                         step, cfg.max_halvings)
            if accepted is None:
                plateau = True
            else:
                points[1:-1] = accepted.x.reshape(interior_shape)
                energy = accepted.value
                trace.append(energy)
                step = min(accepted.step * cfg.step_growth, cfg.max_step_size)

        recent = trace[window_start:]
        if not plateau and len(recent) > cfg.plateau_window:
            reference = recent[-cfg.plateau_window - 1]
            plateau = reference - energy <= cfg.plateau_rel_tol * abs(reference)

        if plateau:
            curve = curve.with_control_points(points)
            length = curve_length(curve, p, cfg.quad_points)
            if length < best_length:
                best_curve, best_length = curve, length
            if curve.n_control >= cfg.max_control_points:
                break
            curve = insert_control_point(curve)
            points = curve.control_points.copy()
            energy_of = CurveEnergy(curve, p, cfg.energy_segments)
            energy = energy_of(points)
            window_start = len(trace)
            step = cfg.step_size
            insertions.append(iterations)
            logger.debug("plateau at iteration %d, now %d control points", iterations, curve.n_control)
    else:
        curve = curve.with_control_points(points)
        length = curve_length(curve, p, cfg.quad_points)
        if length < best_length:
            best_curve, best_length = curve, length

    fallback = best_curve is straight
    logger.debug("shortened %.6f -> %.6f after %d iterations (fallback=%s)",
                 d_straight, best_length, iterations, fallback)
    return ShortenResult(
        curve=best_curve,
        d_straight=d_straight,
        d_short=best_length,
        iterations=iterations,
        control_points=best_curve.n_control,
        fallback_used=fallback,
        energy_trace=trace,
        insertions=insertions,
    )
