#!/usr/bin/env python3
"""
Tests for curve length, path energy, its gradients and the shortener,
including a grid-graph Dijkstra oracle for a synthetic two-bump metric
"""

import heapq
from math import gcd, hypot

import numpy as np
import pytest

from conftest import linear_generator
from src.errors import DegenerateEndpointsError, InvalidInputError, UnsupportedModeError
from src.geodesic import curve_length, energy_gradient, path_energy, shorten
from src.metrics import DeterministicMetric, StochasticFeatureMetric, StochasticMetric, gaussian_bumps
from src.models import CurveOptConfig, GradientMode
from src.spline import BSplineCurve, straight_line_curve, uniform_knots

GRID_N = 201
GRID_LO, GRID_HI = -1.5, 1.5


def grid_dijkstra(scale, start, goal, n=GRID_N, lo=GRID_LO, hi=GRID_HI):
    """Shortest path length on an n x n grid graph under the conformal factor `scale`

    Nodes connect to every offset with |dx|, |dy| <= 3 and gcd 1; edge costs are
    Simpson's rule of the scale along the segment times its Euclidean length.
    """
    step = (hi - lo) / (n - 1)
    half = np.linspace(lo, hi, 2 * n - 1)
    xs, ys = np.meshgrid(half, half, indexing="ij")
    h = scale(np.column_stack([xs.ravel(), ys.ravel()])).reshape(xs.shape).tolist()
    offsets = [
        (dx, dy) for dx in range(-3, 4) for dy in range(-3, 4)
        if (dx, dy) != (0, 0) and gcd(abs(dx), abs(dy)) == 1
    ]
    lengths = {o: step * hypot(*o) for o in offsets}

    dist = {start: 0.0}
    done = set()
    heap = [(0.0, start)]
    while heap:
        d, node = heapq.heappop(heap)
        if node in done:
            continue
        if node == goal:
            return d
        done.add(node)
        i, j = node
        h_here = h[2 * i][2 * j]
        for dx, dy in offsets:
            a, b = i + dx, j + dy
            if not (0 <= a < n and 0 <= b < n) or (a, b) in done:
                continue
            weight = lengths[(dx, dy)] * (h_here + 4.0 * h[2 * i + dx][2 * j + dy] + h[2 * a][2 * b]) / 6.0
            if d + weight < dist.get((a, b), np.inf):
                dist[(a, b)] = d + weight
                heapq.heappush(heap, (d + weight, (a, b)))
    raise AssertionError("goal unreachable")


def node_point(i, j):
    step = (GRID_HI - GRID_LO) / (GRID_N - 1)
    return np.array([GRID_LO + i * step, GRID_LO + j * step])


# The horizontal chord through y = 0 is left out: descent from it settles in the
# valley between the bumps, a local geodesic longer than the grid detour.
ORACLE_PAIRS = [
    ((20, 160), (180, 160)),
    ((100, 20), (100, 180)),
    ((30, 40), (170, 160)),
    ((30, 160), (170, 40)),
    ((40, 130), (160, 130)),
    ((20, 70), (180, 70)),
    ((130, 20), (130, 180)),
    ((50, 180), (150, 20)),
    ((40, 60), (120, 180)),
    ((160, 40), (60, 150)),
]


@pytest.fixture
def oracle_bumps():
    return gaussian_bumps(centers=[[0.3, 0.2], [-0.4, -0.3]], heights=[2.0, 1.5], widths=[0.3, 0.3])


def random_curve(rng, n_control=6):
    return BSplineCurve(rng.standard_normal((n_control, 2)), uniform_knots(n_control))


def test_identity_metric_straight_line():
    p = DeterministicMetric(linear_generator(np.eye(2)))
    z0, z1 = np.array([0.2, -1.0]), np.array([1.5, 2.0])
    curve = straight_line_curve(z0, z1)
    assert curve_length(curve, p, 256) == pytest.approx(np.linalg.norm(z1 - z0), abs=1e-9)
    assert path_energy(curve, p, 64) == pytest.approx(np.linalg.norm(z1 - z0) ** 2, abs=1e-6)


def test_linear_generator_straight_line(rng):
    a = rng.standard_normal((3, 2))
    p = DeterministicMetric(linear_generator(a))
    z0, z1 = rng.standard_normal(2), rng.standard_normal(2)
    curve = straight_line_curve(z0, z1)
    assert curve_length(curve, p) == pytest.approx(np.linalg.norm(a @ (z1 - z0)), abs=1e-6)
    assert path_energy(curve, p) == pytest.approx(np.linalg.norm(a @ (z1 - z0)) ** 2, abs=1e-6)


def test_length_quadrature_converges(rng, tanh_mlp):
    p = DeterministicMetric(tanh_mlp)
    curve = random_curve(rng)
    dense = curve_length(curve, p, 100_000)
    assert abs(curve_length(curve, p, 256) - dense) / dense < 1e-3


def test_energy_bounds_squared_length(rng, tanh_mlp, stochastic, logistic):
    curve = random_curve(rng)
    for p in [DeterministicMetric(tanh_mlp), StochasticFeatureMetric(stochastic, logistic)]:
        length = curve_length(curve, p, 256)
        assert path_energy(curve, p, 256) >= length ** 2 * (1.0 - 1e-3)


def test_quadrature_needs_two_points(rng, tanh_mlp):
    with pytest.raises(InvalidInputError):
        curve_length(random_curve(rng), DeterministicMetric(tanh_mlp), 1)


def test_gradient_vanishes_on_linear_geodesic(rng):
    p = DeterministicMetric(linear_generator(rng.standard_normal((3, 2))))
    curve = straight_line_curve(np.zeros(2), np.array([1.0, 2.0]))
    grad = energy_gradient(curve, p, 64, GradientMode.EXACT_VJP)
    assert grad.shape == (2, 2)
    assert np.linalg.norm(grad) < 1e-6


def test_exact_gradient_matches_finite_differences(rng, tanh_mlp, stochastic):
    curve = random_curve(rng, 7)
    for p in [DeterministicMetric(tanh_mlp), StochasticMetric(stochastic)]:
        exact = energy_gradient(curve, p, 64, GradientMode.EXACT_VJP)
        fd = energy_gradient(curve, p, 64, GradientMode.FINITE_DIFFERENCE)
        assert exact.shape == (curve.n_control - 2, 2)
        assert np.linalg.norm(exact - fd) / np.linalg.norm(fd) < 1e-3


def test_exact_gradient_unsupported_for_feature_metric(rng, stochastic, logistic):
    p = StochasticFeatureMetric(stochastic, logistic)
    with pytest.raises(UnsupportedModeError):
        energy_gradient(random_curve(rng), p, 16, GradientMode.EXACT_VJP)
    with pytest.raises(UnsupportedModeError):
        shorten(np.zeros(2), np.ones(2), p, CurveOptConfig(gradient_mode=GradientMode.EXACT_VJP))


def test_shorten_on_constant_metric_finds_nothing(rng):
    cfg = CurveOptConfig(max_iters=200)
    for _ in range(20):
        p = DeterministicMetric(linear_generator(rng.standard_normal((3, 2))))
        z0, z1 = rng.standard_normal(2), rng.standard_normal(2)
        result = shorten(z0, z1, p, cfg)
        assert result.d_short <= result.d_straight
        assert result.rel_improvement < 1e-3


def test_shorten_keeps_endpoints_and_energy_decreases(oracle_bumps):
    z0, z1 = node_point(20, 100), node_point(180, 100)
    result = shorten(z0, z1, oracle_bumps, CurveOptConfig(max_iters=300))
    assert np.array_equal(result.curve.start, z0)
    assert np.array_equal(result.curve.end, z1)
    trace = np.array(result.energy_trace)
    assert np.all(np.diff(trace) <= 1e-12 * trace[0])
    assert result.d_short < result.d_straight
    assert not result.fallback_used
    assert result.control_points == result.curve.n_control


def test_shorten_rejects_identical_endpoints(oracle_bumps):
    with pytest.raises(DegenerateEndpointsError):
        shorten(np.ones(2), np.ones(2), oracle_bumps)


def test_shorten_matches_grid_dijkstra(oracle_bumps):
    for start, goal in ORACLE_PAIRS:
        oracle = grid_dijkstra(oracle_bumps.scale, start, goal)
        result = shorten(node_point(*start), node_point(*goal), oracle_bumps)
        assert result.d_short <= result.d_straight
        assert abs(result.d_short - oracle) / oracle < 0.05, (start, goal, result.d_short, oracle)


def test_shorten_between_bumps_stays_above_global_length(oracle_bumps):
    start, goal = (20, 100), (180, 100)
    oracle = grid_dijkstra(oracle_bumps.scale, start, goal)
    result = shorten(node_point(*start), node_point(*goal), oracle_bumps)
    assert result.d_short < result.d_straight
    assert result.d_short > 0.99 * oracle
