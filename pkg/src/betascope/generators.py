"""Reference measures for tests and the command line.

All generators emit unit-total-mass planar measures with target dimension 1
and are fully determined by their parameters (the graph generator by its
seed).
"""

from __future__ import annotations

import numpy as np

from .measure import WeightedPointMeasure

__all__ = ["segment", "lipschitz_graph", "cantor4", "square_area"]


def segment(count: int) -> WeightedPointMeasure:
    """count uniform points on the unit segment [0,1] x {0}."""
    if count < 2:
        raise ValueError(f"need at least 2 points, got {count}")
    xs = np.linspace(0.0, 1.0, count)
    points = np.column_stack((xs, np.zeros(count)))
    return WeightedPointMeasure(points, np.full(count, 1.0 / count), 1)


def lipschitz_graph(count: int, slope_amp: float = 0.8,
                    seed: int = 0) -> WeightedPointMeasure:
    """Graph of a seeded piecewise-linear function with slopes in [-amp, amp]."""
    if count < 2:
        raise ValueError(f"need at least 2 points, got {count}")
    if not 0.0 <= slope_amp <= 1.0:
        raise ValueError(f"slope_amp must lie in [0, 1], got {slope_amp}")
    rng = np.random.default_rng(seed)
    knots = max(2, count // 64)
    slopes = rng.uniform(-slope_amp, slope_amp, knots)
    knot_x = np.linspace(0.0, 1.0, knots + 1)
    knot_y = np.concatenate(([0.0], np.cumsum(slopes * np.diff(knot_x))))
    xs = np.linspace(0.0, 1.0, count)
    ys = np.interp(xs, knot_x, knot_y)
    points = np.column_stack((xs, ys))
    return WeightedPointMeasure(points, np.full(count, 1.0 / count), 1)


def cantor4(generation: int) -> WeightedPointMeasure:
    """Corners of the four-corner Cantor set with contraction 1/4.

    Generation g has 4^g points: each coordinate is a sum over levels
    j = 1..g of digits in {0, 3/4^j}; generation 1 gives the four corners
    (0,0), (0,3/4), (3/4,0), (3/4,3/4), each of weight 1/4.
    """
    if generation < 1:
        raise ValueError(f"generation must be >= 1, got {generation}")
    count = 4**generation
    codes = np.arange(count)
    x = np.zeros(count)
    y = np.zeros(count)
    for level in range(1, generation + 1):
        digit = codes % 4
        codes = codes // 4
        step = 3.0 * 4.0 ** (-level)
        x += step * (digit % 2)
        y += step * (digit // 2)
    points = np.column_stack((x, y))
    return WeightedPointMeasure(points, np.full(count, 4.0 ** (-generation)), 1)


def square_area(side: int) -> WeightedPointMeasure:
    """side x side grid on the unit square, target dimension still 1.

    The area measure seen as a 1-dimensional candidate: density grows with
    the radius, the standard example without Ahlfors-David regularity.
    """
    if side < 2:
        raise ValueError(f"need at least a 2x2 grid, got {side}")
    axis = np.linspace(0.0, 1.0, side)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    points = np.column_stack((gx.ravel(), gy.ravel()))
    weights = np.full(side * side, 1.0 / (side * side))
    return WeightedPointMeasure(points, weights, 1)
