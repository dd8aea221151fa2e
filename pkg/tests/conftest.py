"""Shared fixtures and the brute-force flatness oracle.

The oracle deliberately avoids eigendecompositions: it scans unit normals
(an angle grid in the plane, seeded random directions on the sphere) and
polishes the best one with a shrinking pattern search.  That keeps it an
independent check on the closed-form fit in betascope.beta.
"""

import math

import numpy as np
import pytest

from betascope import Ball, WeightedPointMeasure


def _restrict(points, weights, ball):
    dist = np.linalg.norm(points - np.asarray(ball.center, dtype=float),
                          axis=1)
    keep = dist <= ball.radius
    return points[keep], weights[keep]


def _residual_for_normals(points, weights, normals):
    """Sum of weighted squared distances to the best hyperplane with each
    normal.  `normals` is (k, d), rows unit length.  Returns shape (k,)."""
    proj = normals @ points.T                    # (k, m)
    total = weights.sum()
    offsets = proj @ weights / total             # best offset per normal
    dev = proj - offsets[:, None]
    return (dev * dev) @ weights


def _polish_angle(points, weights, theta, step, iters=64):
    def f(t):
        v = np.array([[math.cos(t), math.sin(t)]])
        return _residual_for_normals(points, weights, v)[0]

    best = f(theta)
    for _ in range(iters):
        moved = False
        for cand in (theta - step, theta + step):
            val = f(cand)
            if val < best:
                best, theta, moved = val, cand, True
                break
        if not moved:
            step *= 0.5
    return best


def _polish_sphere(points, weights, v, step, iters=96):
    def f(u):
        return _residual_for_normals(points, weights, u[None, :])[0]

    best = f(v)
    for _ in range(iters):
        # orthonormal tangent frame at v
        a = np.array([1.0, 0.0, 0.0])
        if abs(v[0]) > 0.9:
            a = np.array([0.0, 1.0, 0.0])
        t1 = np.cross(v, a)
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(v, t1)
        moved = False
        for d in (t1, -t1, t2, -t2):
            cand = v + step * d
            cand /= np.linalg.norm(cand)
            val = f(cand)
            if val < best:
                best, v, moved = val, cand, True
                break
        if not moved:
            step *= 0.5
    return best


def oracle_beta2(measure, ball):
    """Brute-force beta_2 for hyperplane fits (n = d - 1)."""
    points, weights = _restrict(measure.points, measure.weights, ball)
    n = measure.target_dim
    d = measure.dim
    assert n == d - 1, "oracle only handles hyperplane fits"
    if len(points) == 0 or weights.sum() <= 0.0:
        return 0.0
    if d == 2:
        grid = np.linspace(0.0, math.pi, 10_000, endpoint=False)
        normals = np.stack([np.cos(grid), np.sin(grid)], axis=1)
        res = _residual_for_normals(points, weights, normals)
        k = int(np.argmin(res))
        residual = _polish_angle(points, weights, grid[k],
                                 step=grid[1] - grid[0])
    elif d == 3:
        rng = np.random.default_rng(20_260_821)
        normals = rng.normal(size=(10_000, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        res = _residual_for_normals(points, weights, normals)
        k = int(np.argmin(res))
        residual = _polish_sphere(points, weights, normals[k], step=0.05)
    else:
        raise NotImplementedError(d)
    return math.sqrt(max(residual, 0.0) / ball.radius ** (n + 2))


def random_instance(rng, d):
    """A small random measure plus a ball that captures most of it."""
    m = int(rng.integers(4, 51))
    points = rng.uniform(-1.0, 1.0, size=(m, d))
    weights = np.exp(rng.uniform(-2.0, 1.0, size=m))
    measure = WeightedPointMeasure(points, weights, d - 1)
    center = points[int(rng.integers(m))] + rng.normal(scale=0.05, size=d)
    dist = np.linalg.norm(points - center, axis=1)
    radius = float(np.quantile(dist, 0.8)) + 1e-3
    return measure, Ball(tuple(center), radius)


def two_cluster():
    """A segment plus a tight sunflower blob: forces density stopping."""
    seg = np.stack([np.linspace(0.0, 1.0, 400), np.zeros(400)], axis=1)
    i = np.arange(100, dtype=float)
    rad = 1.2e-4 * np.sqrt((i + 0.5) / 100.0)
    ang = i * 2.3999632297286533
    blob = np.stack([0.5 + rad * np.cos(ang), 0.5 + rad * np.sin(ang)],
                    axis=1)
    pts = np.vstack([seg, blob])
    return WeightedPointMeasure(pts, np.full(500, 0.002), 1)


@pytest.fixture(scope="session")
def cluster_measure():
    return two_cluster()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
