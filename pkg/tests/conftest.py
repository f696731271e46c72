"""Shared builders for random transport instances."""

import numpy as np
import pytest

from s3ot import PointMeasure, build_cost


def random_instance(rng, n, m, weight_low=0.1, weight_high=1.0, box=4.0):
    """One discrete pair on random planar supports with a shared cost matrix.

    Returns (a, b, cost) where cost is the raw (n, m) array for the
    squared-euclidean ground cost on coordinates divided by ``box``.
    """
    src = rng.uniform(0.0, box, (n, 2))
    tgt = rng.uniform(0.0, box, (m, 2))
    a = rng.uniform(weight_low, weight_high, n)
    b = rng.uniform(weight_low, weight_high, m)
    cost = np.asarray(build_cost(src, tgt, normalization=box).costs)
    return a, b, cost


def random_self_cost(rng, n, box=4.0):
    """Square symmetric cost on one random support."""
    src = rng.uniform(0.0, box, (n, 2))
    return np.asarray(build_cost(src, src, normalization=box).costs)


def three_point_scene():
    """Fixed annotations used by the desk-scale fit checks."""
    return PointMeasure(np.array([[8.5, 8.5], [24.5, 10.5], [16.5, 25.5]]))


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
