"""Shared helpers: randomized feasible states away from the singular set."""

import numpy as np
import pytest

from curvednbody.dynamics import SystemState
from curvednbody.geometry import CurvatureSpace, sdot


@pytest.fixture
def rng():
    return np.random.default_rng(20260813)


def surface_point(rng, space):
    """One uniform-ish point on the surface (upper sheet when kappa < 0)."""
    if space.kappa > 0:
        v = rng.normal(size=space.dim)
        v /= np.linalg.norm(v)
        return v * space.radius
    xy = rng.normal(size=2) * 0.8
    z = np.sqrt(1.0 / abs(space.kappa) + xy @ xy)
    return np.array([xy[0], xy[1], z])


def tangent_vector(rng, q, space):
    v = rng.normal(size=space.dim)
    v -= space.kappa * sdot(q, v, space.sigma) * q
    return v


def random_state(rng, n, kappa, dim=3, min_sep=0.05, max_tries=200):
    """Feasible random SystemState with every pair metric at least min_sep."""
    space = CurvatureSpace(kappa, dim)
    for _ in range(max_tries):
        q = np.stack([surface_point(rng, space) for _ in range(n)])
        s = kappa * sdot(q[:, None, :], q[None, :, :], space.sigma)
        iu = np.triu_indices(n, 1)
        if n > 1 and np.abs(s[iu] ** 2 - 1.0).min() < min_sep:
            continue
        masses = rng.uniform(0.5, 2.0, size=n)
        p = np.stack([tangent_vector(rng, q[i], space) for i in range(n)])
        return SystemState(0.0, masses, q, p, space)
    raise RuntimeError("could not sample a well-separated configuration")


def random_chart_points(rng, n, dim, kappa=1.0, min_den=0.05, max_tries=200):
    """Chart positions inside the ball with pair denominators away from zero."""
    for _ in range(max_tries):
        q = rng.uniform(-0.7, 0.7, size=(n, dim)) / np.sqrt(kappa)
        r2 = kappa * (q * q).sum(axis=1)
        if np.any(r2 >= 0.95):
            continue
        a = kappa * (q * q).sum(axis=1)
        g = kappa * (q @ q.T)
        iu = np.triu_indices(n, 1)
        den2 = np.outer(a, a) - g ** 2
        # relative to the pair scale, or tiny bodies make it unsatisfiable
        if n > 1 and (den2[iu] < min_den * np.outer(a, a)[iu]).any():
            continue
        return q
    raise RuntimeError("could not sample chart points away from diameters")
