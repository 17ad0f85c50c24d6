"""Pair metrics, proximity classification, pole-geodesic detection."""

import math

import numpy as np
import pytest

from curvednbody.dynamics import SystemState
from curvednbody.geometry import CurvatureSpace
from curvednbody.integrator import IntegratorConfig, integrate
from curvednbody.scenarios import builtin_scenarios
from curvednbody.singularity import (classify, min_pair_metric, pair_metrics,
                                     painleve_monitor, pole_geodesic_detect)

from conftest import random_state


def state_on_sphere(points, masses=None):
    q = np.asarray(points, dtype=float)
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    n = q.shape[0]
    m = np.ones(n) if masses is None else np.asarray(masses, dtype=float)
    return SystemState(0.0, m, q, np.zeros_like(q), CurvatureSpace(1.0))


def test_pair_metrics_values():
    st = state_on_sphere([[1, 0, 0], [0, 1, 0], [-1, 1e-4, 0]])
    tab = pair_metrics(st)
    assert tab.s[0, 1] == pytest.approx(0.0, abs=1e-15)
    assert tab.d[0, 1] == pytest.approx(1.0, rel=1e-12)
    # pair (0, 2) is nearly antipodal: s close to -1, d close to 0
    assert tab.s[0, 2] < -0.99999999
    assert tab.d[0, 2] == pytest.approx(1e-8, rel=1e-3)
    i, j = tab.argmin_pair()
    assert (i, j) == (0, 2)
    assert min_pair_metric(st) == pytest.approx(tab.d[0, 2])


def test_classify_clear():
    st = state_on_sphere([[1, 0, 0], [0, 1, 0]])
    cls = classify(st, 1e-6)
    assert cls.global_label == "clear"
    assert not cls.near_collision and not cls.near_antipodal


def test_classify_collision_and_antipodal():
    a = 1e-4
    st = state_on_sphere([[1, 0, 0], [math.cos(a), math.sin(a), 0]])
    cls = classify(st, 1e-6)
    assert cls.global_label == "collision"
    assert cls.near_collision == [(0, 1)]

    st2 = state_on_sphere([[1, 0, 0], [-math.cos(a), math.sin(a), 0]])
    cls2 = classify(st2, 1e-6)
    assert cls2.global_label == "antipodal"
    assert cls2.near_antipodal == [(0, 1)]


def test_classify_collision_antipodal_shares_body():
    # two bodies meeting at one pole while a third sits at the opposite pole
    a = 1e-4
    st = state_on_sphere([[math.sin(a), 0, math.cos(a)],
                          [-math.sin(a), 0, math.cos(a)],
                          [0, 0, -1]])
    cls = classify(st, 1e-6)
    assert cls.global_label == "collision_antipodal"
    assert (0, 1) in cls.near_collision
    assert (0, 2) in cls.near_antipodal and (1, 2) in cls.near_antipodal


def test_classify_hybrid_disjoint_pairs():
    # a colliding pair and an unrelated antipodal pair share no body
    a = 1e-4
    st = state_on_sphere([[1, 0, 0],
                          [math.cos(a), math.sin(a), 0],
                          [0, math.sin(a), math.cos(a)],
                          [0, 0, -1]])
    cls = classify(st, 1e-6)
    assert cls.near_collision == [(0, 1)]
    assert cls.near_antipodal == [(2, 3)]
    assert cls.global_label == "hybrid"


def test_hyperbolic_never_antipodal(rng):
    # on the upper sheet kappa q_i . q_j >= 1, so only collisions exist
    st = random_state(rng, 3, -1.0)
    tab = pair_metrics(st)
    iu = np.triu_indices(3, 1)
    assert (tab.s[iu] >= 1.0 - 1e-12).all()
    cls = classify(st, 1e6)  # absurd eps: everything flags as collision
    assert cls.near_antipodal == []


def test_pole_geodesic_detection_meridian():
    # two bodies on the same meridian plane through both poles
    st = state_on_sphere([[0.5, 0.0, math.sqrt(0.75)],
                          [-0.3, 0.0, math.sqrt(0.91)],
                          [0.1, 0.9, 0.2]])
    rep = pole_geodesic_detect(st, 1e-8)
    assert (0, 1) in rep.pairs
    assert not rep.degenerate_bodies


def test_pole_geodesic_detects_body_at_pole():
    st = state_on_sphere([[0.0, 0.0, 1.0], [0.5, 0.5, 0.1]])
    rep = pole_geodesic_detect(st, 1e-8)
    assert 0 in rep.degenerate_bodies


def test_pole_geodesic_exactly_collinear_projections_flagged():
    # antiparallel chart rays of different lengths: on one pole geodesic
    st = state_on_sphere([[0.5, 0.1, 0.86], [-0.25, -0.05, 0.95]])
    rep = pole_geodesic_detect(st, 1e-8)
    assert rep.pairs == [(0, 1)]
    assert rep.min_angle < 1e-12


def test_pole_geodesic_rotation_invariance_about_pole_axis(rng):
    st = state_on_sphere([[0.5, 0.1, 0.86], [-0.25, 0.05, 0.95], [0.3, 0.8, 0.5]])
    rep0 = pole_geodesic_detect(st, 1e-8)
    th = rng.uniform(0, 2 * math.pi)
    R = np.array([[math.cos(th), -math.sin(th), 0],
                  [math.sin(th), math.cos(th), 0],
                  [0, 0, 1.0]])
    st2 = SystemState(0.0, st.masses, st.q @ R.T, st.p @ R.T, st.space)
    rep1 = pole_geodesic_detect(st2, 1e-8)
    assert rep0.pairs == rep1.pairs
    assert rep0.min_angle == pytest.approx(rep1.min_angle, rel=1e-9)


def test_pole_geodesic_requires_positive_curvature(rng):
    st = random_state(rng, 2, -1.0)
    with pytest.raises(ValueError):
        pole_geodesic_detect(st, 1e-8)


def test_painleve_monitor_quiet_run():
    sc = builtin_scenarios()["s2_binary_orbit"]
    traj = integrate(sc.state(), sc.config(t_end=3.0))
    v = painleve_monitor(traj)
    assert not v.is_candidate
    assert not v.metric_to_zero
    assert v.liminf_metric > 1e-3


def test_painleve_monitor_collision_run():
    sc = builtin_scenarios()["two_body_collapse_s2"]
    traj = integrate(sc.state(), sc.config())
    v = painleve_monitor(traj)
    assert v.is_candidate and v.metric_to_zero
    assert not v.antipodal_approach
    assert v.liminf_metric <= 1e-6
