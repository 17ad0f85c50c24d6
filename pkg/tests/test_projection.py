"""Chart projection, the two chart fields, inertia identities, diagnostics."""

import math

import numpy as np
import pytest

from curvednbody.dynamics import SystemState
from curvednbody.geometry import CurvatureSpace
from curvednbody.integrator import IntegratorConfig, integrate, integrate_chart, step
from curvednbody.projection import (ChartDomainError, DiameterSingularityError,
                                    ProjectedState, _integrate_to_times,
                                    chart_force_function, chart_force_gradient,
                                    collision_diagnostics, equivalence_check,
                                    hypothesis_windows, inertia_accel,
                                    inertia_accel_full, inertia_rate, lagrange_gap,
                                    lift, moment_of_inertia, orth_project,
                                    orth_rhs, planarity_diagnose,
                                    projected_angular_momentum, pushforward_rhs,
                                    rho, rotation_taking, sundman_bound_check,
                                    total_collision_diagnose)
from curvednbody.scenarios import builtin_scenarios, _triangle_on_circle

from conftest import random_chart_points, random_state


def spiral_triangle_chart(radial=0.22, tangential=0.25, r=0.45):
    qb = np.empty((3, 2))
    pb = np.empty((3, 2))
    for k in range(3):
        phi = 2 * math.pi * k / 3
        c, s = math.cos(phi), math.sin(phi)
        qb[k] = (r * c, r * s)
        pb[k] = (-radial * c - tangential * s, -radial * s + tangential * c)
    return np.ones(3), qb, pb


def test_project_lift_roundtrip(rng):
    st = random_state(rng, 3, 1.0)
    st.q[:, 2] = np.abs(st.q[:, 2]) + 0.1
    from curvednbody.geometry import renormalize
    st.q, st.p = renormalize(st.q, st.p, st.space)
    ps = orth_project(st)
    back = lift(ps)
    assert np.abs(back.q - st.q).max() < 1e-14
    assert np.abs(back.p - st.p).max() < 1e-12


def test_project_rejects_lower_hemisphere():
    q = np.array([[0.0, 0.0, -1.0]])
    st = SystemState(0.0, np.ones(1), q, np.zeros((1, 3)), CurvatureSpace(1.0))
    with pytest.raises(ChartDomainError):
        orth_project(st)


def test_projected_state_validates_ball():
    with pytest.raises(ChartDomainError):
        ProjectedState(0.0, np.ones(1), np.array([[1.5, 0.0]]),
                       np.zeros((1, 2)), 1.0)
    with pytest.raises(ValueError):
        ProjectedState(0.0, np.ones(1), np.array([[0.5, 0.0]]),
                       np.zeros((1, 2)), -1.0)


@pytest.mark.parametrize("dim", [2, 3])
def test_chart_gradient_euler_identity(rng, dim):
    # degree-zero homogeneity: each body's gradient row is orthogonal to its
    # own chart position
    for _ in range(20):
        q = random_chart_points(rng, 3, dim)
        ps = ProjectedState(0.0, np.ones(3), q, np.zeros_like(q), 1.0)
        g = chart_force_gradient(ps)
        res = np.abs((q * g).sum(axis=1))
        scale = np.maximum(1.0, np.linalg.norm(q, axis=1) * np.linalg.norm(g, axis=1))
        assert (res / scale).max() < 1e-12


def test_chart_force_scale_invariance(rng):
    # U(lambda qbar) = U(qbar): check a random rescaling that stays in-ball
    q = random_chart_points(rng, 3, 2) * 0.5
    ps1 = ProjectedState(0.0, np.ones(3), q, np.zeros_like(q), 1.0)
    ps2 = ProjectedState(0.0, np.ones(3), 1.7 * q, np.zeros_like(q), 1.0)
    assert chart_force_function(ps1) == pytest.approx(chart_force_function(ps2), rel=1e-12)


def test_orth_rhs_raises_on_diameter():
    q = np.array([[0.4, 0.0], [-0.3, 0.0]])
    ps = ProjectedState(0.0, np.ones(2), q, np.zeros_like(q), 1.0)
    with pytest.raises(DiameterSingularityError) as exc:
        orth_rhs(ps)
    assert exc.value.pairs == [(0, 1)]


def test_two_fields_share_coordinate_part(rng):
    q = random_chart_points(rng, 3, 2)
    p = rng.normal(size=q.shape) * 0.3
    ps = ProjectedState(0.0, np.ones(3), q, p, 1.0)
    dq_l, dp_l = orth_rhs(ps)
    dq_p, dp_p = pushforward_rhs(ps)
    assert np.abs(dq_l - dq_p).max() < 1e-15
    assert np.abs(dp_l - dp_p).max() > 1e-6  # generically distinct fields


def test_pushforward_rhs_matches_projected_full_rhs(rng):
    from curvednbody.dynamics import rhs

    st = random_state(rng, 3, 1.0)
    st.q[:, 2] = np.abs(st.q[:, 2]) + 0.2
    from curvednbody.geometry import renormalize
    st.q, st.p = renormalize(st.q, st.p, st.space)
    ps = orth_project(st)
    dq_full, dp_full = rhs(st)
    dq_c, dp_c = pushforward_rhs(ps)
    assert np.abs(dq_c - dq_full[:, :2]).max() < 1e-12
    assert np.abs(dp_c - dp_full[:, :2]).max() < 1e-12


def test_angular_momentum_forms(rng):
    q = random_chart_points(rng, 4, 2)
    p = rng.normal(size=q.shape)
    ps = ProjectedState(0.0, np.ones(4), q, p, 1.0)
    c = projected_angular_momentum(ps)
    assert c[0] == 0.0 and c[1] == 0.0
    manual = (q[:, 0] * p[:, 1] - q[:, 1] * p[:, 0]).sum()
    assert c[2] == pytest.approx(manual, rel=1e-14)


def test_inertia_rate_finite_difference():
    masses, qb, pb = spiral_triangle_chart()
    cfg = IntegratorConfig()
    delta = 1e-4
    times = np.array([0.0, 0.5 - delta, 0.5, 0.5 + delta])
    qs, ps, reached = _integrate_to_times("projected", masses, qb, pb, times, 1.0, cfg, None)
    assert reached == 4
    I = [(masses * (q ** 2).sum(axis=1)).sum() for q in qs[1:]]
    st = ProjectedState(0.5, masses, qs[2], ps[2], 1.0)
    fd = (I[2] - I[0]) / (2 * delta)
    assert fd == pytest.approx(inertia_rate(st), rel=1e-8)


def test_inertia_accel_literal_closed_form():
    masses, qb, pb = spiral_triangle_chart()
    cfg = IntegratorConfig()
    delta = 1e-3
    for tbase in (0.4, 1.1):
        times = np.array([0.0, tbase - delta, tbase, tbase + delta])
        qs, ps, reached = _integrate_to_times("projected", masses, qb, pb, times, 1.0, cfg, None)
        assert reached == 4
        I = [(masses * (q ** 2).sum(axis=1)).sum() for q in qs[1:]]
        fd = (I[0] - 2 * I[1] + I[2]) / delta ** 2
        st = ProjectedState(tbase, masses, qs[2], ps[2], 1.0)
        assert fd == pytest.approx(inertia_accel(st), rel=1e-5)


def test_inertia_accel_full_flow_finite_difference():
    # the full-flow expression includes the gradient term; check it against
    # a second difference of I along the constrained dynamics
    sc = builtin_scenarios()["rotating_triangle_s2"]
    st0 = sc.state()
    cfg = IntegratorConfig(t_end=0.7)
    traj = integrate(st0, cfg)
    st = traj.state_at(-1)
    delta = 1e-3
    fwd, _ = step(st, delta)
    back, _ = step(st, -delta)
    def chart_inertia(s):
        return float((s.masses * (s.q[:, :2] ** 2).sum(axis=1)).sum())
    fd = (chart_inertia(fwd) - 2 * chart_inertia(st) + chart_inertia(back)) / delta ** 2
    assert fd == pytest.approx(inertia_accel_full(st), rel=1e-5)


def test_rho_forms_agree(rng):
    q = random_chart_points(rng, 3, 2)
    p = rng.normal(size=q.shape)
    ps = ProjectedState(0.0, np.ones(3), q, p, 1.0)
    c = projected_angular_momentum(ps)
    assert rho(ps) == pytest.approx(rho(c, 3))
    assert rho(ps) == pytest.approx(rho(float(c[2]), 3))
    with pytest.raises(ValueError):
        rho(c)


@pytest.mark.parametrize("dim", [2, 3])
def test_lagrange_chain_random(rng, dim):
    for _ in range(200):
        n = int(rng.integers(2, 5))
        q = random_chart_points(rng, n, dim)
        p = rng.normal(size=q.shape)
        m = rng.uniform(0.5, 2.0, size=n)
        ps = ProjectedState(0.0, m, q, p, 1.0)
        lhs, rhs_ = lagrange_gap(ps)
        slack = 1e-12 * max(1.0, abs(lhs))
        assert lhs + slack >= rhs_
        assert rhs_ + slack >= rho(ps)


def test_collision_diagnostics_literal_run():
    masses, qb, pb = spiral_triangle_chart()
    traj = integrate_chart(masses, qb, pb, 0.0, 1.0,
                           IntegratorConfig(t_end=3.0), system="projected")
    diag = collision_diagnostics(traj)
    assert diag.rho > 0
    # chart angular momentum is conserved: rho from any sample agrees
    last = (diag.angmom[-1] ** 2).sum() / 3
    assert last == pytest.approx(diag.rho, rel=1e-10)
    wins = hypothesis_windows(diag)
    assert wins, "contracting start must open a hypothesis window"
    rep = sundman_bound_check(diag, *wins[0])
    assert rep.hypotheses_met and rep.bound_satisfied
    assert rep.min_inertia >= rep.bound


def test_sundman_vacuous_when_rho_zero():
    th = math.pi / 6
    q0, p0 = _triangle_on_circle(math.sin(th), math.cos(th), 0.0)
    from curvednbody.scenarios import Scenario
    sc = Scenario(name="rel", kappa=1.0, masses=[1., 1., 1.], q=q0, p=p0, t_end=5.0)
    traj = integrate(sc.state(), sc.config(collision_eps=1e-7))
    diag = collision_diagnostics(traj)
    rep = sundman_bound_check(diag, 0)
    assert rep.vacuous and not rep.hypotheses_met
    tc = total_collision_diagnose(traj)
    assert "consistent" in tc.verdict


def test_planarity_consistent_on_s3_collapse():
    sc = builtin_scenarios()["s3_triangle_collapse"]
    traj = integrate(sc.state(), sc.config())
    rep = planarity_diagnose(traj)
    assert rep.consistent
    assert rep.mass_moment_max.max() < 1e-10
    assert rep.vy_max < 1e-8
    assert rep.det_normalized_min > 1e-3


def test_planarity_flags_out_of_plane_velocity():
    sc = builtin_scenarios()["s3_triangle_collapse"]
    st = sc.state()
    st.p[0, 1] = 1e-3   # push body 1 out of the y = 0 great sphere
    st.p[0, 3] = 0.0
    from curvednbody.geometry import renormalize
    st.q, st.p = renormalize(st.q, st.p, st.space)
    traj = integrate(st, sc.config(t_end=0.4))
    rep = planarity_diagnose(traj)
    assert not rep.consistent
    assert rep.vy_max > 1e-4


def test_rotation_taking_properties(rng):
    for d in (2, 3, 4):
        a = rng.normal(size=d)
        b = rng.normal(size=d)
        R = rotation_taking(a, b)
        assert np.abs(R @ R.T - np.eye(d)).max() < 1e-12
        assert np.abs(R @ (a / np.linalg.norm(a)) - b / np.linalg.norm(b)).max() < 1e-12
    # antiparallel special case
    a = np.array([1.0, 0.0, 0.0])
    R = rotation_taking(a, -a)
    assert np.abs(R @ a + a).max() < 1e-12
    assert np.abs(R @ R.T - np.eye(3)).max() < 1e-12


def test_equivalence_check_agrees_on_clean_segment():
    sc = builtin_scenarios()["rotating_triangle_s2"]
    cfg = IntegratorConfig(t_end=2.0)
    traj = integrate(sc.state(), cfg)
    rep = equivalence_check(traj, config=cfg)
    assert rep.ok and not rep.aborted
    assert rep.max_dev_push_q < 1e-7
    assert rep.max_dev_push_p < 1e-7
    # the literal field is a different dynamical system: measured, nonzero
    assert rep.field_defect_max > 1.0
    assert rep.max_dev_literal_q > 1e-3


def test_equivalence_check_aborts_on_hemisphere_exit():
    # outward-flying triangle with enough energy to cross the equator
    masses, qb, pb = spiral_triangle_chart(radial=-1.6, tangential=0.1)
    z = np.sqrt(1.0 - (qb ** 2).sum(axis=1))
    q = np.concatenate([qb, z[:, None]], axis=1)
    pz = -(qb * pb).sum(axis=1) / z
    p = np.concatenate([pb, pz[:, None]], axis=1)
    st = SystemState(0.0, masses, q, p, CurvatureSpace(1.0))
    traj = integrate(st, IntegratorConfig(t_end=3.0))
    rep = equivalence_check(traj)
    assert rep.aborted
    assert "hemisphere" in rep.abort_why
    assert math.isfinite(rep.abort_time) and rep.abort_time > 0


def test_equivalence_check_aborts_on_pole_geodesic():
    # a body pinned at the pole is a degenerate chart configuration
    q = np.array([[0.0, 0.0, 1.0], [0.5, 0.0, math.sqrt(0.75)]])
    p = np.zeros((2, 3))
    st = SystemState(0.0, np.ones(2), q, p, CurvatureSpace(1.0))
    traj = integrate(st, IntegratorConfig(t_end=0.2), events=())
    rep = equivalence_check(traj)
    assert rep.aborted
    assert "pole-geodesic" in rep.abort_why
