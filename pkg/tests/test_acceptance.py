"""Acceptance gate for the package: fourteen end-to-end checks.

Each test pins its tolerances and prints a one-line measured summary so the
margins stay visible in -s runs.  The checks cover the gradient oracle, long
first-integral drift, constraint preservation, the singular endpoint
classifications, the chart identities and inequalities, the inertia bound
that obstructs total collision, conservation/planarity on the 3-sphere, the
full/chart equivalence, and byte-level determinism of run artifacts.
"""

import math
import time

import numpy as np
import pytest

from curvednbody.dynamics import SystemState, force_function, grad_force_function
from curvednbody.geometry import CurvatureSpace, sdot
from curvednbody.integrator import (IntegratorConfig, drift_report, integrate,
                                    integrate_chart)
from curvednbody.projection import (ProjectedState, _integrate_to_times,
                                    chart_force_gradient, collision_diagnostics,
                                    equivalence_check, hypothesis_windows,
                                    inertia_accel, lagrange_gap,
                                    planarity_diagnose, rho, sundman_bound_check,
                                    total_collision_diagnose)
from curvednbody.runner import run
from curvednbody.scenarios import (Scenario, _triangle_on_circle,
                                   builtin_scenarios)
from curvednbody.singularity import painleve_monitor

from conftest import random_chart_points, random_state


@pytest.fixture(scope="module")
def long_runs():
    """The four long reference runs: geodesics and bound orbits, both signs."""
    names = ("geodesic_s2", "geodesic_h2", "s2_binary_orbit", "h2_binary_orbit")
    t0 = time.perf_counter()
    runs = {}
    for name in names:
        sc = builtin_scenarios()[name]
        runs[name] = integrate(sc.state(), sc.config(t_end=100.0))
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def s3_run():
    sc = builtin_scenarios()["s3_triangle_collapse"]
    return integrate(sc.state(), sc.config())


def test_01_gradient_matches_finite_differences(rng):
    # 100 random feasible states, n = 2 and 3, both curvature signs; the
    # directional derivative along a random tangent vector of each body must
    # match the analytic gradient to 1e-6 relative, in under a second.
    delta = 3e-6
    worst = 0.0
    t0 = time.perf_counter()
    checked = 0
    for kappa in (1.0, -1.0):
        for n in (2, 3):
            for _ in range(25):
                st = random_state(rng, n, kappa)
                grad = grad_force_function(st)
                for i in range(n):
                    v = rng.normal(size=3)
                    v -= (kappa * sdot(st.q[i], v, st.space.sigma)) * st.q[i]
                    v /= np.linalg.norm(v)
                    qp = st.q.copy()
                    qm = st.q.copy()
                    qp[i] += delta * v
                    qm[i] -= delta * v
                    up = force_function(SystemState(0.0, st.masses, qp, st.p, st.space))
                    um = force_function(SystemState(0.0, st.masses, qm, st.p, st.space))
                    fd = (up - um) / (2.0 * delta)
                    an = float(sdot(v, grad[i], st.space.sigma))
                    worst = max(worst, abs(fd - an) / max(1.0, abs(an)))
                checked += 1
    elapsed = time.perf_counter() - t0
    print(f"[1] gradient oracle: {checked} states, worst rel err {worst:.3e}, "
          f"{elapsed:.2f} s")
    assert worst <= 1e-6
    assert elapsed < 1.0


def test_02_long_run_first_integral_drift(long_runs):
    runs, elapsed = long_runs
    worst_h = worst_c = 0.0
    for name, traj in runs.items():
        dr = drift_report(traj)
        rel_h = dr.h_max / (abs(traj.energy[0]) + 1.0)
        c_drift = float(dr.c_max.max())
        worst_h = max(worst_h, rel_h)
        worst_c = max(worst_c, c_drift)
        assert rel_h < 1e-8, name
        assert c_drift < 1e-8, name
    print(f"[2] t=100 drift over {len(runs)} runs: energy {worst_h:.3e}, "
          f"angular momentum {worst_c:.3e}, {elapsed:.2f} s")
    assert elapsed < 5.0


def test_03_constraint_preservation(long_runs):
    runs, _ = long_runs
    worst = 0.0
    for name, traj in runs.items():
        res = max(float(traj.constraint_max.max()), float(traj.tangency_max.max()))
        worst = max(worst, res)
        assert res <= 1e-12, name
    print(f"[3] constraint/tangency residual over accepted steps: {worst:.3e}")


def test_04_symmetric_collapse_is_a_collision_singularity():
    sc = builtin_scenarios()["two_body_collapse_s2"]
    traj = integrate(sc.state(), sc.config())
    assert traj.termination.reason == "collision"
    verdict = painleve_monitor(traj)
    assert verdict.is_candidate and verdict.metric_to_zero
    tail = verdict.min_metric_series[-verdict.window:]
    assert tail[-1] <= 1e-6
    assert np.all(np.diff(tail) < 0.0), "pair metric must decrease monotonically"
    print(f"[4] collapse endpoint: reason={traj.termination.reason}, "
          f"final metric {tail[-1]:.3e}, monotone over final {verdict.window} samples")


def test_05_heavy_pair_meets_while_light_body_opposes():
    sc = builtin_scenarios()["great_circle_441"]
    cfg = sc.config()
    traj = integrate(sc.state(), cfg)
    qf = traj.q[-1]
    s = traj.kappa * (qf @ qf.T)
    # the run stops when the smallest metric |s^2-1| hits collision_eps; the
    # heavy pair closes at twice the angular rate, so its gap to +1 sits at
    # 2 eps while the small body's pairs sit at eps/2 from -1
    eps = cfg.collision_eps
    assert s[0, 1] > 1.0 - 4.0 * eps         # the two heavy bodies collide
    assert s[0, 2] < -1.0 + eps              # both see the light body antipodally
    assert s[1, 2] < -1.0 + eps
    # approaching, not just near: the gaps shrink over the second half
    mid = traj.t.shape[0] // 2
    sm = traj.kappa * (traj.q[mid] @ traj.q[mid].T)
    assert abs(s[0, 1] - 1.0) < abs(sm[0, 1] - 1.0)
    assert abs(s[0, 2] + 1.0) < abs(sm[0, 2] + 1.0)
    verdict = painleve_monitor(traj)
    assert verdict.is_candidate and verdict.collision_antipodal
    assert set(verdict.antipodal_pairs) == {(0, 2), (1, 2)}
    print(f"[5] 4:4:1 endpoint: s01={s[0, 1]:+.9f}, s02={s[0, 2]:+.9f}, "
          f"collision_antipodal={verdict.collision_antipodal}")


def test_06_chart_potential_scale_invariance(rng):
    # q_i . grad_i must vanish for every body: the chart potential depends
    # only on directions and the constraint radii, not on radial scale
    worst = 0.0
    for _ in range(10_000):
        n = int(rng.integers(2, 5))
        dim = int(rng.choice((2, 3)))
        q = random_chart_points(rng, n, dim)
        ps = ProjectedState(0.0, np.ones(n), q, np.zeros((n, dim)), 1.0)
        grad = chart_force_gradient(ps)
        dots = np.abs((q * grad).sum(axis=1))
        scale = np.maximum(1.0, np.linalg.norm(q, axis=1) * np.linalg.norm(grad, axis=1))
        worst = max(worst, float((dots / scale).max()))
    print(f"[6] radial-direction derivative over 10^4 chart configs: {worst:.3e}")
    assert worst <= 1e-10


def test_07_inertia_accel_matches_second_difference():
    masses = np.ones(3)
    qb = np.empty((3, 2))
    pb = np.empty((3, 2))
    r, radial, tangential = 0.45, 0.22, 0.25
    for k in range(3):
        phi = 2.0 * math.pi * k / 3.0
        c, s = math.cos(phi), math.sin(phi)
        qb[k] = (r * c, r * s)
        pb[k] = (-radial * c - tangential * s, -radial * s + tangential * c)
    cfg = IntegratorConfig()
    delta = 1e-3
    worst = 0.0
    for tbase in (0.3, 0.8, 1.4, 2.2):
        times = np.array([0.0, tbase - delta, tbase, tbase + delta])
        qs, ps, reached = _integrate_to_times("projected", masses, qb, pb,
                                              times, 1.0, cfg, None)
        assert reached == 4
        inert = [(masses * (q ** 2).sum(axis=1)).sum() for q in qs[1:]]
        fd = (inert[0] - 2.0 * inert[1] + inert[2]) / delta ** 2
        an = inertia_accel(ProjectedState(tbase, masses, qs[2], ps[2], 1.0))
        worst = max(worst, abs(fd - an) / abs(an))
    print(f"[7] inertia second difference vs closed form: worst rel {worst:.3e}")
    assert worst <= 1e-5


def test_08_full_and_chart_vertical_angular_momentum_agree(long_runs):
    # positive curvature only: the vertical component survives projection
    runs, _ = long_runs
    worst = 0.0
    for name in ("geodesic_s2", "s2_binary_orbit"):
        traj = runs[name]
        chart_gamma = (traj.q[:, :, 0] * traj.p[:, :, 1]
                       - traj.q[:, :, 1] * traj.p[:, :, 0]).sum(axis=1)
        dev = float(np.abs(traj.angmom[:, 2] - chart_gamma).max())
        worst = max(worst, dev)
        assert dev <= 1e-12, name
    print(f"[8] full vs chart vertical angular momentum: max |diff| {worst:.3e}")


def test_09_inertia_velocity_inequality_chain(rng):
    worst = 0.0
    for _ in range(10_000):
        n = int(rng.integers(2, 5))
        dim = int(rng.choice((2, 3)))
        q = random_chart_points(rng, n, dim)
        p = rng.normal(size=(n, dim))
        m = rng.uniform(0.5, 3.0, size=n)
        ps = ProjectedState(0.0, m, q, p, 1.0)
        lhs, rhs = lagrange_gap(ps)
        r = rho(ps)
        slack = 1e-12 * max(1.0, abs(lhs), abs(rhs))
        assert lhs >= rhs - slack
        assert rhs >= r - slack
        worst = max(worst, max(rhs - lhs, r - rhs))
    print(f"[9] inequality chain over 10^4 states: worst violation {worst:.3e} "
          f"(negative means slack to spare)")


def test_10_angular_momentum_obstructs_total_collision():
    # contracting triangle with spin: the inertia bound must hold on every
    # hypothesis window and the run must never reach total collision
    masses = np.ones(3)
    qb = np.empty((3, 2))
    pb = np.empty((3, 2))
    for k in range(3):
        phi = 2.0 * math.pi * k / 3.0
        c, s = math.cos(phi), math.sin(phi)
        qb[k] = (0.45 * c, 0.45 * s)
        pb[k] = (-0.22 * c - 0.25 * s, -0.22 * s + 0.25 * c)
    traj = integrate_chart(masses, qb, pb, 0.0, 1.0,
                           IntegratorConfig(t_end=3.0), system="projected")
    diag = collision_diagnostics(traj)
    assert diag.rho > 0.0
    windows = hypothesis_windows(diag)
    assert windows, "the contracting phase must open a hypothesis window"
    margin = math.inf
    for a, b in windows:
        rep = sundman_bound_check(diag, a, b)
        assert rep.hypotheses_met
        assert rep.bound_satisfied, "inertia fell below its lower bound"
        margin = min(margin, rep.margin)
    tc = total_collision_diagnose(traj)
    assert "no total collision" in tc.verdict
    assert tc.inertia_min > 1e-8

    # the spinless counterpart does collapse: chart inertia reaches ~0
    th = math.pi / 6.0
    q0, p0 = _triangle_on_circle(math.sin(th), math.cos(th), 0.0)
    sc = Scenario(name="rest_triangle", kappa=1.0, masses=[1.0, 1.0, 1.0],
                  q=q0, p=p0, t_end=10.0)
    traj0 = integrate(sc.state(), sc.config(collision_eps=1e-9,
                                            rtol=1e-11, atol=1e-11))
    assert traj0.termination.reason == "collision"
    diag0 = collision_diagnostics(traj0)
    i_final = float(diag0.inertia[-1])
    tc0 = total_collision_diagnose(traj0)
    assert "consistent" in tc0.verdict
    assert i_final <= 1e-8
    print(f"[10] bound margin {margin:.2f} with spin (I_min {tc.inertia_min:.3e}); "
          f"spinless collapse I_final {i_final:.3e}")


def test_11_s3_collapse_conserves_chart_angular_momentum(s3_run):
    traj = s3_run
    qb = traj.q[:, :, :3]
    pb = traj.p[:, :, :3]
    ang = np.cross(qb, pb).sum(axis=1)
    worst = float(np.abs(ang).max())
    assert worst <= 1e-10
    print(f"[11] 3-sphere collapse: max |chart angular momentum| {worst:.3e} "
          f"over {traj.t.shape[0]} samples")


def test_12_s3_collapse_stays_planar(s3_run):
    traj = s3_run
    rep = planarity_diagnose(traj)
    assert np.all(rep.mass_moment_max <= 1e-10)
    assert rep.vy_max <= 1e-8
    assert rep.consistent
    print(f"[12] planarity: mass moments {rep.mass_moment_max.max():.3e}, "
          f"max out-of-plane velocity {rep.vy_max:.3e}, "
          f"normalized determinant >= {rep.det_normalized_min:.3e}")


def test_13_chart_equivalence_on_clean_segment():
    sc = builtin_scenarios()["rotating_triangle_s2"]
    traj = integrate(sc.state(), sc.config(t_end=3.0))
    rep = equivalence_check(traj)
    assert rep.ok and not rep.aborted
    dev = max(rep.max_dev_push_q, rep.max_dev_push_p)
    assert dev <= 1e-6, "pushforward integration must track the full run"
    assert math.isfinite(rep.field_defect_max) and rep.field_defect_max > 0.0
    print(f"[13] equivalence over {rep.compared_samples} samples: pushforward "
          f"deviation {dev:.3e}, measured literal-field defect "
          f"{rep.field_defect_max:.3e}")


def test_14_repeated_runs_are_bit_identical(tmp_path):
    names = ("great_circle_441", "s2_binary_orbit")
    for name in names:
        sc = builtin_scenarios()[name]
        a = run(sc, str(tmp_path / f"{name}_a"))
        b = run(sc, str(tmp_path / f"{name}_b"))
        csv_a = open(a.csv_path, "rb").read()
        assert csv_a == open(b.csv_path, "rb").read(), name
        assert open(a.summary_path, "rb").read() == open(b.summary_path, "rb").read()
    print(f"[14] determinism: bit-identical CSV and summary for {len(names)} builtins")
