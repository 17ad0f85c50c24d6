"""Ball-chart projection of positive-curvature configurations and the
collapse diagnostics built on it.

Dropping the last ambient coordinate maps the open upper hemisphere
one-to-one onto the open disk/ball kappa |qbar|^2 < 1.  Two distinct vector
fields live in that chart and are deliberately kept separate here:

* the literal chart system (orth_rhs): the equations of motion written
  directly on chart vectors with plain dot products, whose force function is
  degree-zero homogeneous (Euler identity) and which conserves the chart
  angular momentum and satisfies the closed-form inertia acceleration
  identity;

* the pushforward of the full flow (pushforward_rhs): the last coordinate is
  reconstructed from the constraint, its momentum from tangency, the full
  right-hand side is evaluated and projected back.

They do not coincide; equivalence_check integrates both and measures their
disagreement rather than assuming it away.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .dynamics import DENOM_TOL, SystemState
from .geometry import CurvatureSpace, cross3
from .integrator import IntegratorConfig
from .singularity import ANGLE_EPS_DEFAULT, pole_geodesic_detect


class ChartDomainError(ValueError):
    """A body is outside the open chart domain (hemisphere or ball)."""


class DiameterSingularityError(ValueError):
    """Chart positions of a pair are collinear with the origin."""

    def __init__(self, pairs):
        self.pairs = list(pairs)
        names = ", ".join(f"({i}, {j})" for i, j in self.pairs)
        super().__init__(f"diameter singularity: chart denominator vanishes for {names}")


@dataclass
class ProjectedState:
    """Chart snapshot: time, masses, chart positions/momenta, curvature > 0."""

    t: float
    masses: np.ndarray
    q: np.ndarray  # (n, 2) disk or (n, 3) ball, components (x, y) / (u, x, y)
    p: np.ndarray
    kappa: float

    def __post_init__(self):
        self.masses = np.ascontiguousarray(self.masses, dtype=float)
        self.q = np.ascontiguousarray(self.q, dtype=float)
        self.p = np.ascontiguousarray(self.p, dtype=float)
        if self.kappa <= 0:
            raise ValueError("the ball chart exists for positive curvature only")
        if self.q.shape[1] not in (2, 3):
            raise ValueError("chart vectors have 2 or 3 components")
        if self.q.shape != self.p.shape or self.q.shape[0] != self.masses.shape[0]:
            raise ValueError("inconsistent array shapes")
        r2 = self.kappa * (self.q * self.q).sum(axis=1)
        if np.any(r2 > 1.0 + 1e-12):
            raise ChartDomainError(
                f"body {int(np.argmax(r2))} lies outside the closed ball (kappa |q|^2 = {r2.max():.6g})"
            )

    @property
    def n(self):
        return self.masses.shape[0]

    @property
    def dim(self):
        return self.q.shape[1]

    @property
    def velocities(self):
        return self.p / self.masses[:, None]

    def copy(self):
        return ProjectedState(self.t, self.masses.copy(), self.q.copy(), self.p.copy(), self.kappa)


def orth_project(state):
    """Drop the last coordinate of every body; requires the open upper
    hemisphere (last coordinate > 0 for each body) and positive curvature."""
    if state.space.kappa <= 0:
        raise ChartDomainError("projection is defined for positive curvature only")
    z = state.q[:, -1]
    if np.any(z <= 0.0):
        raise ChartDomainError(
            f"body {int(np.argmin(z))} is not in the open upper hemisphere (last coordinate {z.min():.6g})"
        )
    return ProjectedState(state.t, state.masses.copy(), state.q[:, :-1].copy(),
                          state.p[:, :-1].copy(), state.space.kappa)


def lift(pstate):
    """Chart -> hemisphere inverse: last coordinate from the constraint, its
    momentum from tangency."""
    z2 = 1.0 / pstate.kappa - (pstate.q * pstate.q).sum(axis=1)
    if np.any(z2 <= 0.0):
        raise ChartDomainError("chart point on or outside the ball boundary; cannot lift")
    z = np.sqrt(z2)
    pz = -(pstate.q * pstate.p).sum(axis=1) / z
    q = np.concatenate([pstate.q, z[:, None]], axis=1)
    p = np.concatenate([pstate.p, pz[:, None]], axis=1)
    return SystemState(pstate.t, pstate.masses.copy(), q, p,
                       CurvatureSpace(pstate.kappa, pstate.dim + 1))


def chart_force_function(pstate):
    """Force function evaluated on chart vectors with plain dot products."""
    ones = np.ones(pstate.dim)
    U, status, i, j = backend.active.force_grad(
        pstate.masses, pstate.q, pstate.kappa, 1.0, ones, DENOM_TOL, None
    )
    if status != backend.active.OK:
        raise DiameterSingularityError([(i, j)])
    return U


def chart_force_gradient(pstate):
    """Gradient of the chart force function; plain dot, every body's row is
    orthogonal to its own chart position (degree-zero homogeneity)."""
    ones = np.ones(pstate.dim)
    grad = np.empty_like(pstate.q)
    _, status, i, j = backend.active.force_grad(
        pstate.masses, pstate.q, pstate.kappa, 1.0, ones, DENOM_TOL, grad
    )
    if status != backend.active.OK:
        raise DiameterSingularityError([(i, j)])
    return grad


def orth_rhs(pstate):
    """Right-hand side of the literal chart system.

    dq_i/dt = p_i / m_i,  dp_i/dt = grad_i - m_i^-1 kappa |p_i|^2 q_i.
    Raises DiameterSingularityError when a pair's chart denominator vanishes
    (positions collinear with the origin).
    """
    ker = backend.active
    dq = np.empty_like(pstate.q)
    dp = np.empty_like(pstate.p)
    status, i, j = ker.rhs(
        ker.MODE_PROJECTED, pstate.masses, pstate.q, pstate.p,
        pstate.kappa, 1.0, DENOM_TOL, dq, dp,
    )
    if status != ker.OK:
        raise DiameterSingularityError([(i, j)])
    return dq, dp


def pushforward_rhs(pstate):
    """The full flow's vector field expressed in chart coordinates."""
    ker = backend.active
    dq = np.empty_like(pstate.q)
    dp = np.empty_like(pstate.p)
    status, i, j = ker.rhs(
        ker.MODE_PUSHFORWARD, pstate.masses, pstate.q, pstate.p,
        pstate.kappa, 1.0, DENOM_TOL, dq, dp,
    )
    if status == ker.LEFT_CHART:
        raise ChartDomainError(f"body {i} left the open ball")
    if status != ker.OK:
        raise DiameterSingularityError([(i, j)])
    return dq, dp


def projected_angular_momentum(pstate):
    """Chart angular momentum as a 3-vector.

    Disk chart: (0, 0, gamma) with gamma = sum m_i (x_i ydot_i - y_i xdot_i);
    ball chart: sum q_i x p_i with the plain cross product in (u, x, y) order.
    Conserved by the literal chart system; for states projected from the
    hemisphere it matches the corresponding components of the full integral.
    """
    q, p = pstate.q, pstate.p
    if pstate.dim == 2:
        gamma = float((q[:, 0] * p[:, 1] - q[:, 1] * p[:, 0]).sum())
        return np.array([0.0, 0.0, gamma])
    return cross3(q, p).sum(axis=0)


def moment_of_inertia(pstate):
    """I = sum m_i |qbar_i|^2 (chart coordinates)."""
    return float((pstate.masses * (pstate.q ** 2).sum(axis=1)).sum())


def inertia_rate(pstate):
    """dI/dt = 2 sum qbar_i . pbar_i (either chart field gives the same)."""
    return 2.0 * float((pstate.q * pstate.p).sum())


def inertia_accel(pstate):
    """Closed form of d^2I/dt^2 along the literal chart system:
    2 sum m_i |v_i|^2 (1 - kappa |qbar_i|^2)."""
    v2 = (pstate.velocities ** 2).sum(axis=1)
    r2 = (pstate.q ** 2).sum(axis=1)
    return 2.0 * float((pstate.masses * v2 * (1.0 - pstate.kappa * r2)).sum())


def inertia_accel_full(state, kernels=None):
    """d^2I/dt^2 of the chart inertia along the *full* flow (kappa > 0).

    Unlike the literal chart identity, this carries the gradient term:
    2 sum m|vbar|^2 + 2 sum qbar.gradbar - 2 sum kappa m^-1 (p.p) |qbar|^2.
    """
    ker = kernels or backend.active
    if state.space.kappa <= 0:
        raise ValueError("chart inertia requires positive curvature")
    m, q, p = state.masses, state.q, state.p
    w = np.ones(q.shape[1])
    grad = np.empty_like(q)
    _, status, i, j = ker.force_grad(m, q, state.space.kappa, 1.0, w, DENOM_TOL, grad)
    if status != ker.OK:
        from .dynamics import SingularConfigurationError

        raise SingularConfigurationError([(i, j)])
    kin = float(((p[:, :-1] ** 2).sum(axis=1) / m).sum())
    pp = (p ** 2).sum(axis=1)
    return 2.0 * float(
        kin
        + (q[:, :-1] * grad[:, :-1]).sum()
        - (state.space.kappa * pp / m * (q[:, :-1] ** 2).sum(axis=1)).sum()
    )


def rho(constants, n=None):
    """Rotational floor |c|^2 / n forced by the angular momentum.

    Accepts a ProjectedState (n taken from it), a scalar gamma, or a
    3-component constants vector; n is required in the latter two cases.
    By the permutation-symmetric splitting of the angular momentum over n
    bodies, I * sum m|v|^2 >= rho whenever the constants are conserved.
    """
    if isinstance(constants, ProjectedState):
        c = projected_angular_momentum(constants)
        n = constants.n
    else:
        c = np.atleast_1d(np.asarray(constants, dtype=float))
        if n is None:
            raise ValueError("n is required when passing raw constants")
    return float((c ** 2).sum()) / n


def lagrange_gap(pstate):
    """(lhs, rhs) of the inertia/velocity inequality chain.

    lhs = I * sum m_i |v_i|^2; rhs = sum m_i^2 * (per-body angular momentum
    components squared).  Always lhs >= rhs >= rho(pstate).
    """
    m = pstate.masses
    v = pstate.velocities
    lhs = moment_of_inertia(pstate) * float((m * (v ** 2).sum(axis=1)).sum())
    q = pstate.q
    if pstate.dim == 2:
        ell = q[:, 0] * v[:, 1] - q[:, 1] * v[:, 0]
        rhs = float((m ** 2 * ell ** 2).sum())
    else:
        cr = cross3(q, v)
        rhs = float((m[:, None] ** 2 * cr ** 2).sum())
    return lhs, rhs


@dataclass
class CollisionDiagnostics:
    """Inertia ledger of one trajectory in chart terms.

    For full runs the chart quantities come from dropping the last
    coordinate; inertia_accel_series then uses the exact expression along the
    full flow (gradient term included), while literal chart runs use the
    closed-form identity.  rho is computed from the initial chart angular
    momentum (a conserved quantity of both fields).
    """

    t: np.ndarray
    inertia: np.ndarray
    inertia_rate: np.ndarray
    inertia_accel_series: np.ndarray
    kinetic_chart: np.ndarray       # sum m |vbar|^2 per sample
    angmom: np.ndarray              # (m, 3) chart angular momentum
    rho: float
    n: int
    mode: str


def _chart_arrays(traj):
    """(qbar, pbar) stacks of a trajectory, plus full-system arrays if any."""
    if traj.mode == "full":
        if traj.kappa <= 0:
            raise ValueError("chart diagnostics require positive curvature")
        return traj.q[:, :, :-1], traj.p[:, :, :-1]
    return traj.q, traj.p


def collision_diagnostics(traj, kernels=None):
    ker = kernels or backend.active
    qb, pb = _chart_arrays(traj)
    m = traj.masses
    nsamp = qb.shape[0]
    inertia = (m * (qb ** 2).sum(axis=2)).sum(axis=1)
    rate = 2.0 * (qb * pb).sum(axis=(1, 2))
    kinetic = ((pb ** 2).sum(axis=2) / m).sum(axis=1)
    if qb.shape[2] == 2:
        gam = (m * (qb[:, :, 0] * (pb[:, :, 1] / m) - qb[:, :, 1] * (pb[:, :, 0] / m))).sum(axis=1)
        ang = np.zeros((nsamp, 3))
        ang[:, 2] = gam
    else:
        ang = np.cross(qb, pb).sum(axis=1)
    accel = np.empty(nsamp)
    if traj.mode == "projected":
        v2 = ((pb / m[None, :, None]) ** 2).sum(axis=2)
        r2 = (qb ** 2).sum(axis=2)
        accel[:] = 2.0 * (m * v2 * (1.0 - traj.kappa * r2)).sum(axis=1)
    else:
        from .dynamics import SingularConfigurationError

        dim = traj.dim if traj.mode == "full" else traj.dim + 1
        space = CurvatureSpace(traj.kappa, dim)
        for k in range(nsamp):
            if traj.mode == "full":
                qf, pf = traj.q[k], traj.p[k]
            else:
                z2 = 1.0 / traj.kappa - (traj.q[k] ** 2).sum(axis=1)
                z = np.sqrt(np.maximum(z2, 1e-300))
                qf = np.concatenate([traj.q[k], z[:, None]], axis=1)
                pf = np.concatenate(
                    [traj.p[k], (-(traj.q[k] * traj.p[k]).sum(axis=1) / z)[:, None]], axis=1
                )
            st = SystemState(float(traj.t[k]), m, qf.copy(), pf.copy(), space)
            try:
                accel[k] = inertia_accel_full(st, ker)
            except SingularConfigurationError:
                accel[k] = math.nan
    return CollisionDiagnostics(
        t=traj.t.copy(),
        inertia=inertia,
        inertia_rate=rate,
        inertia_accel_series=accel,
        kinetic_chart=kinetic,
        angmom=ang,
        rho=float((ang[0] ** 2).sum()) / traj.n,
        n=traj.n,
        mode=traj.mode,
    )


def hypothesis_windows(diag):
    """Maximal sample ranges [a, b] where the rate is negative and the
    acceleration dominates the chart kinetic sum throughout."""
    good = (diag.inertia_rate < 0.0) & (diag.inertia_accel_series >= diag.kinetic_chart)
    windows = []
    start = None
    for k, g in enumerate(good):
        if g and start is None:
            start = k
        elif not g and start is not None:
            if k - start >= 2:
                windows.append((start, k - 1))
            start = None
    if start is not None and len(good) - start >= 2:
        windows.append((start, len(good) - 1))
    return windows


@dataclass
class SundmanReport:
    """Lower-bound check for the inertia over one hypothesis window.

    hypotheses_met requires: rate < 0 on the window, acceleration >= chart
    kinetic sum on the window, rho > 0.  The stronger measured condition
    accel * I >= 2 rho (needed to integrate the bound exactly in the stated
    form) is reported separately.  vacuous marks rho = 0, where the bound
    carries no information.
    """

    tau_index: int
    end_index: int
    rho: float
    vacuous: bool
    rate_negative: bool
    accel_dominates_kinetic: bool
    accel_dominates_rho: bool
    bound: float
    min_inertia: float
    bound_satisfied: bool
    margin: float  # min over the window of I(t) / bound

    @property
    def hypotheses_met(self):
        return (not self.vacuous) and self.rate_negative and self.accel_dominates_kinetic


def sundman_bound_check(diag, tau_index, end_index=None):
    """Evaluate I(t) >= I(tau) * exp(-Idot(tau)^2 / (4 rho)) on a window.

    The window runs from tau_index to end_index (inclusive; default the last
    sample).  All hypothesis checks are measurements on the recorded series,
    reported alongside the bound evaluation; nothing is assumed.
    """
    if end_index is None:
        end_index = diag.t.shape[0] - 1
    sl = slice(tau_index, end_index + 1)
    rho_ = diag.rho
    vac = rho_ <= 0.0
    rate_neg = bool((diag.inertia_rate[sl] < 0.0).all())
    acc_kin = bool((diag.inertia_accel_series[sl] >= diag.kinetic_chart[sl]).all())
    if vac:
        bound = 0.0
        acc_rho = False
    else:
        bound = diag.inertia[tau_index] * math.exp(
            -diag.inertia_rate[tau_index] ** 2 / (4.0 * rho_)
        )
        acc_rho = bool(
            (diag.inertia_accel_series[sl] * diag.inertia[sl] >= 2.0 * rho_).all()
        )
    min_I = float(diag.inertia[sl].min())
    return SundmanReport(
        tau_index=tau_index,
        end_index=end_index,
        rho=rho_,
        vacuous=vac,
        rate_negative=rate_neg,
        accel_dominates_kinetic=acc_kin,
        accel_dominates_rho=acc_rho,
        bound=bound,
        min_inertia=min_I,
        bound_satisfied=bool((diag.inertia[sl] >= bound * (1.0 - 1e-12)).all()),
        margin=float((diag.inertia[sl] / bound).min()) if bound > 0 else math.inf,
    )


@dataclass
class TotalCollisionReport:
    verdict: str
    inertia_final: float
    inertia_min: float
    angmom_max: float  # max |component| over the run
    rho: float
    all_pairs_collision: bool
    windows: list = field(default_factory=list)
    window_reports: list = field(default_factory=list)


def total_collision_diagnose(traj, angmom_tol=1e-10):
    """Assess whether a run is a total collapse at the chart origin.

    A candidate must terminate through the collision event with every pair
    degenerate together and the chart inertia driven toward 0; for such runs
    the verdict is consistent only when the chart angular momentum stayed at
    zero within angmom_tol (the obstruction otherwise forbids the collapse,
    cross-checked here through the window bound reports).
    """
    if traj.n < 2 or traj.kappa <= 0:
        return TotalCollisionReport("not applicable", math.nan, math.nan, math.nan,
                                    math.nan, False)
    diag = collision_diagnostics(traj)
    m = traj.t.shape[0]
    qb, _ = _chart_arrays(traj)
    # all-pairs proximity at the final sample, via the lifted pair products
    z2 = np.maximum(1.0 / traj.kappa - (qb[-1] ** 2).sum(axis=1), 0.0)
    qf = np.concatenate([qb[-1], np.sqrt(z2)[:, None]], axis=1)
    g = traj.kappa * (qf @ qf.T)
    iu = np.triu_indices(traj.n, 1)
    all_pairs = bool((np.abs(g[iu] ** 2 - 1.0) <= 1e-3).all())
    candidate = traj.termination.reason == "collision" and all_pairs and (
        diag.inertia[-1] <= 1e-4 * max(1.0, diag.inertia[0])
    )
    angmax = float(np.abs(diag.angmom).max())
    windows = hypothesis_windows(diag)
    reports = [sundman_bound_check(diag, a, b) for a, b in windows]
    if candidate:
        verdict = (
            "total collision at the chart origin: consistent (angular momentum ~ 0)"
            if angmax <= angmom_tol
            else "total-collision-like endpoint with nonzero angular momentum: inconsistent"
        )
    else:
        verdict = "no total collision observed"
    return TotalCollisionReport(
        verdict=verdict,
        inertia_final=float(diag.inertia[-1]),
        inertia_min=float(diag.inertia.min()),
        angmom_max=angmax,
        rho=diag.rho,
        all_pairs_collision=all_pairs,
        windows=windows,
        window_reports=reports,
    )


def rotation_taking(a, b):
    """Orthogonal matrix R with R a_unit = b_unit (any dimension >= 2)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    c = float(a @ b)
    if c < -1.0 + 1e-12:
        # antiparallel: go through an intermediate orthogonal direction
        k = int(np.argmin(np.abs(a)))
        m = np.zeros_like(a)
        m[k] = 1.0
        m -= (m @ a) * a
        m /= np.linalg.norm(m)
        return rotation_taking(m, b) @ rotation_taking(a, m)
    v = a + b
    eye = np.eye(a.shape[0])
    return eye - np.outer(v, v) / (1.0 + c) + 2.0 * np.outer(b, a)


@dataclass
class PlanarityReport:
    mass_moment_max: np.ndarray   # (3,) max |sum m u|, |sum m x|, |sum m y|
    det_t0: float
    det_raw_min: float
    det_normalized_min: float
    vy_max: float
    rotated: bool
    consistent: bool


def planarity_diagnose(traj, masses=None, mm_tol=1e-10, vy_tol=1e-8, det_floor=1e-6):
    """Verdict on plane-confined motion for three bodies in the ball chart.

    Checks (a) the mass-moment residuals sum m u, sum m x, sum m y stay at
    zero, (b) the non-collinearity determinant det[[u_i], [x_i], [1]] stays
    bounded away from zero after normalizing out the configuration scale
    (the raw determinant shrinks like the squared size during a collapse and
    is reported too, via its t0 value and running minimum), and (c) after
    rotating the initial plane of the bodies onto y = 0, the y-velocities
    stay at zero.  consistent requires all three within the tolerances.
    """
    qb, pb = _chart_arrays(traj)
    if qb.shape[2] != 3 or traj.n != 3:
        raise ValueError("planarity diagnostics require three bodies in the ball chart")
    m = traj.masses if masses is None else np.asarray(masses, dtype=float)
    mv = m[None, :, None]
    moments = np.abs((mv * qb).sum(axis=1)).max(axis=0)

    # plane of the three bodies at t0 -> rotate its normal onto the y axis
    n0 = np.cross(qb[0, 1] - qb[0, 0], qb[0, 2] - qb[0, 0])
    nrm = np.linalg.norm(n0)
    if nrm == 0:
        raise ValueError("initial chart positions are collinear; no plane to align")
    n0 /= nrm
    ey = np.array([0.0, 0.0, 1.0])  # y is the last chart component (u, x, y)
    rotated = bool(abs(float(n0 @ ey)) < 1.0 - 1e-15)
    R = rotation_taking(n0, ey) if rotated else np.eye(3)
    qr = qb @ R.T
    pr = pb @ R.T
    vy_max = float(np.abs(pr[:, :, 2] / m[None, :]).max())

    dets = np.empty(qb.shape[0])
    for k in range(qb.shape[0]):
        mat = np.vstack([qr[k, :, 0], qr[k, :, 1], np.ones(3)])
        dets[k] = np.linalg.det(mat)
    scale2 = (m * (qb ** 2).sum(axis=2)).sum(axis=1) / m.sum()
    dnorm = dets / np.maximum(scale2, 1e-300)
    return PlanarityReport(
        mass_moment_max=moments,
        det_t0=float(dets[0]),
        det_raw_min=float(np.abs(dets).min()),
        det_normalized_min=float(np.abs(dnorm).min()),
        vy_max=vy_max,
        rotated=rotated,
        consistent=bool(
            (moments <= mm_tol).all()
            and vy_max <= vy_tol
            and float(np.abs(dnorm).min()) >= det_floor
        ),
    )


@dataclass
class EquivalenceReport:
    """Outcome of integrating both chart fields against a projected full run.

    Deviations are max-abs over matched sample times, bodies and components.
    field_defect_max is the pointwise max-abs difference of the two chart
    vector fields (momentum part; the coordinate parts agree identically)
    evaluated on the projected full states.
    """

    ok: bool
    aborted: bool = False
    abort_time: float = math.nan
    abort_why: str = ""
    max_dev_push_q: float = math.nan
    max_dev_push_p: float = math.nan
    max_dev_literal_q: float = math.nan
    max_dev_literal_p: float = math.nan
    field_defect_max: float = math.nan
    literal_completed: bool = False
    compared_samples: int = 0
    min_hemisphere_z: float = math.nan
    min_collinearity_angle: float = math.nan


def _integrate_to_times(system, masses, q0, p0, times, kappa, config, kernels):
    """Adaptive chart integration forced to land on each target time.

    Returns (q_list, p_list, reached) where reached is the number of targets
    hit before a failure (diameter/ball/step trouble) stopped the run.
    """
    ker = kernels or backend.active
    kmode = {"projected": ker.MODE_PROJECTED, "pushforward": ker.MODE_PUSHFORWARD}[system]
    q = q0.copy()
    p = p0.copy()
    qn = np.empty_like(q)
    pn = np.empty_like(p)
    t = float(times[0])
    out_q = [q.copy()]
    out_p = [p.copy()]
    dt = min(config.dt_init, config.dt_max)
    for target in times[1:]:
        while t < target - 1e-14 * max(1.0, abs(target)):
            dt_try = min(dt, config.dt_max, target - t)
            err, status, _, _ = ker.ck_step(
                kmode, masses, q, p, dt_try, kappa, 1.0,
                config.rtol, config.atol, config.denom_tol, qn, pn,
            )
            if status != ker.OK:
                if dt_try <= config.dt_min * 2:
                    return out_q, out_p, len(out_q)
                dt = dt_try / 2
                continue
            if err > 1.0:
                if dt_try <= config.dt_min * 2:
                    return out_q, out_p, len(out_q)
                dt = max(dt_try * max(0.1, min(0.9, 0.9 * err ** -0.2)), config.dt_min)
                continue
            q, qn = qn, q
            p, pn = pn, p
            t += dt_try
            dt = dt_try * max(0.2, min(5.0, 0.9 * max(err, 1e-10) ** -0.2))
        out_q.append(q.copy())
        out_p.append(p.copy())
    return out_q, out_p, len(out_q)


def equivalence_check(traj, config=None, eps_angle=ANGLE_EPS_DEFAULT, max_samples=200,
                      kernels=None):
    """Compare the two chart fields against the chart shadow of a full run.

    Hypotheses certified sample-by-sample first: every body stays in the open
    upper hemisphere and no pair is pole-geodesic within eps_angle; a
    violation aborts the check, reporting the offending time.  Then both
    chart systems are integrated from the projected initial condition,
    landing exactly on (a subsample of) the full run's sample times, and
    compared pointwise against the projected full states.  The pushforward
    field follows the full run to integration accuracy; the literal field's
    deviation and the two fields' pointwise defect are measured quantities
    reported as found.
    """
    if traj.mode != "full" or traj.kappa <= 0:
        raise ValueError("equivalence_check needs a positive-curvature full trajectory")
    cfg = config or IntegratorConfig()
    nsamp = traj.t.shape[0]
    z_all = traj.q[:, :, -1]
    min_z = float(z_all.min())
    if min_z <= 0.0:
        k = int(np.argmin(z_all.min(axis=1)))
        return EquivalenceReport(False, aborted=True, abort_time=float(traj.t[k]),
                                 abort_why="a body left the open upper hemisphere",
                                 min_hemisphere_z=min_z)
    min_ang = math.inf
    for k in range(nsamp):
        rep = pole_geodesic_detect(traj.state_at(k), eps_angle)
        ang = rep.min_angle if not rep.degenerate_bodies else 0.0
        min_ang = min(min_ang, ang)
        if rep.pairs or rep.degenerate_bodies:
            return EquivalenceReport(False, aborted=True, abort_time=float(traj.t[k]),
                                     abort_why="pole-geodesic configuration encountered",
                                     min_hemisphere_z=min_z, min_collinearity_angle=min_ang)
    stride = max(1, (nsamp - 1) // max_samples) if nsamp > 1 else 1
    idx = list(range(0, nsamp, stride))
    if idx[-1] != nsamp - 1:
        idx.append(nsamp - 1)
    times = traj.t[idx]
    qb = traj.q[idx][:, :, :-1]
    pb = traj.p[idx][:, :, :-1]

    push_q, push_p, push_reached = _integrate_to_times(
        "pushforward", traj.masses, qb[0], pb[0], times, traj.kappa, cfg, kernels
    )
    lit_q, lit_p, lit_reached = _integrate_to_times(
        "projected", traj.masses, qb[0], pb[0], times, traj.kappa, cfg, kernels
    )
    kp = min(push_reached, len(idx))
    kl = min(lit_reached, len(idx))
    dev_pq = float(max(np.abs(np.asarray(push_q[:kp]) - qb[:kp]).max(), 0.0)) if kp else math.nan
    dev_pp = float(max(np.abs(np.asarray(push_p[:kp]) - pb[:kp]).max(), 0.0)) if kp else math.nan
    dev_lq = float(max(np.abs(np.asarray(lit_q[:kl]) - qb[:kl]).max(), 0.0)) if kl else math.nan
    dev_lp = float(max(np.abs(np.asarray(lit_p[:kl]) - pb[:kl]).max(), 0.0)) if kl else math.nan

    defect = 0.0
    for k in range(len(idx)):
        ps = ProjectedState(float(times[k]), traj.masses, qb[k], pb[k], traj.kappa)
        try:
            _, dp_lit = orth_rhs(ps)
            _, dp_push = pushforward_rhs(ps)
        except (DiameterSingularityError, ChartDomainError):
            continue
        defect = max(defect, float(np.abs(dp_lit - dp_push).max()))

    return EquivalenceReport(
        ok=kp == len(idx),
        max_dev_push_q=dev_pq,
        max_dev_push_p=dev_pp,
        max_dev_literal_q=dev_lq,
        max_dev_literal_p=dev_lp,
        field_defect_max=defect,
        literal_completed=kl == len(idx),
        compared_samples=len(idx),
        min_hemisphere_z=min_z,
        min_collinearity_angle=min_ang,
    )
