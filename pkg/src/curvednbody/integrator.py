"""Adaptive embedded-pair integration with singularity events.

The stepper is a Cash-Karp 5(4) pair; after every accepted step each body is
pulled back onto the constraint surface (projection method).  Step size is
driven by a PI controller on the embedded error estimate, measured before the
re-projection.  Event functions (pair-proximity metrics) terminate runs by
bisecting the final step to localize the crossing time.

Three right-hand sides share the machinery: the full ambient system, the
literal projected system in the disk/ball chart, and the pushforward of the
full flow expressed in that chart.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .dynamics import DENOM_TOL, SystemState
from .geometry import CurvatureSpace, sdot

SAFETY = 0.9
PI_ALPHA = 0.7 / 5
PI_BETA = 0.4 / 5
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
EVENT_CAP_FRACTION = 0.8
STALL_CHECK_STEPS = 2_000

REASONS = frozenset(
    {
        "time_limit",
        "collision",
        "antipodal",
        "collision_antipodal",
        "hybrid",
        "diameter_or_pole_geodesic",
        "step_underflow",
        "non_renormalizable",
    }
)


@dataclass
class IntegratorConfig:
    rtol: float = 1e-13
    atol: float = 1e-13
    t_end: float = 10.0
    dt_init: float = 1e-3
    dt_min: float = 1e-15
    dt_max: float = 0.25
    max_steps: int = 2_000_000
    collision_eps: float = 1e-6     # event threshold on min |s_ij^2 - 1|
    diameter_eps: float = 1e-8      # event threshold (radians) on pair collinearity
    event_dt_tol: float = 1e-9      # bisection tolerance on the event time
    denom_tol: float = DENOM_TOL

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.dt_min <= 0 or self.dt_max <= 0 or self.dt_init <= 0:
            raise ValueError("step bounds must be positive")
        if self.dt_min > self.dt_max:
            raise ValueError("dt_min must not exceed dt_max")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.collision_eps <= 0 or self.diameter_eps <= 0:
            raise ValueError("event thresholds must be positive")


@dataclass
class TerminationReport:
    reason: str
    t_final: float
    message: str = ""
    pairs: list = field(default_factory=list)
    final_metric: float = math.inf

    def __post_init__(self):
        if self.reason not in REASONS:
            raise ValueError(f"unknown termination reason {self.reason!r}")


@dataclass
class Trajectory:
    """Accepted samples of one run plus per-sample invariant readings.

    mode is "full", "projected" (literal disk/ball system) or "pushforward"
    (full flow in the chart).  q and p hold ambient vectors for full runs and
    chart vectors otherwise.  angmom rows are 3-vectors: the ambient angular
    momentum for 3-dimensional full runs, the chart angular momentum
    otherwise (2-d charts use (0, 0, gamma)).  inertia is None for negative
    curvature.  constraint/tangency are identically zero for chart runs.
    """

    mode: str
    kappa: float
    sigma: int
    masses: np.ndarray
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    angmom: np.ndarray
    inertia: np.ndarray | None
    min_pair_metric: np.ndarray
    constraint_max: np.ndarray
    tangency_max: np.ndarray
    termination: TerminationReport
    steps_accepted: int = 0
    steps_rejected: int = 0

    def __len__(self):
        return self.t.shape[0]

    @property
    def n(self):
        return self.masses.shape[0]

    @property
    def dim(self):
        return self.q.shape[2]

    def space(self):
        if self.mode != "full":
            raise ValueError("chart trajectories have no ambient space")
        return CurvatureSpace(self.kappa, self.dim)

    def state_at(self, k):
        if self.mode != "full":
            raise ValueError("state_at applies to full trajectories only")
        return SystemState(
            float(self.t[k]), self.masses.copy(), self.q[k].copy(), self.p[k].copy(), self.space()
        )


def _weights(dim, sigma):
    w = np.ones(dim)
    if dim == 3:
        w[2] = sigma
    return w


def _lift_chart(q, p, kappa):
    """Chart -> ambient lift; returns (qf, pf) or (None, None) off the ball."""
    z2 = 1.0 / kappa - (q * q).sum(axis=1)
    if np.any(z2 <= 0.0):
        return None, None
    z = np.sqrt(z2)
    pz = -(q * p).sum(axis=1) / z
    return np.concatenate([q, z[:, None]], 1), np.concatenate([p, pz[:, None]], 1)


def pair_product_matrix(q, kappa, weights):
    """s[i, j] = kappa * (q_i . q_j) under the given component weights."""
    return kappa * (q @ (q * weights).T)


def min_pair_metric_arrays(q, kappa, weights):
    """min over pairs of |s_ij^2 - 1|; +inf for a single body."""
    n = q.shape[0]
    if n < 2:
        return math.inf
    s = pair_product_matrix(q, kappa, weights)
    iu = np.triu_indices(n, 1)
    return float(np.abs(s[iu] ** 2 - 1.0).min())


def _diameter_metric(qbar, eps_angle, radius):
    """min over pairs of sin^2(angle between chart positions); 0 if a body
    sits at the chart origin (within eps_angle * radius)."""
    n = qbar.shape[0]
    if n < 2:
        return math.inf
    r2 = (qbar * qbar).sum(axis=1)
    if np.any(r2 <= (eps_angle * radius) ** 2):
        return 0.0
    g = qbar @ qbar.T
    iu, ju = np.triu_indices(n, 1)
    sin2 = 1.0 - (g[iu, ju] ** 2) / (r2[iu] * r2[ju])
    return float(max(sin2.min(), 0.0))


class _Monitors:
    """Evaluates the event metrics and invariant readings for one run mode."""

    def __init__(self, mode, masses, kappa, sigma, dim, kernels, denom_tol):
        self.mode = mode
        self.masses = masses
        self.kappa = kappa
        self.sigma = sigma
        self.dim = dim
        self.ker = kernels
        self.denom_tol = denom_tol
        self.radius = abs(kappa) ** -0.5
        if mode == "full":
            self.weights = _weights(dim, sigma)
        else:
            self.weights = np.ones(dim + 1)  # lifted

    def singularity_metric(self, q):
        if self.mode == "full":
            return min_pair_metric_arrays(q, self.kappa, _weights(self.dim, self.sigma))
        qf = _lift_chart(q, np.zeros_like(q), self.kappa)[0]
        if qf is None:
            return math.inf  # off the ball; the ball guard handles termination
        return min_pair_metric_arrays(qf, self.kappa, self.weights)

    def collinearity_metric(self, q, eps_angle):
        qbar = q[:, :-1] if self.mode == "full" else q
        return _diameter_metric(qbar, eps_angle, self.radius)

    def pair_cross(self, q):
        """Per-pair signed cross values in a 2-component chart, or None.

        A diameter crossing flips the sign of x_i y_j - y_i x_j, which makes
        transversal crossings detectable between step endpoints (the sin^2
        metric alone only fires on near-tangential approaches).
        """
        qbar = q[:, :-1] if self.mode == "full" else q
        if qbar.shape[1] != 2:
            return None
        x, y = qbar[:, 0], qbar[:, 1]
        iu = np.triu_indices(qbar.shape[0], 1)
        return (np.outer(x, y) - np.outer(y, x))[iu]

    def off_ball(self, q):
        if self.mode == "full":
            return False
        return bool(np.any(self.kappa * (q * q).sum(axis=1) >= 1.0))

    def invariants(self, q, p):
        """(energy, angmom3, inertia, constraint_max, tangency_max)."""
        m = self.masses
        kappa, sigma = self.kappa, self.sigma
        if self.mode == "full":
            w = _weights(self.dim, sigma)
            U, status, _, _ = self.ker.force_grad(m, q, kappa, sigma, w, self.denom_tol, None)
            if status != self.ker.OK:
                U = math.nan
            h = 0.5 * float((((p * w) * p).sum(1) / m).sum()) - U
            cons = float(np.abs(kappa * ((q * w) * q).sum(1) - 1.0).max())
            tang = float(np.abs(((q * w) * p).sum(1)).max())
            if self.dim == 3:
                c = np.cross(q, p)
                c[:, 2] *= sigma
                ang = c.sum(axis=0)
            else:
                ang = np.cross(q[:, :3], p[:, :3]).sum(axis=0)
            inertia = float((m * (q[:, :-1] ** 2).sum(1)).sum()) if kappa > 0 else None
            return h, ang, inertia, cons, tang
        # chart modes: plain dot products, no constraint residuals
        ones = np.ones(self.dim)
        if self.mode == "pushforward":
            qf, pf = _lift_chart(q, p, kappa)
            if qf is None:
                h = math.nan
            else:
                wf = np.ones(self.dim + 1)
                U, status, _, _ = self.ker.force_grad(m, qf, kappa, 1.0, wf, self.denom_tol, None)
                if status != self.ker.OK:
                    U = math.nan
                h = 0.5 * float(((pf * pf).sum(1) / m).sum()) - U
        else:
            U, status, _, _ = self.ker.force_grad(m, q, kappa, 1.0, ones, self.denom_tol, None)
            if status != self.ker.OK:
                U = math.nan
            h = 0.5 * float(((p * p).sum(1) / m).sum()) - U
        if self.dim == 2:
            gamma = float((q[:, 0] * p[:, 1] - q[:, 1] * p[:, 0]).sum())
            ang = np.array([0.0, 0.0, gamma])
        else:
            ang = np.cross(q, p).sum(axis=0)
        inertia = float((m * (q * q).sum(1)).sum())
        return h, ang, inertia, 0.0, 0.0


def _mode_const(ker, mode):
    return {"full": ker.MODE_FULL, "projected": ker.MODE_PROJECTED, "pushforward": ker.MODE_PUSHFORWARD}[mode]


def step(state, dt, config=None, kernels=None):
    """One embedded-pair step from a full-system state.

    Returns (new_state, err) where err is the embedded error estimate in
    units of the configured tolerance (accepted when <= 1), measured before
    the per-body re-projection.  Raises on singular/non-renormalizable steps.
    """
    cfg = config or IntegratorConfig()
    ker = kernels or backend.active
    sp = state.space
    q_out = np.empty_like(state.q)
    p_out = np.empty_like(state.p)
    err, status, i, j = ker.ck_step(
        ker.MODE_FULL, state.masses, state.q, state.p, dt, sp.kappa, sp.sigma,
        cfg.rtol, cfg.atol, cfg.denom_tol, q_out, p_out,
    )
    if status == ker.SINGULAR_PAIR:
        from .dynamics import SingularConfigurationError

        raise SingularConfigurationError([(i, j)])
    if status != ker.OK:
        raise ValueError(f"step failed with status {status} (body {i})")
    return SystemState(state.t + dt, state.masses.copy(), q_out, p_out, sp), err


class _Recorder:
    def __init__(self):
        self.t = []
        self.q = []
        self.p = []
        self.energy = []
        self.angmom = []
        self.inertia = []
        self.metric = []
        self.cons = []
        self.tang = []

    def add(self, t, q, p, inv, metric):
        h, ang, inertia, cons, tang = inv
        self.t.append(t)
        self.q.append(q.copy())
        self.p.append(p.copy())
        self.energy.append(h)
        self.angmom.append(np.asarray(ang, dtype=float))
        self.inertia.append(math.nan if inertia is None else inertia)
        self.metric.append(metric)
        self.cons.append(cons)
        self.tang.append(tang)


def _integrate_arrays(mode, masses, q0, p0, t0, kappa, sigma, config, events, kernels):
    ker = kernels or backend.active
    cfg = config
    mon = _Monitors(mode, masses, kappa, sigma, q0.shape[1], ker, cfg.denom_tol)
    kmode = _mode_const(ker, mode)
    want_sing = "singularity" in events and masses.shape[0] >= 2
    want_diam = ("diameter" in events or "pole_geodesic" in events) and masses.shape[0] >= 2
    diam_thresh = math.sin(cfg.diameter_eps) ** 2

    q = q0.copy()
    p = p0.copy()
    t = float(t0)
    rec = _Recorder()

    metric = mon.singularity_metric(q)
    if want_sing and metric <= cfg.collision_eps:
        raise ValueError(
            f"initial state is already inside the singularity event set (metric {metric:.3g})"
        )
    if mode != "full" and mon.off_ball(q):
        raise ValueError("initial chart state lies outside the open ball")
    if want_diam and mon.collinearity_metric(q, cfg.diameter_eps) <= diam_thresh:
        raise ValueError(
            "initial state already has a pair on a diameter/pole geodesic"
        )
    cross_prev = mon.pair_cross(q) if want_diam else None
    rec.add(t, q, p, mon.invariants(q, p), metric)

    q_new = np.empty_like(q)
    p_new = np.empty_like(p)
    dt = min(cfg.dt_init, cfg.dt_max)
    err_prev = None
    accepted = 0
    rejected = 0
    termination = None
    metric_prev = metric
    dt_last = None
    stall_mark = t  # progress checkpoint; see the stagnation guard below

    def classify_reason(q_final):
        # imported here: singularity module depends on dynamics, not integrator
        from .singularity import classify

        if mode == "full":
            st = SystemState(0.0, masses, q_final, np.zeros_like(q_final), CurvatureSpace(kappa, q_final.shape[1]))
        else:
            qf, pf = _lift_chart(q_final, np.zeros_like(q_final), kappa)
            if qf is None:
                return "collision", []
            st = SystemState(0.0, masses, qf, pf, CurvatureSpace(kappa, qf.shape[1]))
        cls = classify(st, cfg.collision_eps)
        return cls.global_label, cls.flagged_pairs()

    while True:
        if t >= cfg.t_end - 1e-14 * max(1.0, abs(cfg.t_end)):
            termination = TerminationReport("time_limit", t, "reached configured end time")
            break
        if accepted >= cfg.max_steps:
            termination = TerminationReport("time_limit", t, "maximum step count reached")
            break
        dt_try = min(dt, cfg.dt_max, cfg.t_end - t)
        # cap the step near a decreasing event metric (linear extrapolation)
        if want_sing and dt_last is not None and metric_prev > metric:
            rate = (metric_prev - metric) / dt_last
            t_hit = (metric - cfg.collision_eps) / rate if rate > 0 else math.inf
            if t_hit < dt_try:
                dt_try = max(EVENT_CAP_FRACTION * t_hit, cfg.dt_min)

        err, status, bi, bj = ker.ck_step(
            kmode, masses, q, p, dt_try, kappa, sigma,
            cfg.rtol, cfg.atol, cfg.denom_tol, q_new, p_new,
        )
        if status != ker.OK:
            rejected += 1
            if dt_try <= cfg.dt_min * 2:
                if status == ker.SINGULAR_PAIR:
                    reason, pairs = ("step_underflow", [(bi, bj)])
                    msg = f"stage evaluation hit a singular pair ({bi}, {bj}) at minimum step"
                else:
                    reason, pairs = "non_renormalizable", []
                    msg = f"body {bi} cannot be kept on the surface/chart at minimum step"
                termination = TerminationReport(reason, t, msg, pairs, mon.singularity_metric(q))
                break
            dt = max(dt_try / 2, cfg.dt_min)
            continue
        if err > 1.0:
            rejected += 1
            if dt_try <= cfg.dt_min * (1 + 1e-12):
                termination = TerminationReport(
                    "step_underflow", t, f"error {err:.3g} at minimum step size",
                    final_metric=mon.singularity_metric(q),
                )
                break
            fac = max(0.1, min(0.9, SAFETY * err ** (-1.0 / 5)))
            dt = max(dt_try * fac, cfg.dt_min)
            continue

        # accepted
        t_new = t + dt_try
        m_new = mon.singularity_metric(q_new)
        fired_sing = want_sing and m_new <= cfg.collision_eps
        if want_diam:
            d_new = mon.collinearity_metric(q_new, cfg.diameter_eps)
            cross_new = mon.pair_cross(q_new)
            flipped = cross_new is not None and bool(np.any(cross_prev * cross_new <= 0.0))
            fired_diam = d_new <= diam_thresh or flipped
        else:
            fired_diam = False
        off = mode != "full" and mon.off_ball(q_new)

        if fired_sing or fired_diam or off:
            if fired_sing:
                fire = lambda qq: mon.singularity_metric(qq) <= cfg.collision_eps
            elif fired_diam:
                def fire(qq):
                    if mon.collinearity_metric(qq, cfg.diameter_eps) <= diam_thresh:
                        return True
                    c = mon.pair_cross(qq)
                    return c is not None and bool(np.any(cross_prev * c <= 0.0))
            else:
                fire = lambda qq: mon.off_ball(qq)
            lo, hi = 0.0, dt_try
            q_hi, p_hi = q_new.copy(), p_new.copy()
            it = 0
            while hi - lo > cfg.event_dt_tol and it < 80:
                mid = 0.5 * (lo + hi)
                qm = np.empty_like(q)
                pm = np.empty_like(p)
                _, st_m, _, _ = ker.ck_step(
                    kmode, masses, q, p, mid, kappa, sigma,
                    cfg.rtol, cfg.atol, cfg.denom_tol, qm, pm,
                )
                if st_m != ker.OK or fire(qm):
                    hi = mid
                    if st_m == ker.OK:
                        q_hi, p_hi = qm, pm
                else:
                    lo = mid
                it += 1
            t_new = t + hi
            q_new, p_new = q_hi, p_hi
            m_new = mon.singularity_metric(q_new)
            accepted += 1
            rec.add(t_new, q_new, p_new, mon.invariants(q_new, p_new), m_new)
            if fired_sing:
                label, pairs = classify_reason(q_new)
                termination = TerminationReport(
                    label, t_new, "pair-proximity event", pairs, m_new
                )
            elif fired_diam:
                termination = TerminationReport(
                    "diameter_or_pole_geodesic", t_new,
                    "chart positions became collinear with the origin",
                    final_metric=m_new,
                )
            else:
                termination = TerminationReport(
                    "non_renormalizable", t_new, "chart state left the open ball",
                    final_metric=m_new,
                )
            break

        accepted += 1
        rec.add(t_new, q_new, p_new, mon.invariants(q_new, p_new), m_new)
        q, q_new = q_new, q
        p, p_new = p_new, p
        metric_prev, metric = metric, m_new
        if want_diam:
            cross_prev = cross_new
        dt_last = dt_try
        t = t_new
        # stagnation guard: near a singular layer the controller can settle
        # at a step size above dt_min and crawl geometrically; once a window
        # of accepted steps covers a negligible fraction of the remaining
        # span, finishing would take an absurd number of steps
        if accepted % STALL_CHECK_STEPS == 0:
            remaining = cfg.t_end - t
            if t - stall_mark < max(cfg.event_dt_tol, 1e-6 * remaining):
                termination = TerminationReport(
                    "step_underflow", t,
                    f"no progress over {STALL_CHECK_STEPS} accepted steps "
                    "(step size stagnated near a singular layer)",
                    final_metric=metric,
                )
                break
            stall_mark = t
        e = max(err, 1e-10)
        if err_prev is None:
            fac = SAFETY * e ** (-1.0 / 5)
        else:
            fac = SAFETY * e ** (-PI_ALPHA) * err_prev ** PI_BETA
        dt = dt_try * max(MIN_FACTOR, min(MAX_FACTOR, fac))
        err_prev = e

    inertia = np.asarray(rec.inertia)
    return Trajectory(
        mode=mode,
        kappa=kappa,
        sigma=sigma,
        masses=masses.copy(),
        t=np.asarray(rec.t),
        q=np.asarray(rec.q),
        p=np.asarray(rec.p),
        energy=np.asarray(rec.energy),
        angmom=np.asarray(rec.angmom),
        inertia=None if np.isnan(inertia).all() else inertia,
        min_pair_metric=np.asarray(rec.metric),
        constraint_max=np.asarray(rec.cons),
        tangency_max=np.asarray(rec.tang),
        termination=termination,
        steps_accepted=accepted,
        steps_rejected=rejected,
    )


def integrate(state, config, events=("singularity",), kernels=None):
    """Integrate a full-system state until an event, underflow or the end time.

    Recognized event names: "singularity" (pair metric |s^2-1| crossing the
    collision threshold; the termination reason is the proximity
    classification at the final state) and "pole_geodesic" (chart positions
    of some pair collinear with the origin).  The final step leading into an
    event is bisected so the crossing is localized within config.event_dt_tol.
    """
    sp = state.space
    return _integrate_arrays(
        "full", state.masses, state.q, state.p, state.t, sp.kappa, sp.sigma,
        config, events, kernels,
    )


def integrate_chart(masses, qbar, pbar, t0, kappa, config, system="projected",
                    events=("singularity", "diameter"), kernels=None):
    """Integrate one of the chart systems (positive curvature only).

    system="projected" evolves the literal disk/ball equations; "pushforward"
    evolves the full flow written in chart coordinates.  The "diameter" event
    terminates when a pair's chart positions become collinear with the
    origin; leaving the open ball terminates with reason non_renormalizable.
    """
    if kappa <= 0:
        raise ValueError("chart systems require positive curvature")
    if system not in ("projected", "pushforward"):
        raise ValueError("system must be 'projected' or 'pushforward'")
    masses = np.ascontiguousarray(masses, dtype=float)
    qbar = np.ascontiguousarray(qbar, dtype=float)
    pbar = np.ascontiguousarray(pbar, dtype=float)
    return _integrate_arrays(
        system, masses, qbar, pbar, t0, kappa, 1, config, events, kernels
    )


@dataclass
class DriftReport:
    h_max: float
    h_rms: float
    c_max: np.ndarray       # per component of the recorded angular momentum
    c_rms: np.ndarray
    constraint_max: float
    tangency_max: float


def drift_report(traj):
    """Deviation of the recorded invariants from their initial values."""
    dh = traj.energy - traj.energy[0]
    dc = traj.angmom - traj.angmom[0]
    return DriftReport(
        h_max=float(np.abs(dh).max()),
        h_rms=float(np.sqrt((dh ** 2).mean())),
        c_max=np.abs(dc).max(axis=0),
        c_rms=np.sqrt((dc ** 2).mean(axis=0)),
        constraint_max=float(traj.constraint_max.max()),
        tangency_max=float(traj.tangency_max.max()),
    )
