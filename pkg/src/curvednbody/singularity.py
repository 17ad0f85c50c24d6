"""Pair-proximity metrics and singular-configuration classification.

The pair variable s_ij = kappa * (q_i . q_j) equals +1 exactly at a binary
collision and (for positive curvature) -1 at the antipodal configuration;
d_ij = |s_ij^2 - 1| is the squared interaction denominator for
constraint-satisfying states and is the metric all events and monitors use.
Negative curvature admits no antipodal configurations (s_ij >= 1 there).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import sdot

PAIR_EPS_DEFAULT = 1e-6
ANGLE_EPS_DEFAULT = 1e-8


@dataclass
class PairMetricTable:
    """Signed products s and metrics d for every pair i < j of one state."""

    n: int
    s: np.ndarray  # (n, n) symmetric, diagonal = kappa * (q_i . q_i)
    d: np.ndarray  # (n, n) symmetric, |s^2 - 1|, diagonal meaningless

    def pairs(self):
        for i in range(self.n):
            for j in range(i + 1, self.n):
                yield (i, j), self.s[i, j], self.d[i, j]

    def min_metric(self):
        if self.n < 2:
            return math.inf
        iu = np.triu_indices(self.n, 1)
        return float(self.d[iu].min())

    def argmin_pair(self):
        iu, ju = np.triu_indices(self.n, 1)
        k = int(np.argmin(self.d[iu, ju]))
        return int(iu[k]), int(ju[k])


def pair_metrics(state):
    """PairMetricTable of a full-system state."""
    sp = state.space
    g = sp.kappa * (state.q @ (state.q * sp.weights).T)
    return PairMetricTable(n=state.n, s=g, d=np.abs(g * g - 1.0))


def min_pair_metric(state):
    """min over pairs of |s_ij^2 - 1|; +inf for a single body."""
    return pair_metrics(state).min_metric()


@dataclass
class ProximityClass:
    """Per-pair proximity labels and the global configuration label.

    Global labels: clear, collision, antipodal, collision_antipodal (both
    kinds present with a shared body), hybrid (both kinds, disjoint pairs).
    For positive curvature a pure antipodal label carries the note that such
    a configuration is not dynamically reachable on its own (the force
    function diverges to -infinity there, which the energy integral forbids
    unless a collision diverges it to +infinity at the same moment).
    """

    eps: float
    near_collision: list = field(default_factory=list)
    near_antipodal: list = field(default_factory=list)
    global_label: str = "clear"
    note: str = ""

    def flagged_pairs(self):
        return list(self.near_collision) + list(self.near_antipodal)


def classify(state, eps=PAIR_EPS_DEFAULT):
    """Classify pair proximity at a state; monotone in eps by construction.

    A pair is near_collision when d_ij <= eps with s_ij > 0, near_antipodal
    when d_ij <= eps with s_ij < 0 (positive curvature only; negative
    curvature never yields antipodal labels).
    """
    table = pair_metrics(state)
    cls = ProximityClass(eps=eps)
    for (i, j), s, d in table.pairs():
        if d <= eps:
            if s > 0:
                cls.near_collision.append((i, j))
            elif state.space.kappa > 0:
                cls.near_antipodal.append((i, j))
    has_c = bool(cls.near_collision)
    has_a = bool(cls.near_antipodal)
    if has_c and has_a:
        bodies_c = {b for pr in cls.near_collision for b in pr}
        linked = any(i in bodies_c or j in bodies_c for i, j in cls.near_antipodal)
        cls.global_label = "collision_antipodal" if linked else "hybrid"
    elif has_c:
        cls.global_label = "collision"
    elif has_a:
        cls.global_label = "antipodal"
    if cls.global_label == "antipodal" and state.space.kappa > 0:
        cls.note = (
            "antipodal proximity alone is not reachable by the flow; "
            "expect a simultaneous collision if this deepens"
        )
    return cls


@dataclass
class PoleGeodesicReport:
    """Pairs whose chart positions are collinear with the origin.

    Such pairs lie (with the projection pole) on a single geodesic through
    the pole; they are exactly the configurations where the chart dynamics
    has a spurious divergence.  Bodies sitting at the pole itself project to
    the origin and are collinear with everything; they are reported
    separately instead of being folded into the pair list.
    """

    pairs: list = field(default_factory=list)
    degenerate_bodies: list = field(default_factory=list)
    min_angle: float = math.inf


def pole_geodesic_detect(state, eps_angle=ANGLE_EPS_DEFAULT):
    """Detect pole-geodesic pairs of a positive-curvature state.

    The chart position is the position with its last coordinate dropped; a
    pair is flagged when the angle between the two chart rays is within
    eps_angle of 0 or pi.  Invariant under rotations about the pole axis.
    """
    if state.space.kappa <= 0:
        raise ValueError("pole-geodesic detection applies to positive curvature only")
    qbar = state.q[:, :-1]
    r = np.sqrt((qbar * qbar).sum(axis=1))
    radius = state.space.radius
    rep = PoleGeodesicReport()
    degen = r <= eps_angle * radius
    rep.degenerate_bodies = [int(i) for i in np.nonzero(degen)[0]]
    for i in range(state.n):
        if degen[i]:
            continue
        for j in range(i + 1, state.n):
            if degen[j]:
                continue
            # sin of the angle between the chart rays: precise near
            # collinearity, where the acos form loses half the digits
            if qbar.shape[1] == 2:
                cr = abs(float(qbar[i, 0] * qbar[j, 1] - qbar[i, 1] * qbar[j, 0]))
            else:
                cr = float(np.linalg.norm(np.cross(qbar[i], qbar[j])))
            ang = math.asin(min(1.0, cr / (r[i] * r[j])))  # to the nearest of 0, pi
            rep.min_angle = min(rep.min_angle, ang)
            if ang <= eps_angle:
                rep.pairs.append((i, j))
    return rep


@dataclass
class PainleveVerdict:
    """Monitor output for the endgame of one trajectory.

    The configured singular set is approached iff the min pair metric tends
    to 0; the liminf estimates are minima over the trailing window (final 10%
    of accepted samples).  A pair heading to s = -1 voids the
    collision-only reading of the endpoint: the collision_antipodal flag
    marks runs where collision pairs (s -> +1) and antipodal pairs
    (s -> -1) degenerate together, the configuration where finite forces at
    the singularity become possible.
    """

    is_candidate: bool
    reason: str
    t: np.ndarray
    min_metric_series: np.ndarray          # min over pairs of d_ij
    min_collision_gap_series: np.ndarray   # min over pairs of |s_ij - 1|
    liminf_metric: float = math.inf
    liminf_collision_gap: float = math.inf
    metric_to_zero: bool = False
    antipodal_approach: bool = False
    antipodal_pairs: list = field(default_factory=list)
    collision_antipodal: bool = False
    window: int = 0


def painleve_monitor(traj, eps=PAIR_EPS_DEFAULT):
    """Assess whether a finished run is a genuine singularity candidate.

    Time-limited runs are reported as "not a singularity candidate".  For
    event- or underflow-terminated runs, the verdict records whether the min
    pair metric reached the event scale (the singularity signature), whether
    any pair approached the antipodal value, and the trailing-window liminf
    estimates of both series.
    """
    if traj.mode == "full":
        w = np.ones(traj.dim)
        if traj.dim == 3:
            w[2] = traj.sigma
        qs = traj.q
    else:
        z2 = 1.0 / traj.kappa - (traj.q * traj.q).sum(axis=2)
        z = np.sqrt(np.maximum(z2, 0.0))
        qs = np.concatenate([traj.q, z[..., None]], axis=2)
        w = np.ones(traj.dim + 1)
    m = traj.t.shape[0]
    n = traj.n
    iu, ju = np.triu_indices(n, 1)
    if iu.size == 0:
        return PainleveVerdict(
            False, "fewer than two bodies", traj.t, np.full(m, math.inf), np.full(m, math.inf)
        )
    s = traj.kappa * np.einsum("kid,kjd->kij", qs, qs * w)
    s_pairs = s[:, iu, ju]
    d_series = np.abs(s_pairs ** 2 - 1.0).min(axis=1)
    gap_series = np.abs(s_pairs - 1.0).min(axis=1)

    reason = traj.termination.reason
    window = max(1, m // 10)
    tail = slice(m - window, m)
    v = PainleveVerdict(
        is_candidate=reason != "time_limit",
        reason=(
            "not a singularity candidate (run ended at the time limit)"
            if reason == "time_limit"
            else f"terminated by {reason}"
        ),
        t=traj.t,
        min_metric_series=d_series,
        min_collision_gap_series=gap_series,
        window=window,
    )
    v.liminf_metric = float(d_series[tail].min())
    v.liminf_collision_gap = float(gap_series[tail].min())
    v.metric_to_zero = v.liminf_metric <= eps
    anti = np.abs(s_pairs[-1] + 1.0) <= np.sqrt(eps)
    v.antipodal_approach = bool(anti.any())
    v.antipodal_pairs = [(int(iu[k]), int(ju[k])) for k in np.nonzero(anti)[0]]
    coll = np.abs(s_pairs[-1] - 1.0) <= np.sqrt(eps)
    v.collision_antipodal = bool(v.antipodal_approach and coll.any())
    return v
