"""Scenario definitions: a flat key=value file format plus built-in setups.

A scenario file is plain text, one `key = value` per line, `#` comments and
blank lines ignored.  Vectors are comma-separated.  Example:

    name = binary
    kappa = 1.0
    dim = 3
    t_end = 10.0
    bodies = 2
    mass_1 = 1.0
    q_1 = 0.5, 0.0, 0.8660254037844386
    p_1 = 0.0, 0.87738..., 0.0
    mass_2 = 1.0
    q_2 = -0.5, 0.0, 0.8660254037844386
    p_2 = 0.0, -0.87738..., 0.0
    rtol = 1e-13          # optional integrator overrides

Any key that names an IntegratorConfig field is collected into
config_overrides.  Zero curvature is rejected outright.  Loading verifies
the surface and tangency residuals per body and refuses infeasible initial
data unless asked to renormalize.
"""

import dataclasses
import io
import math

import numpy as np

from .dynamics import SystemState
from .geometry import CurvatureSpace, renormalize, sdot
from .integrator import IntegratorConfig

FEASIBILITY_TOL = 1e-9

_CONFIG_FIELDS = {f.name for f in dataclasses.fields(IntegratorConfig)}


class ScenarioError(ValueError):
    pass


@dataclasses.dataclass
class Scenario:
    name: str
    kappa: float
    masses: np.ndarray
    q: np.ndarray
    p: np.ndarray
    dim: int = 3
    t0: float = 0.0
    t_end: float = 10.0
    description: str = ""
    config_overrides: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.kappa == 0:
            raise ScenarioError("zero curvature is outside this model; use a flat-space code")
        if self.q.shape != (self.masses.shape[0], self.dim) or self.p.shape != self.q.shape:
            raise ScenarioError("mass/position/momentum shapes are inconsistent")

    @property
    def n(self):
        return self.masses.shape[0]

    def config(self, **extra):
        """IntegratorConfig with file overrides applied, then keyword ones."""
        kw = dict(self.config_overrides)
        kw.update(extra)
        kw.setdefault("t_end", self.t_end)
        return IntegratorConfig(**kw)

    def state(self, auto_renormalize=False):
        """Initial SystemState, after the feasibility check."""
        space = CurvatureSpace(self.kappa, self.dim)
        q, p = self.q, self.p
        cres = np.abs(space.kappa * sdot(q, q, space.sigma) - 1.0)
        tres = np.abs(sdot(q, p, space.sigma))
        if cres.max() > FEASIBILITY_TOL or tres.max() > FEASIBILITY_TOL:
            if not auto_renormalize:
                b = int(np.argmax(np.maximum(cres, tres)))
                raise ScenarioError(
                    f"infeasible initial data: body {b} has surface residual "
                    f"{cres[b]:.3e} and tangency residual {tres[b]:.3e} "
                    f"(tolerance {FEASIBILITY_TOL:g}); pass auto_renormalize to project it back"
                )
            q, p = renormalize(q, p, space)
        if self.kappa < 0 and np.any(q[:, -1] <= 0):
            raise ScenarioError("negative curvature requires every body on the upper sheet")
        return SystemState(self.t0, self.masses.copy(), q.copy(), p.copy(), space)


def _fmt_vec(v):
    return ", ".join(f"{x:.17g}" for x in v)


def dumps_scenario(sc):
    buf = io.StringIO()
    w = buf.write
    w("# curved n-body scenario\n")
    if sc.description:
        w(f"# {sc.description}\n")
    w(f"name = {sc.name}\n")
    w(f"kappa = {sc.kappa:.17g}\n")
    w(f"dim = {sc.dim}\n")
    w(f"t0 = {sc.t0:.17g}\n")
    w(f"t_end = {sc.t_end:.17g}\n")
    w(f"bodies = {sc.n}\n")
    for i in range(sc.n):
        w(f"mass_{i + 1} = {sc.masses[i]:.17g}\n")
        w(f"q_{i + 1} = {_fmt_vec(sc.q[i])}\n")
        w(f"p_{i + 1} = {_fmt_vec(sc.p[i])}\n")
    for k, v in sorted(sc.config_overrides.items()):
        w(f"{k} = {v:.17g}\n" if isinstance(v, float) else f"{k} = {v}\n")
    return buf.getvalue()


def write_scenario(path, sc):
    with open(path, "w") as fh:
        fh.write(dumps_scenario(sc))


def loads_scenario(text, origin="<string>"):
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ScenarioError(f"{origin}:{lineno}: expected 'key = value', got {line!r}")
        key, _, val = stripped.partition("=")
        key = key.strip()
        val = val.strip()
        if key in raw:
            raise ScenarioError(f"{origin}:{lineno}: duplicate key {key!r}")
        raw[key] = val

    def pop(key, conv=str, default=None, required=False):
        if key not in raw:
            if required:
                raise ScenarioError(f"{origin}: missing required key {key!r}")
            return default
        try:
            return conv(raw.pop(key))
        except ValueError as exc:
            raise ScenarioError(f"{origin}: bad value for {key!r}: {exc}") from exc

    def vec(s):
        return np.array([float(x) for x in s.split(",")], dtype=float)

    name = pop("name", required=True)
    kappa = pop("kappa", float, required=True)
    dim = pop("dim", int, default=3)
    if dim not in (3, 4):
        raise ScenarioError(f"{origin}: dim must be 3 or 4, got {dim}")
    t0 = pop("t0", float, default=0.0)
    t_end = pop("t_end", float, default=10.0)
    n = pop("bodies", int, required=True)
    if n < 1:
        raise ScenarioError(f"{origin}: bodies must be >= 1")
    masses = np.empty(n)
    q = np.empty((n, dim))
    p = np.empty((n, dim))
    for i in range(n):
        masses[i] = pop(f"mass_{i + 1}", float, required=True)
        qi = pop(f"q_{i + 1}", vec, required=True)
        pi = pop(f"p_{i + 1}", vec, required=True)
        if qi.shape != (dim,) or pi.shape != (dim,):
            raise ScenarioError(f"{origin}: body {i + 1} vectors must have {dim} components")
        q[i] = qi
        p[i] = pi
    if np.any(masses <= 0):
        raise ScenarioError(f"{origin}: masses must be positive")
    overrides = {}
    for key in list(raw):
        if key in _CONFIG_FIELDS:
            val = raw.pop(key)
            overrides[key] = int(val) if key == "max_steps" else float(val)
    if raw:
        raise ScenarioError(f"{origin}: unknown keys: {', '.join(sorted(raw))}")
    return Scenario(name=name, kappa=kappa, masses=masses, q=q, p=p, dim=dim,
                    t0=t0, t_end=t_end, config_overrides=overrides)


def load_scenario(path):
    with open(path) as fh:
        return loads_scenario(fh.read(), origin=str(path))


def _binary_orbit(kappa, r):
    """Equal-mass pair rotating on the circle |qbar| = r; works for either
    curvature sign, the spin rate solving the relative-equilibrium balance
    omega^2 = m / (4 r^3 z0^3) with z0 the last coordinate."""
    sigma = 1.0 if kappa > 0 else -1.0
    z0 = math.sqrt(1.0 / abs(kappa) - sigma * r * r)
    omega = math.sqrt(1.0 / (4.0 * r ** 3 * z0 ** 3))
    q = np.array([[r, 0.0, z0], [-r, 0.0, z0]])
    p = np.array([[0.0, omega * r, 0.0], [0.0, -omega * r, 0.0]])
    return q, p


def _triangle_on_circle(r, z, omega):
    """Three unit masses, equilateral on the circle of radius r at height z,
    each with tangential speed omega*r."""
    q = np.empty((3, 3))
    p = np.empty((3, 3))
    for k in range(3):
        phi = 2.0 * math.pi * k / 3.0
        q[k] = (r * math.cos(phi), r * math.sin(phi), z)
        p[k] = (-omega * r * math.sin(phi), omega * r * math.cos(phi), 0.0)
    return q, p


def builtin_scenarios():
    """Named ready-to-run setups covering both curvature signs and both
    ambient dimensions."""
    out = {}

    v = 0.2
    out["geodesic_s2"] = Scenario(
        name="geodesic_s2", kappa=1.0,
        masses=[1.0], q=[[1.0, 0.0, 0.0]], p=[[0.0, v, 0.0]],
        t_end=12.0,
        description="single body on the unit sphere; great-circle closed form",
    )

    v = 0.02  # slow: keeps cosh growth mild so the closed form stays comparable
    out["geodesic_h2"] = Scenario(
        name="geodesic_h2", kappa=-1.0,
        masses=[1.0], q=[[0.0, 0.0, 1.0]], p=[[v, 0.0, 0.0]],
        t_end=20.0,
        description="single body on the hyperboloid upper sheet; sinh/cosh closed form",
    )

    out["two_body_collapse_s2"] = Scenario(
        name="two_body_collapse_s2", kappa=1.0,
        masses=[1.0, 1.0],
        q=[[0.6, 0.0, 0.8], [-0.6, 0.0, 0.8]],
        p=[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
        t_end=10.0,
        description="symmetric release; binary collision at the north pole",
    )

    theta = math.pi / 3.0
    out["great_circle_441"] = Scenario(
        name="great_circle_441", kappa=1.0,
        masses=[4.0, 4.0, 1.0],
        q=[[math.cos(theta), math.sin(theta), 0.0],
           [math.cos(theta), -math.sin(theta), 0.0],
           [-1.0, 0.0, 0.0]],
        p=[[0.0, 0.0, 0.0]] * 3,
        t_end=10.0,
        description="masses 4,4,1 released on a common great circle",
    )

    r0 = 0.5
    z0 = math.sqrt(1.0 - r0 * r0)
    qs3 = []
    for k in range(3):
        phi = 2.0 * math.pi * k / 3.0
        qs3.append([r0 * math.cos(phi), 0.0, r0 * math.sin(phi), z0])
    out["s3_triangle_collapse"] = Scenario(
        name="s3_triangle_collapse", kappa=1.0, dim=4,
        masses=[1.0, 1.0, 1.0],
        q=qs3, p=[[0.0] * 4] * 3,
        t_end=10.0,
        description="equilateral release inside the great sphere y = 0 of the 3-sphere",
    )

    q, p = _binary_orbit(-1.0, 0.8)
    out["h2_binary_orbit"] = Scenario(
        name="h2_binary_orbit", kappa=-1.0,
        masses=[1.0, 1.0], q=q, p=p,
        t_end=40.0,
        description="hyperbolic relative equilibrium: pair on a circular orbit",
    )

    q, p = _binary_orbit(1.0, 0.5)
    out["s2_binary_orbit"] = Scenario(
        name="s2_binary_orbit", kappa=1.0,
        masses=[1.0, 1.0], q=q, p=p,
        t_end=20.0,
        description="spherical relative equilibrium: pair on a circular orbit",
    )

    # sub-equilibrium spin: the triangle contracts while keeping nonzero
    # angular momentum, so the inertia shrinks without reaching collision
    theta = math.pi / 6.0
    r, z = math.sin(theta), math.cos(theta)
    s = z * z - r * r / 2.0
    d3 = (1.0 - s * s) ** 1.5
    omega_eq = math.sqrt((1.0 + 2.0 * s) / (z * z * d3))
    q, p = _triangle_on_circle(r, z, 0.55 * omega_eq)
    out["rotating_triangle_s2"] = Scenario(
        name="rotating_triangle_s2", kappa=1.0,
        masses=[1.0, 1.0, 1.0], q=q, p=p,
        t_end=6.0,
        description="equilateral triangle spun below equilibrium rate; contracting",
    )

    return out
