"""Equations of motion for the curved n-body problem with cotangent potential.

The force function of a configuration q_1..q_n of masses m_1..m_n is

    U = (1/2) sum_{i != j} m_i m_j (sigma kappa)^(1/2) (kappa q_i.q_j)
        / [sigma (kappa q_i.q_i)(kappa q_j.q_j) - sigma (kappa q_i.q_j)^2]^(1/2)

with the sign-weighted dot product throughout.  U is degree-zero homogeneous
in each body's coordinates, so it extends off the constraint surface; its
gradient (in the sign-twisted convention, see geometry) keeps the
kappa*(q.q) factors and is tangent to the surface identically.
"""

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .geometry import CurvatureSpace, scross, sdot

DENOM_TOL = 1e-13  # refusal threshold on the pair denominator, relative


class SingularConfigurationError(ValueError):
    """A pair's interaction denominator vanished (collision or antipodal pair)."""

    def __init__(self, pairs, message=None):
        self.pairs = list(pairs)
        if message is None:
            names = ", ".join(f"({i}, {j})" for i, j in self.pairs)
            message = f"singular configuration: pair denominator vanishes for {names}"
        super().__init__(message)


@dataclass
class SystemState:
    """Time, masses, ambient positions q (n, dim) and momenta p (n, dim)."""

    t: float
    masses: np.ndarray
    q: np.ndarray
    p: np.ndarray
    space: CurvatureSpace

    def __post_init__(self):
        self.masses = np.ascontiguousarray(self.masses, dtype=float)
        self.q = np.ascontiguousarray(self.q, dtype=float)
        self.p = np.ascontiguousarray(self.p, dtype=float)
        n = self.masses.shape[0]
        if self.q.shape != (n, self.space.dim) or self.p.shape != (n, self.space.dim):
            raise ValueError(
                f"positions/momenta must have shape ({n}, {self.space.dim})"
            )
        if np.any(self.masses <= 0):
            raise ValueError("masses must be positive")

    @property
    def n(self):
        return self.masses.shape[0]

    def copy(self):
        return SystemState(self.t, self.masses.copy(), self.q.copy(), self.p.copy(), self.space)

    def residuals(self):
        """(max |kappa q.q - 1|, max |q.p|) over the bodies."""
        sig = self.space.sigma
        c = np.abs(self.space.kappa * sdot(self.q, self.q, sig) - 1.0)
        t = np.abs(sdot(self.q, self.p, sig))
        return float(c.max()), float(t.max())


def force_function(state):
    """The cotangent force function U of the configuration (a float).

    Raises SingularConfigurationError naming the offending pair(s) when some
    pair denominator falls below the refusal threshold.
    """
    sp = state.space
    U, status, i, j = backend.active.force_grad(
        state.masses, state.q, sp.kappa, sp.sigma, sp.weights, DENOM_TOL, None
    )
    if status != backend.active.OK:
        raise SingularConfigurationError([(i, j)])
    return U


def grad_force_function(state):
    """Sign-twisted gradient of U per body, shape (n, dim).

    For any direction v, the plain directional derivative of U along v equals
    sdot(v, grad, sigma).  The gradient is sdot-orthogonal to each body's own
    position identically.
    """
    sp = state.space
    grad = np.empty_like(state.q)
    _, status, i, j = backend.active.force_grad(
        state.masses, state.q, sp.kappa, sp.sigma, sp.weights, DENOM_TOL, grad
    )
    if status != backend.active.OK:
        raise SingularConfigurationError([(i, j)])
    return grad


def rhs(state):
    """(dq/dt, dp/dt) of the constrained equations of motion.

    dq_i/dt = p_i / m_i
    dp_i/dt = grad_i U - m_i^-1 kappa (p_i . p_i) q_i

    The momentum term keeps tangency: for surface-satisfying states the time
    derivative of (q_i . p_i) computed from this right-hand side vanishes.
    """
    sp = state.space
    dq = np.empty_like(state.q)
    dp = np.empty_like(state.p)
    status, i, j = backend.active.rhs(
        backend.active.MODE_FULL,
        state.masses,
        state.q,
        state.p,
        sp.kappa,
        sp.sigma,
        DENOM_TOL,
        dq,
        dp,
    )
    if status != backend.active.OK:
        raise SingularConfigurationError([(i, j)])
    return dq, dp


def total_energy(state):
    """Conserved energy h = (1/2) sum_i m_i^-1 (p_i . p_i) - U.

    Conventions differ by a factor of two in the literature: the
    constraint-simplified energy relation is often written with both sides
    doubled, sum_i m_i^-1 (p_i . p_i) - 2U = 2h.  This function returns h.
    """
    sig = state.space.sigma
    kinetic = 0.5 * float((sdot(state.p, state.p, sig) / state.masses).sum())
    return kinetic - force_function(state)


def angular_momentum(state):
    """Total angular momentum sum_i q_i x p_i (sign-twisted cross product).

    Only defined in 3 ambient dimensions; raises ValueError for the 3-sphere
    case, which has no such 3-component integral (use the projected angular
    momentum instead).
    """
    if state.space.dim != 3:
        raise ValueError("angular_momentum is defined in 3 ambient dimensions only")
    return scross(state.q, state.p, state.space.sigma).sum(axis=0)


@dataclass
class FirstIntegrals:
    """Energy h, and the angular momentum c when it exists (dim 3)."""

    h: float
    c: np.ndarray | None = field(default=None)


def first_integrals(state):
    c = angular_momentum(state) if state.space.dim == 3 else None
    return FirstIntegrals(h=total_energy(state), c=c)
