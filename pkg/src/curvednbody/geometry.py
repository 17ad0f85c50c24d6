"""Geometric primitives for surfaces of constant nonzero curvature.

Bodies live on the quadric kappa * (q . q) = 1 inside an ambient space whose
dot product carries a sign on the last coordinate: +1 for positive curvature
(sphere), -1 for negative curvature (upper hyperboloid sheet).  The kappa > 0
case also exists one dimension up (a 3-sphere in plain Euclidean 4-space);
negative curvature is supported in three ambient dimensions only.
"""

from dataclasses import dataclass

import numpy as np


class NonRenormalizableError(ValueError):
    """Raised when kappa * (q . q) <= 0 so no radial rescale can reach the surface."""


def sigma_of(kappa):
    """Metric sign tied to the curvature sign: +1 spherical, -1 hyperbolic."""
    if kappa == 0:
        raise ValueError("curvature must be nonzero")
    return 1 if kappa > 0 else -1


@dataclass(frozen=True)
class CurvatureSpace:
    """Curvature kappa plus ambient dimension (3 or 4; 4 requires kappa > 0)."""

    kappa: float
    dim: int = 3

    def __post_init__(self):
        if self.kappa == 0:
            raise ValueError("curvature must be nonzero")
        if self.dim not in (3, 4):
            raise ValueError("ambient dimension must be 3 or 4")
        if self.dim == 4 and self.kappa < 0:
            raise ValueError("negative curvature is only supported in 3 ambient dimensions")

    @property
    def sigma(self):
        return sigma_of(self.kappa)

    @property
    def radius(self):
        """Curvature radius |kappa|^(-1/2)."""
        return abs(self.kappa) ** -0.5

    @property
    def weights(self):
        """Per-component dot-product weights: (1, 1, sigma) or (1, 1, 1, 1)."""
        w = np.ones(self.dim)
        if self.dim == 3:
            w[2] = self.sigma
        return w


def _check_dims(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    if a.shape[-1] not in (3, 4):
        raise ValueError("vectors must have 3 or 4 components")
    return a, b


def sdot(a, b, sigma=1):
    """Sign-weighted dot product; the last component carries the sign.

    With sigma=+1 this is the plain dot product.  4-component vectors are
    always plain Euclidean (that case only exists for positive curvature).
    Broadcasts over leading axes.
    """
    a, b = _check_dims(a, b)
    if sigma not in (1, -1):
        raise ValueError("sigma must be +1 or -1")
    core = (a[..., :-1] * b[..., :-1]).sum(axis=-1)
    w = 1 if a.shape[-1] == 4 else sigma
    return core + w * a[..., -1] * b[..., -1]


def scross(a, b, sigma=1):
    """Sign-twisted cross product for 3-component vectors.

    Equals the Euclidean cross product with its last component multiplied by
    sigma.  The output is sdot-orthogonal to both inputs.  Refuses
    4-component vectors: there is no such binary product one dimension up.
    """
    a, b = _check_dims(a, b)
    if a.shape[-1] != 3:
        raise ValueError("scross is defined for 3-component vectors only")
    if sigma not in (1, -1):
        raise ValueError("sigma must be +1 or -1")
    out = np.cross(a, b)
    out[..., 2] *= sigma
    return out


def cross3(a, b):
    """Plain Euclidean cross product of 3-component projected vectors.

    Used for the angular momentum of ball-projected configurations, whose
    components are ordered (u, x, y).
    """
    a, b = _check_dims(a, b)
    if a.shape[-1] != 3:
        raise ValueError("cross3 is defined for 3-component vectors only")
    return np.cross(a, b)


def constraint_residual(q, space):
    """kappa * (q . q) - 1; zero exactly on the surface."""
    return space.kappa * sdot(q, q, space.sigma) - 1.0


def tangency_residual(q, p, space):
    """(q . p) under the sign-weighted product; zero for tangent momenta."""
    return sdot(q, p, space.sigma)


def renormalize(q, p, space):
    """Pull (q, p) back onto the surface and its tangent bundle.

    q is rescaled radially to satisfy the constraint; p then loses its
    component along the rescaled position.  Raises NonRenormalizableError
    when kappa * (q . q) <= 0 (no ray from the origin through q meets the
    surface).  Idempotent up to round-off.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    s = space.kappa * sdot(q, q, space.sigma)
    if np.any(s <= 0):
        raise NonRenormalizableError(
            f"kappa * (q . q) = {np.min(s):.6g} <= 0; cannot rescale onto the surface"
        )
    qn = q / np.sqrt(s)[..., None] if q.ndim > 1 else q / np.sqrt(s)
    tang = space.kappa * sdot(qn, p, space.sigma)
    pn = p - tang[..., None] * qn if q.ndim > 1 else p - tang * qn
    return qn, pn


def mutual_product(qi, qj, space):
    """kappa * (q_i . q_j): the pair configuration variable.

    For kappa > 0 and surface-satisfying arguments it lies in [-1, 1]; +1 at
    collision, -1 at the antipodal configuration.  For kappa < 0 it is >= 1,
    with 1 at collision (no antipodal counterpart exists).
    """
    return space.kappa * sdot(qi, qj, space.sigma)
