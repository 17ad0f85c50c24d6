"""Pure-numpy kernels: force function, gradients, right-hand sides, embedded step.

This module mirrors the compiled extension ``curvednbody._core`` exactly (same
functions, signatures and status codes).  It is the fallback selected by
``curvednbody.backend`` when the extension is unavailable, and the reference
the backend-parity tests compare against.
"""

import numpy as np

COMPILED = False

# Evolution modes shared with the compiled kernel.
MODE_FULL = 0         # ambient coordinates on the curved surface, sign-weighted dot
MODE_PROJECTED = 1    # literal projected system in the disk/ball, plain dot
MODE_PUSHFORWARD = 2  # full flow expressed in disk/ball coordinates

# Status codes.
OK = 0
SINGULAR_PAIR = 1       # a pair denominator fell below the refusal threshold
NON_RENORMALIZABLE = 2  # kappa * (q . q) <= 0, radial rescale impossible
LEFT_CHART = 3          # projected point left the open ball of the chart

# Cash-Karp 5(4) embedded pair.
CK_C = np.array([0.0, 1 / 5, 3 / 10, 3 / 5, 1.0, 7 / 8])
CK_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (3 / 10, -9 / 10, 6 / 5),
    (-11 / 54, 5 / 2, -70 / 27, 35 / 27),
    (1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096),
)
CK_B5 = np.array([37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771])
CK_B4 = np.array(
    [2825 / 27648, 0.0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4]
)
CK_E = CK_B5 - CK_B4


def _weights(dim, sigma):
    w = np.ones(dim)
    if dim == 3:
        w[2] = sigma
    return w


def force_grad(masses, q, kappa, sigma, weights, denom_tol, grad_out=None):
    """Pairwise cotangent force function and (optionally) its ambient gradient.

    The gradient convention carries the metric sign on the last component, so
    that for any direction v the plain directional derivative of the force
    function equals the sign-weighted dot of v with the returned gradient.
    The (kappa q.q) factors are kept, so values and gradients are defined off
    the constraint surface too (the function is degree-zero homogeneous in
    each body's coordinates).

    Returns (U, status, i, j); on SINGULAR_PAIR, (i, j) names the offending
    pair and U / grad_out contents are meaningless.
    """
    n, d = q.shape
    if grad_out is not None:
        grad_out[:] = 0.0
    if n < 2:
        return 0.0, OK, -1, -1
    qw = q * weights
    gram = kappa * (q @ qw.T)       # gram[i, j] = kappa * (q_i . q_j)
    diag = np.diag(gram).copy()     # diag[i]   = kappa * (q_i . q_i)
    ab = np.outer(diag, diag)
    den2 = sigma * (ab - gram * gram)
    iu, ju = np.triu_indices(n, 1)
    bad = den2[iu, ju] < denom_tol * np.abs(ab[iu, ju])
    if np.any(bad):
        k = int(np.argmax(bad))
        return 0.0, SINGULAR_PAIR, int(iu[k]), int(ju[k])
    den = np.sqrt(den2)
    np.fill_diagonal(den, 1.0)
    sq = np.sqrt(abs(kappa))        # (sigma * kappa)^(1/2)
    mm = np.outer(masses, masses)
    U = float(((mm * gram / den)[iu, ju]).sum() * sq)
    if grad_out is not None:
        d3 = den2 ** 1.5
        np.fill_diagonal(d3, 1.0)
        coef = mm * (sq ** 3) * diag[None, :] / d3
        np.fill_diagonal(coef, 0.0)
        grad_out[:] = diag[:, None] * (coef @ q) - (
            (coef * gram).sum(axis=1)[:, None] * q
        )
    return U, OK, -1, -1


def _lift(q, p, kappa):
    """Recover the dropped last coordinate and its momentum in the ball chart."""
    z2 = 1.0 / kappa - (q * q).sum(axis=1)
    if np.any(z2 <= 0.0):
        return None, None, int(np.argmin(z2))
    z = np.sqrt(z2)
    pz = -(q * p).sum(axis=1) / z
    qf = np.concatenate([q, z[:, None]], axis=1)
    pf = np.concatenate([p, pz[:, None]], axis=1)
    return qf, pf, -1


def rhs(mode, masses, q, p, kappa, sigma, denom_tol, dq_out, dp_out):
    """Right-hand side of the chosen evolution system.

    MODE_FULL: momentum form on the curved surface, with the velocity-squared
    constraint term.  MODE_PROJECTED: the same equations written on projected
    vectors with plain dot products.  MODE_PUSHFORWARD: the full system's flow
    expressed in the projected chart (lift, evaluate, drop).
    Returns (status, i, j).
    """
    n, d = q.shape
    if mode == MODE_PUSHFORWARD:
        qf, pf, bad = _lift(q, p, kappa)
        if qf is None:
            return LEFT_CHART, bad, bad
        dqf = np.empty_like(qf)
        dpf = np.empty_like(pf)
        status, i, j = rhs(MODE_FULL, masses, qf, pf, kappa, sigma, denom_tol, dqf, dpf)
        if status != OK:
            return status, i, j
        dq_out[:] = dqf[:, :d]
        dp_out[:] = dpf[:, :d]
        return OK, -1, -1
    w = _weights(d, sigma) if mode == MODE_FULL else np.ones(d)
    grad = np.empty_like(q)
    _, status, i, j = force_grad(masses, q, kappa, sigma, w, denom_tol, grad)
    if status != OK:
        return status, i, j
    pp = ((p * w) * p).sum(axis=1)
    dq_out[:] = p / masses[:, None]
    dp_out[:] = grad - (kappa * pp / masses)[:, None] * q
    return OK, -1, -1


def renormalize_state(q, p, kappa, sigma, q_out, p_out):
    """Radial rescale onto the constraint surface plus tangential projection."""
    n, d = q.shape
    w = _weights(d, sigma)
    s = kappa * ((q * w) * q).sum(axis=1)
    if np.any(s <= 0.0):
        return NON_RENORMALIZABLE
    q_out[:] = q / np.sqrt(s)[:, None]
    tang = kappa * ((q_out * w) * p).sum(axis=1)
    p_out[:] = p - tang[:, None] * q_out
    return OK


def ck_step(mode, masses, q, p, dt, kappa, sigma, rtol, atol, denom_tol, q_out, p_out):
    """One Cash-Karp 5(4) step; in MODE_FULL every body is renormalized after.

    The error norm (RMS of the embedded difference against atol + rtol * |y|)
    is measured before the re-projection.  Returns (err, status, i, j).
    """
    kq = [None] * 6
    kp = [None] * 6
    for s in range(6):
        qs = q.copy()
        ps = p.copy()
        for j, a in enumerate(CK_A[s]):
            qs += (dt * a) * kq[j]
            ps += (dt * a) * kp[j]
        dq = np.empty_like(q)
        dp = np.empty_like(p)
        status, i, j = rhs(mode, masses, qs, ps, kappa, sigma, denom_tol, dq, dp)
        if status != OK:
            return 0.0, status, i, j
        kq[s] = dq
        kp[s] = dp
    q5 = q.copy()
    p5 = p.copy()
    eq = np.zeros_like(q)
    ep = np.zeros_like(p)
    for s in range(6):
        if CK_B5[s] != 0.0:
            q5 += (dt * CK_B5[s]) * kq[s]
            p5 += (dt * CK_B5[s]) * kp[s]
        if CK_E[s] != 0.0:
            eq += (dt * CK_E[s]) * kq[s]
            ep += (dt * CK_E[s]) * kp[s]
    sc_q = atol + rtol * np.maximum(np.abs(q), np.abs(q5))
    sc_p = atol + rtol * np.maximum(np.abs(p), np.abs(p5))
    err2 = ((eq / sc_q) ** 2).sum() + ((ep / sc_p) ** 2).sum()
    err = float(np.sqrt(err2 / (2 * q.size)))
    if mode == MODE_FULL:
        status = renormalize_state(q5, p5, kappa, sigma, q_out, p_out)
        if status != OK:
            w = _weights(q.shape[1], sigma)
            s2 = kappa * ((q5 * w) * q5).sum(axis=1)
            bad = int(np.argmin(s2))
            return err, status, bad, bad
    else:
        q_out[:] = q5
        p_out[:] = p5
    return err, OK, -1, -1
