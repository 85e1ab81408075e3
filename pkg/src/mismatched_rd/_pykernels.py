"""Pure-numpy Gibbs scaling kernels (fallback for the compiled module).

The semidual of the entropy-regularised transport problem at temperature
``T`` (natural-log units) is maximised over row potentials ``a`` by damped
Newton.  Column potentials are eliminated in closed form, so every iterate
has exactly normalised columns.  Masked entries carry ``cost = +inf``.
"""

import numpy as np

ARMIJO = 1e-4
MIN_STEP = 1e-6
STEP_CAP = 30.0
STALL = 12


def _evaluate(cost, pu, lam, T, a, p, b):
    with np.errstate(invalid="ignore", over="ignore"):
        s = a[:, None] - cost / T
    m = s.max(axis=0)
    e = np.exp(s - m)
    z = e.sum(axis=0)
    b[:] = -(m + np.log(z))
    p[:] = e / z
    resid = p @ lam - pu
    return resid, float(pu @ a + lam @ b)


def gibbs_solve(cost, pu, lam, T, a, p, b, tol, maxit):
    """Newton on the semidual; updates ``a``, ``p``, ``b`` in place.

    Returns ``(iterations, max |row residual|)``.
    """
    U = pu.size
    resid, G = _evaluate(cost, pu, lam, T, a, p, b)
    err = float(np.max(np.abs(resid)))
    a_new = np.empty_like(a)
    p_new = np.empty_like(p)
    b_new = np.empty_like(b)
    it = 0
    best, stale = err, 0
    while it < maxit and err > tol and stale < STALL:
        it += 1
        pl = p * lam
        M = np.diag(pl.sum(axis=1)) - pl @ p.T
        tr = max(np.trace(M) / U, 1e-300)
        M += tr / U + 1e-13 * tr * np.eye(U)
        grad = -resid
        d = np.linalg.solve(M, grad)
        big = float(np.max(np.abs(d)))
        if big > STEP_CAP:
            d *= STEP_CAP / big
        slope = float(grad @ d)
        t = 1.0
        accepted = False
        while t >= MIN_STEP:
            a_new[:] = a + t * d
            r_new, G_new = _evaluate(cost, pu, lam, T, a_new, p_new, b_new)
            e_new = float(np.max(np.abs(r_new)))
            if np.isfinite(G_new) and (G_new >= G + ARMIJO * t * slope or
                (e_new < 0.9 * err and G_new >= G - 1e-12 * (abs(G) + 1.0))):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # Sinkhorn row update: exact block ascent on the full dual
            with np.errstate(invalid="ignore", over="ignore"):
                s = np.log(lam)[None, :] + b[None, :] - cost / T
            m = s.max(axis=1)
            a_new[:] = np.log(pu) - (m + np.log(np.exp(s - m[:, None]).sum(axis=1)))
            r_new, G_new = _evaluate(cost, pu, lam, T, a_new, p_new, b_new)
            e_new = float(np.max(np.abs(r_new)))
            if not (np.isfinite(G_new) and G_new >= G - 1e-12 * (abs(G) + 1.0)):
                break
        a[:] = a_new
        p[:] = p_new
        b[:] = b_new
        resid, G, err = r_new, G_new, e_new
        if err < 0.5 * best:
            best, stale = err, 0
        else:
            stale += 1
    return it, err


def info_bits(p, lam, pu):
    """``sum_w lam_w sum_u p_uw log2(p_uw / pu_u)``."""
    pos = p > 0
    ratio = np.ones_like(p)
    ratio[pos] = p[pos] / np.broadcast_to(pu[:, None], p.shape)[pos]
    return float(lam @ np.where(pos, p * np.log2(ratio), 0.0).sum(axis=0))
