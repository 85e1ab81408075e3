# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Gibbs scaling kernels; same contract as ``_pykernels``."""

from libc.math cimport exp, log, log2, fabs, isfinite, INFINITY
from libc.stdlib cimport malloc, free

cdef double ARMIJO = 1e-4
cdef double MIN_STEP = 1e-6
cdef double STEP_CAP = 30.0
cdef int STALL = 12


cdef double _evaluate(const double[:, ::1] cost, const double[::1] pu,
                      const double[::1] lam, double T, double* a,
                      double* p, double* b, double* resid,
                      Py_ssize_t U, Py_ssize_t W) nogil:
    cdef Py_ssize_t u, w
    cdef double m, z, s, G = 0.0
    for u in range(U):
        resid[u] = -pu[u]
        G += pu[u] * a[u]
    for w in range(W):
        m = -INFINITY
        for u in range(U):
            s = a[u] - cost[u, w] / T
            p[u * W + w] = s
            if s > m:
                m = s
        z = 0.0
        for u in range(U):
            s = p[u * W + w]
            if s == -INFINITY:
                p[u * W + w] = 0.0
            else:
                p[u * W + w] = exp(s - m)
                z += p[u * W + w]
        b[w] = -(m + log(z))
        G += lam[w] * b[w]
        for u in range(U):
            p[u * W + w] /= z
            resid[u] += lam[w] * p[u * W + w]
    return G


cdef double _maxabs(double* x, Py_ssize_t n) nogil:
    cdef double m = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        if fabs(x[i]) > m:
            m = fabs(x[i])
    return m


cdef void _row_update(const double[:, ::1] cost, const double[::1] pu,
                      const double[::1] lam, double T, double* b, double* a_new,
                      Py_ssize_t U, Py_ssize_t W) nogil:
    cdef Py_ssize_t u, w
    cdef double m, z, s
    for u in range(U):
        m = -INFINITY
        for w in range(W):
            s = log(lam[w]) + b[w] - cost[u, w] / T
            if s > m:
                m = s
        z = 0.0
        for w in range(W):
            s = log(lam[w]) + b[w] - cost[u, w] / T
            if s != -INFINITY:
                z += exp(s - m)
        a_new[u] = log(pu[u]) - (m + log(z))


cdef int _cholesky_solve(double* M, double* rhs, double* out, Py_ssize_t n) nogil:
    # in-place lower Cholesky of M (row-major, n x n); returns 0 on failure
    cdef Py_ssize_t i, j, k
    cdef double s
    for j in range(n):
        s = M[j * n + j]
        for k in range(j):
            s -= M[j * n + k] * M[j * n + k]
        if s <= 0.0:
            return 0
        M[j * n + j] = s ** 0.5
        for i in range(j + 1, n):
            s = M[i * n + j]
            for k in range(j):
                s -= M[i * n + k] * M[j * n + k]
            M[i * n + j] = s / M[j * n + j]
    for i in range(n):
        s = rhs[i]
        for k in range(i):
            s -= M[i * n + k] * out[k]
        out[i] = s / M[i * n + i]
    for i in range(n - 1, -1, -1):
        s = out[i]
        for k in range(i + 1, n):
            s -= M[k * n + i] * out[k]
        out[i] = s / M[i * n + i]
    return 1


def gibbs_solve(const double[:, ::1] cost, const double[::1] pu,
                const double[::1] lam, double T, double[::1] a,
                double[:, ::1] p, double[::1] b, double tol, int maxit):
    """Newton on the semidual; updates ``a``, ``p``, ``b`` in place.

    Returns ``(iterations, max |row residual|)``.
    """
    cdef Py_ssize_t U = cost.shape[0], W = cost.shape[1]
    cdef Py_ssize_t u, k, w, i
    cdef double* buf = <double*> malloc(sizeof(double) * (5 * U + 2 * U * W + W + 2 * U * U))
    if buf == NULL:
        raise MemoryError()
    cdef double* resid = buf
    cdef double* r_new = buf + U
    cdef double* d = buf + 2 * U
    cdef double* a_new = buf + 3 * U
    cdef double* grad = buf + 4 * U
    cdef double* p_new = buf + 5 * U
    cdef double* b_new = buf + 5 * U + 2 * U * W
    cdef double* M = buf + 5 * U + 2 * U * W + W
    cdef double* Mc = M + U * U
    cdef double G, G_new, err, e_new, tr, slope, t, ridge, acc, best
    cdef int it = 0, accepted, ok, stale = 0
    try:
        with nogil:
            G = _evaluate(cost, pu, lam, T, &a[0], &p[0, 0], &b[0], resid, U, W)
            err = _maxabs(resid, U)
            best = err
            while it < maxit and err > tol and stale < STALL:
                it += 1
                for u in range(U):
                    for k in range(U):
                        M[u * U + k] = 0.0
                for w in range(W):
                    for u in range(U):
                        acc = lam[w] * p[u, w]
                        if acc == 0.0:
                            continue
                        M[u * U + u] += acc
                        for k in range(U):
                            M[u * U + k] -= acc * p[k, w]
                tr = 0.0
                for u in range(U):
                    tr += M[u * U + u]
                tr /= U
                if tr < 1e-300:
                    tr = 1e-300
                ridge = 1e-13 * tr
                for u in range(U):
                    grad[u] = -resid[u]
                ok = 0
                while not ok:
                    for i in range(U * U):
                        Mc[i] = M[i] + tr / U
                    for u in range(U):
                        Mc[u * U + u] += ridge
                    ok = _cholesky_solve(Mc, grad, d, U)
                    ridge *= 100.0
                    if ridge > 1e10 * tr:
                        break
                if not ok:
                    break
                acc = _maxabs(d, U)
                if acc > STEP_CAP:
                    for u in range(U):
                        d[u] *= STEP_CAP / acc
                slope = 0.0
                for u in range(U):
                    slope += grad[u] * d[u]
                t = 1.0
                accepted = 0
                while t >= MIN_STEP:
                    for u in range(U):
                        a_new[u] = a[u] + t * d[u]
                    G_new = _evaluate(cost, pu, lam, T, a_new, p_new, b_new, r_new, U, W)
                    e_new = _maxabs(r_new, U)
                    if isfinite(G_new) and (G_new >= G + ARMIJO * t * slope or
                        (e_new < 0.9 * err and G_new >= G - 1e-12 * (fabs(G) + 1.0))):
                        accepted = 1
                        break
                    t *= 0.5
                if not accepted:
                    # Sinkhorn row update: exact block ascent on the full dual
                    _row_update(cost, pu, lam, T, &b[0], a_new, U, W)
                    G_new = _evaluate(cost, pu, lam, T, a_new, p_new, b_new, r_new, U, W)
                    e_new = _maxabs(r_new, U)
                    if not (isfinite(G_new) and G_new >= G - 1e-12 * (fabs(G) + 1.0)):
                        break
                for u in range(U):
                    a[u] = a_new[u]
                    resid[u] = r_new[u]
                    for w in range(W):
                        p[u, w] = p_new[u * W + w]
                for w in range(W):
                    b[w] = b_new[w]
                G = G_new
                err = e_new
                if err < 0.5 * best:
                    best = err
                    stale = 0
                else:
                    stale += 1
    finally:
        free(buf)
    return it, err


def info_bits(const double[:, ::1] p, const double[::1] lam, const double[::1] pu):
    """``sum_w lam_w sum_u p_uw log2(p_uw / pu_u)``."""
    cdef Py_ssize_t U = p.shape[0], W = p.shape[1], u, w
    cdef double total = 0.0, col, x
    with nogil:
        for w in range(W):
            col = 0.0
            for u in range(U):
                x = p[u, w]
                if x > 0.0:
                    col += x * log2(x / pu[u])
            total += lam[w] * col
    return total
