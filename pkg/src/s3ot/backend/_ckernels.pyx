# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""C scaling kernels; a drop-in mirror of the numpy backend.

The sweep-invariant part of every softmin exponent (log weight minus cost
over eps) is exponentiated once per solve against a fixed per-row
stabilizer, so each sweep reduces to a fused multiply-accumulate scan plus
one small exp per potential entry. A row whose accumulator underflows the
stabilized range is recomputed with the exact online log-sum-exp, which
keeps the kernel correct for arbitrarily large exponent spreads; rows in
the normal range agree with the log-domain reference to rounding error.
"""

from libc.math cimport INFINITY, exp, fabs, log

import numpy as np

# below this, a stabilized accumulator may have lost real terms to underflow
cdef double _TINY_ACC = 1e-250


cdef inline double _lse_row(const double[:, ::1] base, const double[::1] shift,
                            Py_ssize_t i, Py_ssize_t m) noexcept nogil:
    """Exact log-sum-exp of base[i, :] + shift[:], online max subtraction."""
    cdef Py_ssize_t j
    cdef double peak = -INFINITY
    cdef double acc = 0.0
    cdef double e
    for j in range(m):
        e = base[i, j] + shift[j]
        if e == -INFINITY:
            continue
        if e <= peak:
            acc += exp(e - peak)
        else:
            acc = acc * exp(peak - e) + 1.0 if peak != -INFINITY else 1.0
            peak = e
    if peak == -INFINITY:
        return -INFINITY
    return peak + log(acc)


def sinkhorn_loop(cost, log_a, log_b, double eps, double f_scale, double tol,
                  int max_iter, f, g, f_hist=None, g_hist=None):
    cdef const double[:, ::1] C = np.ascontiguousarray(cost, dtype=np.float64)
    cdef const double[::1] la = np.ascontiguousarray(log_a, dtype=np.float64)
    cdef const double[::1] lb = np.ascontiguousarray(log_b, dtype=np.float64)
    cdef double[::1] fv = f
    cdef double[::1] gv = g
    cdef Py_ssize_t n = C.shape[0], m = C.shape[1]
    cdef bint want_f_hist = f_hist is not None
    cdef bint want_g_hist = g_hist is not None
    cdef double[:, ::1] fh = f_hist if want_f_hist else np.empty((0, 0))
    cdef double[:, ::1] gh = g_hist if want_g_hist else np.empty((0, 0))
    cdef double[:, ::1] B = np.empty((n, m))    # lb[j] - C/eps, f update
    cdef double[:, ::1] AT = np.empty((m, n))   # la[i] - C/eps, g update, transposed
    cdef double[::1] br = np.empty(n)           # row stabilizers of B
    cdef double[::1] ar = np.empty(m)           # row stabilizers of AT
    cdef double[:, ::1] KB = np.empty((n, m))
    cdef double[:, ::1] KAT = np.empty((m, n))
    cdef double[::1] shift = np.empty(m if m > n else n)
    cdef double[::1] unit = np.empty(m if m > n else n)
    cdef Py_ssize_t i, j, k
    cdef double peak, acc, diff, df, dg, e, lse
    cdef double resid = INFINITY
    cdef int sweeps = 0
    with nogil:
        for i in range(n):
            peak = -INFINITY
            for j in range(m):
                e = lb[j] - C[i, j] / eps
                B[i, j] = e
                if e > peak:
                    peak = e
            br[i] = peak
            for j in range(m):
                KB[i, j] = exp(B[i, j] - peak) if peak != -INFINITY else 0.0
        for j in range(m):
            peak = -INFINITY
            for i in range(n):
                e = la[i] - C[i, j] / eps
                AT[j, i] = e
                if e > peak:
                    peak = e
            ar[j] = peak
            for i in range(n):
                KAT[j, i] = exp(AT[j, i] - peak) if peak != -INFINITY else 0.0

        for k in range(max_iter):
            # f update from g
            peak = -INFINITY
            for j in range(m):
                shift[j] = gv[j] / eps
                if shift[j] > peak:
                    peak = shift[j]
            for j in range(m):
                unit[j] = exp(shift[j] - peak)
            df = 0.0
            for i in range(n):
                acc = 0.0
                for j in range(m):
                    acc += KB[i, j] * unit[j]
                if acc < _TINY_ACC:
                    lse = _lse_row(B, shift, i, m)
                else:
                    lse = br[i] + peak + log(acc)
                e = -f_scale * lse
                diff = fabs(e - fv[i])
                if diff > df:
                    df = diff
                fv[i] = e
            # g update from f
            peak = -INFINITY
            for i in range(n):
                shift[i] = fv[i] / eps
                if shift[i] > peak:
                    peak = shift[i]
            for i in range(n):
                unit[i] = exp(shift[i] - peak)
            dg = 0.0
            for j in range(m):
                acc = 0.0
                for i in range(n):
                    acc += KAT[j, i] * unit[i]
                if acc < _TINY_ACC:
                    lse = _lse_row(AT, shift, j, n)
                else:
                    lse = ar[j] + peak + log(acc)
                e = -eps * lse
                diff = fabs(e - gv[j])
                if diff > dg:
                    dg = diff
                gv[j] = e
            if want_f_hist:
                for i in range(n):
                    fh[k, i] = fv[i]
            if want_g_hist:
                for j in range(m):
                    gh[k, j] = gv[j]
            sweeps = k + 1
            resid = df if df > dg else dg
            if resid < tol:
                break
    return sweeps, float(resid)


def symmetric_loop(cost, log_a, double eps, double tol, int max_iter,
                   bint averaged, p, p_hist=None):
    cdef const double[:, ::1] C = np.ascontiguousarray(cost, dtype=np.float64)
    cdef const double[::1] la = np.ascontiguousarray(log_a, dtype=np.float64)
    cdef double[::1] pv = p
    cdef Py_ssize_t n = C.shape[0]
    cdef bint want_hist = p_hist is not None
    cdef double[:, ::1] ph = p_hist if want_hist else np.empty((0, 0))
    cdef double[:, ::1] A = np.empty((n, n))
    cdef double[::1] ar = np.empty(n)
    cdef double[:, ::1] KA = np.empty((n, n))
    cdef double[::1] t = np.empty(n)
    cdef double[::1] shift = np.empty(n)
    cdef double[::1] unit = np.empty(n)
    cdef Py_ssize_t i, j, k
    cdef double peak, acc, diff, e, lse
    cdef double resid = INFINITY
    cdef int iters = 0
    with nogil:
        for i in range(n):
            peak = -INFINITY
            for j in range(n):
                e = la[j] - C[i, j] / eps
                A[i, j] = e
                if e > peak:
                    peak = e
            ar[i] = peak
            for j in range(n):
                KA[i, j] = exp(A[i, j] - peak) if peak != -INFINITY else 0.0
        for k in range(max_iter):
            peak = -INFINITY
            for j in range(n):
                shift[j] = pv[j] / eps
                if shift[j] > peak:
                    peak = shift[j]
            for j in range(n):
                unit[j] = exp(shift[j] - peak)
            # the map reads every p entry, so stage it before updating
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += KA[i, j] * unit[j]
                if acc < _TINY_ACC:
                    lse = _lse_row(A, shift, i, n)
                else:
                    lse = ar[i] + peak + log(acc)
                t[i] = -eps * lse
            resid = 0.0
            for i in range(n):
                e = 0.5 * (pv[i] + t[i]) if averaged else t[i]
                diff = fabs(e - pv[i])
                if diff > resid:
                    resid = diff
                pv[i] = e
            if want_hist:
                for i in range(n):
                    ph[k, i] = pv[i]
            iters = k + 1
            if resid < tol:
                break
    return iters, float(resid)
