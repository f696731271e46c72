"""Pure-numpy scaling kernels; the reference implementation for the backend.

Both loops run in the log domain with max subtraction, so exponents as large
as 1e4 / epsilon pass through without intermediate overflow. Zero weights
enter as -inf log weights and drop out of every reduction; callers guarantee
at least one positive weight per measure.
"""

from __future__ import annotations

import numpy as np


def sinkhorn_loop(cost, log_a, log_b, eps, f_scale, tol, max_iter, f, g,
                  f_hist=None, g_hist=None):
    """Alternate softmin updates on f then g in place until the sweep-to-sweep
    sup-norm change drops below ``tol``.

    ``f_scale`` is the prefactor on the f softmin: ``eps`` recovers the
    balanced update, ``eps / (1 + eps)`` the damped soft-marginal update.
    Returns ``(sweeps_used, final_residual)``; when history buffers are given,
    row k holds the state after sweep k.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    B = log_b[None, :] - cost / eps
    A = log_a[:, None] - cost / eps
    arg_f = np.empty((n, m))
    arg_g = np.empty((n, m))
    resid = np.inf
    sweeps = 0
    for k in range(max_iter):
        np.add(B, g[None, :] / eps, out=arg_f)
        row_peak = arg_f.max(axis=1)
        np.subtract(arg_f, row_peak[:, None], out=arg_f)
        np.exp(arg_f, out=arg_f)
        f_new = -f_scale * (row_peak + np.log(arg_f.sum(axis=1)))
        df = np.abs(f_new - f).max()
        f[:] = f_new

        np.add(A, f[:, None] / eps, out=arg_g)
        col_peak = arg_g.max(axis=0)
        np.subtract(arg_g, col_peak[None, :], out=arg_g)
        np.exp(arg_g, out=arg_g)
        g_new = -eps * (col_peak + np.log(arg_g.sum(axis=0)))
        dg = np.abs(g_new - g).max()
        g[:] = g_new

        if f_hist is not None:
            f_hist[k] = f
        if g_hist is not None:
            g_hist[k] = g
        sweeps = k + 1
        resid = max(df, dg)
        if resid < tol:
            break
    return sweeps, float(resid)


def symmetric_loop(cost, log_a, eps, tol, max_iter, averaged, p, p_hist=None):
    """Iterate the self-transport fixed point in place.

    The raw map can oscillate between two potentials, so ``averaged`` applies
    ``p <- (p + T(p)) / 2`` instead; this is the default everywhere.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    A = log_a[None, :] - cost / eps
    arg = np.empty((n, n))
    resid = np.inf
    iters = 0
    for k in range(max_iter):
        np.add(A, p[None, :] / eps, out=arg)
        peak = arg.max(axis=1)
        np.subtract(arg, peak[:, None], out=arg)
        np.exp(arg, out=arg)
        t = -eps * (peak + np.log(arg.sum(axis=1)))
        p_new = 0.5 * (p + t) if averaged else t
        resid = float(np.abs(p_new - p).max())
        p[:] = p_new
        if p_hist is not None:
            p_hist[k] = p
        iters = k + 1
        if resid < tol:
            break
    return iters, float(resid)
