"""Reverse-mode differentiation through recorded scaling sweeps.

The forward solvers store the potential state after every sweep. These
routines walk that history backwards, applying the exact adjoint of each
softmin update, and accumulate gradients with respect to the atom weights.
Walking a fixed number of most-recent sweeps (the cap) truncates the chain;
past convergence the per-sweep Jacobians are contractions, so the dropped
tail is negligible.

Adjoint algebra, with K1_ij = exp((f_i + g_j - c_ij) / eps) evaluated at the
sweep's own state:

    d a_i  += -eps * sum_j K1_ij dg_j          (g-update, weight path)
    d f_i  +=  -a_i * sum_j K1_ij dg_j         (g-update, potential path)

and with Vb_ij = exp((g_j - c_ij) / eps + f_i / s) at the pre-update g:

    d b_j  +=   -s * sum_i Vb_ij df_i
    d g_j  += -(s / eps) * b_j * sum_i Vb_ij df_i

The symmetric self map T(p)_i = -eps ln sum_k exp((p_k - c_ik)/eps) a_k uses
Ks_ik = exp((p_k + T_i - c_ik) / eps); averaging halves both paths.
"""

from __future__ import annotations

import numpy as np

_CLIP = 700.0  # keep exp() finite; converged states never get near this


def _exp_clipped(expo: np.ndarray) -> np.ndarray:
    np.clip(expo, None, _CLIP, out=expo)
    return np.exp(expo, out=expo)


def backprop_cross(cost, a, b, eps, f_scale, f_history, g_history, df, dg,
                   cap: int = 400, need_db: bool = False):
    """Pull value adjoints (df, dg) back through a recorded cross solve.

    ``f_history[k]`` / ``g_history[k]`` hold the state after sweep ``k + 1``.
    Returns ``(da, db)``; ``db`` is None unless requested.
    """
    c = np.asarray(cost, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    sweeps = f_history.shape[0]
    if g_history.shape[0] != sweeps:
        raise ValueError("f and g histories disagree on sweep count")
    da = np.zeros(len(a))
    db = np.zeros(len(b)) if need_db else None
    df = np.array(df, dtype=np.float64, copy=True)
    dg = np.array(dg, dtype=np.float64, copy=True)
    first = max(0, sweeps - int(cap))
    for k in range(sweeps - 1, first - 1, -1):
        f_k = f_history[k]
        g_k = g_history[k]
        g_prev = g_history[k - 1] if k > 0 else np.zeros(len(b))
        # g-update adjoint at (f_k, g_k)
        t = _exp_clipped((f_k[:, None] + g_k[None, :] - c) / eps) @ dg
        da -= eps * t
        df -= a * t
        # f-update adjoint at (g_prev, f_k)
        u = df @ _exp_clipped((g_prev[None, :] - c) / eps + (f_k / f_scale)[:, None])
        if need_db:
            db -= f_scale * u
        dg = -(f_scale / eps) * (b * u)
        df = np.zeros(len(a))
    return da, db


def backprop_self(cost_self, a, eps, p_history, dp, averaged: bool = True,
                  cap: int = 400) -> np.ndarray:
    """Pull a value adjoint dp back through a recorded symmetric solve."""
    c = np.asarray(cost_self, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64).ravel()
    iters = p_history.shape[0]
    da = np.zeros(len(a))
    dp = np.array(dp, dtype=np.float64, copy=True)
    first = max(0, iters - int(cap))
    for l in range(iters - 1, first - 1, -1):
        p_l = p_history[l]
        p_prev = p_history[l - 1] if l > 0 else np.zeros(len(a))
        t_l = 2.0 * p_l - p_prev if averaged else p_l
        # Ks^T dp, with Ks_ik = exp((p_prev_k + t_l_i - c_ik) / eps)
        t = dp @ _exp_clipped((p_prev[None, :] + t_l[:, None] - c) / eps)
        if averaged:
            da -= 0.5 * eps * t
            dp = 0.5 * dp - 0.5 * (a * t)
        else:
            da -= eps * t
            dp = -(a * t)
    return da
