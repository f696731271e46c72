"""Cross-resolution agreement between density predictions.

A fine grid is compared against an independently predicted coarse grid by
sum-pooling the fine one down to the coarse support (block sums keep mass),
then measuring

    L = S_eps(coarse / m_c, pooled / m_p) + 0.5 * (m_c - m_p)^2

where S_eps is the debiased balanced divergence on unit-normalized copies
and the second term compares raw masses. Normalizing inside the divergence
keeps the balanced solver's equal-mass requirement satisfied no matter how
far apart the predictions are; the mass gap is penalized separately.

If either side has zero mass the divergence is undefined and the loss falls
back to the pure mass term, flagged on the result.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .balanced import (
    SolverConfig,
    _cost_array,
    solve_balanced,
    symmetric_potential,
)
from .measures import SQUARED_EUCLIDEAN, GridMeasure, build_cost
from .semibalanced import GRAD_NONE, GRAD_UNROLLED, _GRAD_KINDS
from .unroll import backprop_cross, backprop_self

SUM_POOL = "sum_pool"


@dataclass(frozen=True)
class ScaleTransform:
    """Resolution change by an integer block factor.

    ``factor`` is the linear shrink, the reciprocal of an integer k; each
    output cell sums a k-by-k block and is k times wider physically.
    """

    factor: float
    method: str = SUM_POOL

    def __post_init__(self):
        if self.method != SUM_POOL:
            raise ValueError(f"unknown downscale method {self.method!r}")
        f = float(self.factor)
        if not (0.0 < f <= 1.0):
            raise ValueError(f"factor must be in (0, 1], got {f!r}")
        k = 1.0 / f
        if abs(k - round(k)) > 1e-9:
            raise ValueError(f"factor must be the reciprocal of an integer, got {f!r}")

    @property
    def block(self) -> int:
        return round(1.0 / float(self.factor))


def downscale(grid: GridMeasure, transform: ScaleTransform) -> GridMeasure:
    """Sum-pool a grid by the transform's block factor, preserving mass.

    Dimensions that do not divide evenly are zero-padded on the bottom and
    right edges first (a warning is issued, since padded cells dilute the
    physical alignment of the coarse support).
    """
    k = transform.block
    if k == 1:
        return GridMeasure(np.array(grid.values, copy=True), cell_size=grid.cell_size)
    v = np.asarray(grid.values, dtype=np.float64)
    rows, cols = v.shape
    pad_r = (-rows) % k
    pad_c = (-cols) % k
    if pad_r or pad_c:
        warnings.warn(
            f"grid shape ({rows}, {cols}) is not divisible by block {k}; "
            f"zero-padding to ({rows + pad_r}, {cols + pad_c})",
            stacklevel=2,
        )
        v = np.pad(v, ((0, pad_r), (0, pad_c)))
    pooled = v.reshape(v.shape[0] // k, k, v.shape[1] // k, k).sum(axis=(1, 3))
    return GridMeasure(pooled, cell_size=grid.cell_size * k)


def pool_backward(grad_pooled: np.ndarray, transform: ScaleTransform,
                  fine_shape: tuple) -> np.ndarray:
    """Adjoint of ``downscale``: broadcast each coarse adjoint over its block."""
    k = transform.block
    g = np.asarray(grad_pooled, dtype=np.float64)
    if k == 1:
        return g[: fine_shape[0], : fine_shape[1]].copy()
    expanded = np.kron(g, np.ones((k, k)))
    return expanded[: fine_shape[0], : fine_shape[1]].copy()


@dataclass(frozen=True)
class ScaleLossResult:
    """Scale agreement value with gradients on both resolutions."""

    value: float
    grad_coarse: Optional[np.ndarray]
    grad_fine: Optional[np.ndarray]
    mass_coarse: float
    mass_pooled: float
    divergence: float
    iterations: int
    converged: bool
    fallback: bool


def _divergence_with_grads(u, v, cost, config, gradient, unroll_cap):
    """Debiased divergence of two unit-mass grids on one shared support.

    Returns (value, dS/du, dS/dv, converged). The self terms reuse the same
    cost matrix since both measures live on identical cell centers.
    """
    need_history = gradient == GRAD_UNROLLED
    cross = solve_balanced(u, v, cost, config, record_history=need_history)
    self_u = symmetric_potential(u, cost, config, record_history=need_history)
    self_v = symmetric_potential(v, cost, config, record_history=need_history)
    value = (
        math.fsum((cross.f * u).tolist()) + math.fsum((cross.g * v).tolist())
        - math.fsum((self_u.p * u).tolist()) - math.fsum((self_v.p * v).tolist())
    )
    converged = cross.converged and self_u.converged and self_v.converged
    iters = max(cross.iterations_used, self_u.iterations_used, self_v.iterations_used)
    if gradient == GRAD_NONE:
        return value, None, None, converged, iters
    du = cross.f - self_u.p
    dv = cross.g - self_v.p
    if gradient == GRAD_UNROLLED:
        eps = config.epsilon
        da, db = backprop_cross(cost, u, v, eps, eps, cross.f_history,
                                cross.g_history, df=u, dg=v, cap=unroll_cap,
                                need_db=True)
        du = du + da + backprop_self(cost, u, eps, self_u.p_history, dp=-u,
                                     averaged=config.symmetric_averaging, cap=unroll_cap)
        dv = dv + db + backprop_self(cost, v, eps, self_v.p_history, dp=-v,
                                     averaged=config.symmetric_averaging, cap=unroll_cap)
    return value, du, dv, converged, iters


def _normalize_chain(grad_unit: np.ndarray, unit: np.ndarray, mass: float) -> np.ndarray:
    # d/dx of F(x / m(x)): project out the mass mode, then rescale
    inner = math.fsum((grad_unit * unit).tolist())
    return (grad_unit - inner) / mass


def scale_consistency_loss(coarse: GridMeasure, fine: GridMeasure,
                           transform: ScaleTransform, config: SolverConfig,
                           gradient: str = GRAD_UNROLLED, unroll_cap: int = 400,
                           cost: Optional[np.ndarray] = None,
                           cost_kind: str = SQUARED_EUCLIDEAN) -> ScaleLossResult:
    """Agreement loss between a coarse prediction and a pooled fine one.

    ``fine`` is pooled by ``transform`` and must then match ``coarse`` in
    shape and cell size. Gradients are returned in each grid's own shape;
    the fine gradient includes the pooling adjoint. ``cost`` optionally
    supplies the precomputed coarse-support cost matrix.
    """
    if gradient not in _GRAD_KINDS:
        raise ValueError(f"gradient must be one of {_GRAD_KINDS}, got {gradient!r}")
    pooled = downscale(fine, transform)
    if pooled.values.shape != coarse.values.shape:
        raise ValueError(
            f"pooled fine grid {pooled.values.shape} does not match "
            f"coarse grid {coarse.values.shape}"
        )
    if abs(pooled.cell_size - coarse.cell_size) > 1e-9 * coarse.cell_size:
        raise ValueError(
            f"pooled cell size {pooled.cell_size!r} does not match "
            f"coarse cell size {coarse.cell_size!r}"
        )
    c_vals = np.asarray(coarse.values, dtype=np.float64)
    p_vals = np.asarray(pooled.values, dtype=np.float64)
    m_c = math.fsum(c_vals.ravel().tolist())
    m_p = math.fsum(p_vals.ravel().tolist())
    gap = m_c - m_p
    want_grad = gradient != GRAD_NONE

    if m_c <= 0.0 or m_p <= 0.0:
        warnings.warn(
            "scale agreement fell back to the mass term only "
            f"(coarse mass {m_c:.3e}, pooled mass {m_p:.3e})",
            stacklevel=2,
        )
        grad_c = np.full(c_vals.shape, gap) if want_grad else None
        grad_f = (
            pool_backward(np.full(p_vals.shape, -gap), transform, fine.values.shape)
            if want_grad else None
        )
        return ScaleLossResult(
            value=0.5 * gap * gap, grad_coarse=grad_c, grad_fine=grad_f,
            mass_coarse=m_c, mass_pooled=m_p, divergence=0.0,
            iterations=0, converged=True, fallback=True,
        )

    if cost is None:
        centers = coarse.cell_centers()
        cost = np.asarray(build_cost(centers, centers, kind=cost_kind,
                                     normalization=max(coarse.extent)).costs)
    else:
        cost = _cost_array(cost)
    u = c_vals.ravel() / m_c
    v = p_vals.ravel() / m_p
    div, du, dv, converged, iters = _divergence_with_grads(u, v, cost, config,
                                                           gradient, unroll_cap)
    value = div + 0.5 * gap * gap
    grad_c = grad_f = None
    if want_grad:
        grad_c = (_normalize_chain(du, u, m_c) + gap).reshape(c_vals.shape)
        grad_pooled = (_normalize_chain(dv, v, m_p) - gap).reshape(p_vals.shape)
        grad_f = pool_backward(grad_pooled, transform, fine.values.shape)
    return ScaleLossResult(
        value=value, grad_coarse=grad_c, grad_fine=grad_f,
        mass_coarse=m_c, mass_pooled=m_p, divergence=div,
        iterations=iters, converged=converged, fallback=False,
    )
