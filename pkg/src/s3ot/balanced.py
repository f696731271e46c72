"""Balanced entropic transport in the log domain.

The solver alternates exact softmin updates on the two dual potentials:

    f_i <- -eps * ln sum_j exp((g_j - c_ij) / eps) * b_j
    g_j <- -eps * ln sum_i exp((f_i - c_ij) / eps) * a_i

from zero initialization. Each update is an exact coordinate-block maximum of
the dual, so the dual objective climbs monotonically; at the fixed point the
simplified transport value is exactly ``sum f a + sum g b``, which is what
``balanced_value`` reports. The debiased divergence subtracts the two
self-transport terms ``sum p a`` obtained from the symmetric fixed point

    p_i = -eps * ln sum_k exp((p_k - c_ik) / eps) * a_k

reached via averaged updates ``p <- (p + T(p)) / 2`` (the raw map can
oscillate between a pair of potentials).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backend
from .errors import (
    EmptyMeasureError,
    EvaluateBeforeConvergenceError,
    MassMismatchError,
    NotConvergedError,
    OverflowInExponentError,
)
from .measures import CostMatrix

_EXP_LIMIT = 709.0  # float64 exp overflow threshold


@dataclass(frozen=True)
class SolverConfig:
    """Shared knobs for every scaling solve.

    ``tolerance`` bounds the sup-norm potential change per sweep; 1e-9 is the
    test-grade default, 1e-6 is plenty inside training loops. Solves stop at
    ``max_iterations`` without raising; callers read ``converged``.
    """

    epsilon: float
    tolerance: float = 1e-9
    max_iterations: int = 500
    symmetric_averaging: bool = True

    def __post_init__(self):
        if not (float(self.epsilon) > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be a positive real, got {self.epsilon!r}")
        if not (float(self.tolerance) > 0):
            raise ValueError(f"tolerance must be positive, got {self.tolerance!r}")
        if int(self.max_iterations) < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations!r}")


@dataclass(frozen=True)
class DualPotentials:
    """Converged (or last-iterate) potentials plus solve diagnostics.

    ``f``/``g`` are present for cross solves, ``p`` for symmetric self
    solves. History rows (state after each sweep) are kept only when the
    solve was asked to record them; gradient code replays them.
    """

    epsilon: float
    iterations_used: int
    final_residual: float
    converged: bool
    f: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None
    f_history: Optional[np.ndarray] = None
    g_history: Optional[np.ndarray] = None
    p_history: Optional[np.ndarray] = None


@dataclass(frozen=True)
class TransportPlan:
    """A recovered primal plan with its marginal defects."""

    entries: np.ndarray
    row_marginal_residual: float
    col_marginal_residual: float


def _cost_array(cost) -> np.ndarray:
    if isinstance(cost, CostMatrix):
        return np.asarray(cost.costs, dtype=np.float64)
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {c.shape}")
    return c


def _weights(w, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(w, dtype=np.float64).ravel())
    if arr.size == 0:
        raise EmptyMeasureError(f"{name} has no atoms")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"{name} weights must be finite and nonnegative")
    return arr


def _log_weights(w: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(w)


def _masses(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    ma = math.fsum(a.tolist())
    mb = math.fsum(b.tolist())
    if ma <= 0:
        raise EmptyMeasureError("source measure has zero mass")
    if mb <= 0:
        raise EmptyMeasureError("target measure has zero mass")
    return ma, mb


def _run_cross(a, b, cost, config: SolverConfig, f_scale: float, record_history: bool,
               f0=None, g0=None):
    n, m = len(a), len(b)
    if cost.shape != (n, m):
        raise ValueError(f"cost shape {cost.shape} does not match weights ({n}, {m})")
    f = np.zeros(n) if f0 is None else np.array(f0, dtype=np.float64)
    g = np.zeros(m) if g0 is None else np.array(g0, dtype=np.float64)
    f_hist = np.empty((config.max_iterations, n)) if record_history else None
    g_hist = np.empty((config.max_iterations, m)) if record_history else None
    kern = backend.active()
    iters, resid = kern.sinkhorn_loop(
        np.ascontiguousarray(cost), _log_weights(a), _log_weights(b),
        float(config.epsilon), float(f_scale), float(config.tolerance),
        int(config.max_iterations), f, g, f_hist, g_hist,
    )
    return DualPotentials(
        epsilon=float(config.epsilon),
        iterations_used=iters,
        final_residual=resid,
        converged=resid < config.tolerance,
        f=f,
        g=g,
        f_history=None if f_hist is None else f_hist[:iters],
        g_history=None if g_hist is None else g_hist[:iters],
    )


def solve_balanced(alpha_weights, beta_weights, cost, config: SolverConfig,
                   record_history: bool = False) -> DualPotentials:
    """Solve the equal-mass problem; masses must agree within 1e-9 relative."""
    a = _weights(alpha_weights, "alpha")
    b = _weights(beta_weights, "beta")
    c = _cost_array(cost)
    ma, mb = _masses(a, b)
    if abs(ma - mb) > 1e-9 * max(ma, mb):
        raise MassMismatchError(ma, mb, context="solve_balanced")
    return _run_cross(a, b, c, config, f_scale=config.epsilon, record_history=record_history)


def balanced_value(potentials: DualPotentials, alpha_weights, beta_weights,
                   check_convergence: bool = True) -> float:
    """Transport value ``sum f a + sum g b`` at the converged potentials."""
    if check_convergence and not potentials.converged:
        raise EvaluateBeforeConvergenceError(
            f"balanced value requested at residual {potentials.final_residual:.3e} "
            f"after {potentials.iterations_used} sweeps; solve did not converge"
        )
    a = np.asarray(alpha_weights, dtype=np.float64).ravel()
    b = np.asarray(beta_weights, dtype=np.float64).ravel()
    return math.fsum((potentials.f * a).tolist()) + math.fsum((potentials.g * b).tolist())


def symmetric_potential(alpha_weights, cost_self, config: SolverConfig,
                        record_history: bool = False) -> DualPotentials:
    """Self-transport potential of one measure against itself."""
    a = _weights(alpha_weights, "alpha")
    c = _cost_array(cost_self)
    n = len(a)
    if c.shape != (n, n):
        raise ValueError(f"self cost must be ({n}, {n}), got {c.shape}")
    if not np.allclose(c, c.T, rtol=0.0, atol=1e-12):
        raise ValueError("self cost matrix must be symmetric")
    if math.fsum(a.tolist()) <= 0:
        raise EmptyMeasureError("measure has zero mass")
    p = np.zeros(n)
    p_hist = np.empty((config.max_iterations, n)) if record_history else None
    kern = backend.active()
    iters, resid = kern.symmetric_loop(
        np.ascontiguousarray(c), _log_weights(a), float(config.epsilon),
        float(config.tolerance), int(config.max_iterations),
        bool(config.symmetric_averaging), p, p_hist,
    )
    return DualPotentials(
        epsilon=float(config.epsilon),
        iterations_used=iters,
        final_residual=resid,
        converged=resid < config.tolerance,
        p=p,
        p_history=None if p_hist is None else p_hist[:iters],
    )


def self_value(self_potentials: DualPotentials, alpha_weights,
               check_convergence: bool = True) -> float:
    """Half the self-transport value: ``sum p a`` at the symmetric potential."""
    if check_convergence and not self_potentials.converged:
        raise EvaluateBeforeConvergenceError(
            f"self value requested at residual {self_potentials.final_residual:.3e}; "
            "symmetric solve did not converge"
        )
    a = np.asarray(alpha_weights, dtype=np.float64).ravel()
    return math.fsum((self_potentials.p * a).tolist())


def sinkhorn_divergence(alpha_weights, beta_weights, cost_cross, cost_aa, cost_bb,
                        config: SolverConfig) -> float:
    """Debiased divergence: cross value minus both self-transport terms.

    Nonnegative for equal-mass inputs and zero (to solver accuracy) when the
    two measures coincide.
    """
    a = _weights(alpha_weights, "alpha")
    b = _weights(beta_weights, "beta")
    self_a = symmetric_potential(a, cost_aa, config)
    self_b = symmetric_potential(b, cost_bb, config)
    for part in (self_a, self_b):
        if not part.converged:
            raise NotConvergedError(part.iterations_used, part.final_residual, config.tolerance)
    ma, mb = _masses(a, b)
    if abs(ma - mb) > 1e-9 * max(ma, mb):
        raise MassMismatchError(ma, mb, context="sinkhorn_divergence")
    # warm-start the cross solve from the self potentials: for identical
    # measures the fixed point is exactly f = g = p, which sidesteps the
    # slowly decaying translation mode of the zero start
    cross = _run_cross(a, b, _cost_array(cost_cross), config,
                       f_scale=config.epsilon, record_history=False,
                       f0=self_a.p, g0=self_b.p)
    if not cross.converged:
        raise NotConvergedError(cross.iterations_used, cross.final_residual, config.tolerance)
    return (
        balanced_value(cross, a, b)
        - self_value(self_a, a)
        - self_value(self_b, b)
    )


def plan_from_potentials(potentials: DualPotentials, alpha_weights, beta_weights,
                         cost, config: SolverConfig) -> TransportPlan:
    """Exponentiate converged potentials back into a primal plan.

    Entries are ``exp((f_i + g_j - c_ij) / eps) * a_i * b_j``. Exponent
    overflow cannot occur post-convergence; it is still checked and reported
    with the offending magnitude.
    """
    if not potentials.converged:
        raise EvaluateBeforeConvergenceError(
            "plan recovery requires a converged solve; residual "
            f"{potentials.final_residual:.3e} after {potentials.iterations_used} sweeps"
        )
    a = _weights(alpha_weights, "alpha")
    b = _weights(beta_weights, "beta")
    c = _cost_array(cost)
    la = _log_weights(a)
    lb = _log_weights(b)
    expo = (potentials.f[:, None] + potentials.g[None, :] - c) / config.epsilon
    expo = expo + la[:, None] + lb[None, :]
    peak = float(expo.max())
    if peak > _EXP_LIMIT:
        raise OverflowInExponentError(peak)
    entries = np.exp(expo)
    row_res = float(np.abs(entries.sum(axis=1) - a).max())
    col_res = float(np.abs(entries.sum(axis=0) - b).max())
    return TransportPlan(entries=entries, row_marginal_residual=row_res,
                         col_marginal_residual=col_res)
