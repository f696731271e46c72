"""One-sided relaxed entropic transport and the grid-vs-points counting loss.

The source marginal constraint is replaced by a multiplicative KL penalty,
which changes exactly one thing in the scaling loop: the source potential
update is damped by eps / (1 + eps). That damping makes every sweep a
contraction with factor 1 / (1 + eps), so the solve converges from any
starting point; the target marginal stays an exact constraint (the final
column update enforces it to machine precision).

The counting loss evaluated here is the debiased transport value

    S = sum_i (1 - exp(-f_i) - p_i) a_i + sum_j g_j b_j
        + (eps^2 / 2) (mass(a) - mass(b))^2

where (f, g) solve the relaxed cross problem and p is the symmetric
self-transport potential of the source grid. The mass term is what lets the
total count move toward the annotation count; its eps^2 weight fixes the
scale at which mass errors trade off against matching errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .balanced import (
    DualPotentials,
    SolverConfig,
    _cost_array,
    _masses,
    _run_cross,
    _weights,
    symmetric_potential,
)
from .errors import EvaluateBeforeConvergenceError
from .measures import SQUARED_EUCLIDEAN, GridMeasure, PointMeasure, build_cost
from .unroll import backprop_cross, backprop_self

GRAD_UNROLLED = "unrolled"
GRAD_ENVELOPE = "envelope"
GRAD_NONE = "none"
_GRAD_KINDS = (GRAD_UNROLLED, GRAD_ENVELOPE, GRAD_NONE)


def solve_semibalanced(alpha_weights, beta_weights, cost, config: SolverConfig,
                       record_history: bool = False) -> DualPotentials:
    """Solve the relaxed-source problem; masses may differ freely."""
    a = _weights(alpha_weights, "alpha")
    b = _weights(beta_weights, "beta")
    c = _cost_array(cost)
    _masses(a, b)  # positivity only; inequality is the point here
    damped = config.epsilon / (1.0 + config.epsilon)
    return _run_cross(a, b, c, config, f_scale=damped, record_history=record_history)


def semibalanced_value(cross: DualPotentials, self_potentials: DualPotentials,
                       alpha_weights, beta_weights,
                       check_convergence: bool = True) -> float:
    """Debiased counting value at converged cross and self potentials."""
    if check_convergence and not (cross.converged and self_potentials.converged):
        raise EvaluateBeforeConvergenceError(
            "counting value requested before convergence "
            f"(cross residual {cross.final_residual:.3e}, "
            f"self residual {self_potentials.final_residual:.3e})"
        )
    a = np.asarray(alpha_weights, dtype=np.float64).ravel()
    b = np.asarray(beta_weights, dtype=np.float64).ravel()
    eps = cross.epsilon
    ma = math.fsum(a.tolist())
    mb = math.fsum(b.tolist())
    source_term = math.fsum(((1.0 - np.exp(-cross.f) - self_potentials.p) * a).tolist())
    target_term = math.fsum((cross.g * b).tolist())
    return source_term + target_term + 0.5 * eps * eps * (ma - mb) ** 2


def semibalanced_dual_objective(f, g, alpha_weights, beta_weights, cost,
                                epsilon: float) -> float:
    """Relaxed dual at arbitrary potentials; each sweep update increases it.

    D = sum (1 - e^{-f_i}) a_i + sum g_j b_j
        - eps * sum_ij (exp((f_i + g_j - c_ij) / eps) - 1) a_i b_j
    """
    f = np.asarray(f, dtype=np.float64).ravel()
    g = np.asarray(g, dtype=np.float64).ravel()
    a = np.asarray(alpha_weights, dtype=np.float64).ravel()
    b = np.asarray(beta_weights, dtype=np.float64).ravel()
    c = _cost_array(cost)
    expo = (f[:, None] + g[None, :] - c) / epsilon
    coupling = (np.exp(expo) - 1.0) * np.outer(a, b)
    return (
        math.fsum(((1.0 - np.exp(-f)) * a).tolist())
        + math.fsum((g * b).tolist())
        - epsilon * math.fsum(coupling.ravel().tolist())
    )


def semibalanced_grad_alpha(cross: DualPotentials, self_potentials: DualPotentials,
                            alpha_weights, beta_weights) -> np.ndarray:
    """First-order value sensitivity holding the potentials fixed.

    Component i is (1 - exp(-f_i)) - p_i + eps^2 (mass(a) - mass(b)). Exact
    when the potentials fully absorb the weight perturbation; the recorded
    sweep history gives the remainder (see ``counting_loss``).
    """
    a = np.asarray(alpha_weights, dtype=np.float64).ravel()
    b = np.asarray(beta_weights, dtype=np.float64).ravel()
    eps = cross.epsilon
    ma = math.fsum(a.tolist())
    mb = math.fsum(b.tolist())
    return (1.0 - np.exp(-cross.f)) - self_potentials.p + eps * eps * (ma - mb)


@dataclass(frozen=True)
class CountingLossResult:
    """Counting loss value, gradient in grid shape, and solve diagnostics."""

    value: float
    gradient: Optional[np.ndarray]
    mass_source: float
    mass_target: float
    cross_iterations: int
    self_iterations: int
    converged: bool
    cross: Optional[DualPotentials] = None
    self_potentials: Optional[DualPotentials] = None


def counting_loss(grid: GridMeasure, points: PointMeasure, config: SolverConfig,
                  gradient: str = GRAD_UNROLLED, unroll_cap: int = 400,
                  cost_kind: str = SQUARED_EUCLIDEAN,
                  costs: Optional[tuple] = None) -> CountingLossResult:
    """Debiased counting loss of a density grid against annotated points.

    Parameters
    ----------
    grid : predicted density; every cell participates, zeros included.
    points : annotations. An empty set switches to the direct penalty
        ``0.5 * sum(values^2)`` with gradient ``values``, no transport solve.
    config : shared solver knobs; ``config.epsilon`` sets the blur scale.
    gradient : "unrolled" walks the recorded sweeps backwards (authoritative),
        "envelope" keeps only the fixed-potential term, "none" skips it.
    unroll_cap : most-recent sweeps retained in the backward walk.
    costs : optional precomputed ``(cross, self)`` cost matrices, for callers
        evaluating many grids on one support.

    Non-convergence does not raise; it is reported through ``converged`` and
    the value/gradient come from the last iterate.
    """
    if gradient not in _GRAD_KINDS:
        raise ValueError(f"gradient must be one of {_GRAD_KINDS}, got {gradient!r}")
    values = np.asarray(grid.values, dtype=np.float64)
    a = values.ravel()
    if len(points) == 0:
        value = 0.5 * math.fsum((a * a).tolist())
        grad = values.copy() if gradient != GRAD_NONE else None
        return CountingLossResult(
            value=value, gradient=grad,
            mass_source=math.fsum(a.tolist()), mass_target=0.0,
            cross_iterations=0, self_iterations=0, converged=True,
        )
    b = points.weights
    if costs is not None:
        cost_cross, cost_self = (_cost_array(costs[0]), _cost_array(costs[1]))
    else:
        cost_cross, cost_self = grid_point_costs(grid, points, cost_kind)
    need_history = gradient == GRAD_UNROLLED
    cross = solve_semibalanced(a, b, cost_cross, config, record_history=need_history)
    self_pot = symmetric_potential(a, cost_self, config, record_history=need_history)
    value = semibalanced_value(cross, self_pot, a, b, check_convergence=False)
    grad = None
    if gradient != GRAD_NONE:
        grad_flat = semibalanced_grad_alpha(cross, self_pot, a, b)
        if gradient == GRAD_UNROLLED:
            eps = config.epsilon
            df = a * np.exp(-cross.f)
            dg = np.asarray(b, dtype=np.float64)
            da_cross, _ = backprop_cross(
                cost_cross, a, b, eps, eps / (1.0 + eps),
                cross.f_history, cross.g_history, df, dg, cap=unroll_cap,
            )
            da_self = backprop_self(
                cost_self, a, eps, self_pot.p_history, dp=-a,
                averaged=config.symmetric_averaging, cap=unroll_cap,
            )
            grad_flat = grad_flat + da_cross + da_self
        grad = grad_flat.reshape(values.shape)
    return CountingLossResult(
        value=value,
        gradient=grad,
        mass_source=math.fsum(a.tolist()),
        mass_target=math.fsum(np.asarray(b, dtype=np.float64).tolist()),
        cross_iterations=cross.iterations_used,
        self_iterations=self_pot.iterations_used,
        converged=cross.converged and self_pot.converged,
        cross=cross,
        self_potentials=self_pot,
    )


def grid_point_costs(grid: GridMeasure, points: PointMeasure,
                     cost_kind: str = SQUARED_EUCLIDEAN):
    """Cross and self cost matrices for a grid support, shared normalization.

    Coordinates are divided by the larger physical grid extent before the
    metric is applied, so squared costs between in-scene locations live in
    [0, 2] regardless of resolution.
    """
    norm = max(grid.extent)
    centers = grid.cell_centers()
    cross = build_cost(centers, points.xy, kind=cost_kind, normalization=norm)
    self_c = build_cost(centers, centers, kind=cost_kind, normalization=norm)
    return np.asarray(cross.costs), np.asarray(self_c.costs)
