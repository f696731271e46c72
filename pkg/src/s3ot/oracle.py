"""Slow, independent reference evaluators used to mint and check expectations.

Nothing here shares code with the production solvers: the exact transport
value comes from a dense two-phase simplex on the transportation polytope,
and the entropic value comes from projected exponentiated-gradient descent
on the plan itself. Tests compare the fast dual-domain implementations
against these primal-domain answers.

Both routines are written for desk-scale instances (at most 64 plan entries
for the simplex) and favor auditability over speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MassMismatchError, NotConvergedError
from .generators import kl_penalty
from .measures import CostMatrix

_PIVOT_TOL = 1e-11
_REDUCED_COST_TOL = 1e-11


def _as_cost_array(cost) -> np.ndarray:
    if isinstance(cost, CostMatrix):
        return np.asarray(cost.costs, dtype=np.float64)
    return np.asarray(cost, dtype=np.float64)


# ---------------------------------------------------------------------------
# Exact transportation LP via two-phase dense simplex with Bland's rule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExactTransportResult:
    value: float
    plan: np.ndarray
    pivots: int


def _bland_simplex(tableau: np.ndarray, basis: list[int], costs: np.ndarray,
                   n_cols: int) -> int:
    """Minimize costs[x] over the tableau in place; returns pivot count.

    Entering column: smallest index with reduced cost below -tol. Leaving
    row: minimum ratio, ties broken by smallest basic variable index. The
    pair makes the method cycle-proof.
    """
    rows = tableau.shape[0]
    pivots = 0
    while True:
        duals_cost = costs[basis]  # c_B
        entering = -1
        for j in range(n_cols):
            if j in basis:
                continue
            reduced = costs[j] - float(duals_cost @ tableau[:, j])
            if reduced < -_REDUCED_COST_TOL:
                entering = j
                break
        if entering < 0:
            return pivots
        best_ratio = math.inf
        leaving = -1
        for i in range(rows):
            coef = tableau[i, entering]
            if coef > _PIVOT_TOL:
                ratio = tableau[i, -1] / coef
                if ratio < best_ratio - 1e-13 or (
                    abs(ratio - best_ratio) <= 1e-13
                    and leaving >= 0
                    and basis[i] < basis[leaving]
                ):
                    best_ratio = ratio
                    leaving = i
        if leaving < 0:
            raise ArithmeticError("unbounded transportation LP (inconsistent input)")
        pivot = tableau[leaving, entering]
        tableau[leaving] /= pivot
        for i in range(rows):
            if i != leaving and tableau[i, entering] != 0.0:
                tableau[i] -= tableau[i, entering] * tableau[leaving]
        basis[leaving] = entering
        pivots += 1
        if pivots > 100000:
            raise ArithmeticError("simplex pivot budget exhausted")


def exact_ot_lp(alpha_weights, beta_weights, cost) -> ExactTransportResult:
    """Exact (unregularized) transport value between equal-mass weight vectors.

    Solves the transportation LP with both marginals as equality constraints,
    dropping the one redundant row. Instances are capped at 64 plan entries.
    """
    a = np.asarray(alpha_weights, dtype=np.float64).ravel()
    b = np.asarray(beta_weights, dtype=np.float64).ravel()
    c = _as_cost_array(cost)
    n, m = len(a), len(b)
    if c.shape != (n, m):
        raise ValueError(f"cost shape {c.shape} does not match weights ({n}, {m})")
    if n * m > 64:
        raise ValueError(f"instance too large for the dense simplex: {n}x{m} > 64 entries")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("weights must be nonnegative")
    ma = math.fsum(a.tolist())
    mb = math.fsum(b.tolist())
    if ma <= 0 or mb <= 0:
        raise ValueError("both measures need positive mass")
    if abs(ma - mb) > 1e-9 * max(ma, mb):
        raise MassMismatchError(ma, mb, context="exact_ot_lp")

    # Equality constraints: n row sums plus the first m-1 column sums.
    n_rows = n + m - 1
    n_struct = n * m
    A = np.zeros((n_rows, n_struct))
    rhs = np.empty(n_rows)
    for i in range(n):
        A[i, i * m : (i + 1) * m] = 1.0
        rhs[i] = a[i]
    for j in range(m - 1):
        A[n + j, j::m] = 1.0
        rhs[n + j] = b[j]

    # Phase 1: artificial basis.
    tableau = np.hstack([A, np.eye(n_rows), rhs[:, None]])
    basis = list(range(n_struct, n_struct + n_rows))
    phase1_costs = np.concatenate([np.zeros(n_struct), np.ones(n_rows), [0.0]])
    pivots = _bland_simplex(tableau, basis, phase1_costs, n_struct + n_rows)
    infeas = math.fsum(tableau[i, -1] for i in range(n_rows) if basis[i] >= n_struct)
    if infeas > 1e-8 * max(1.0, ma):
        raise ArithmeticError(f"phase 1 left infeasibility {infeas:.3e}")

    # Pivot any zero-level artificials out on structural columns; drop rows
    # whose structural part vanished (redundant constraints).
    keep = []
    for i in range(n_rows):
        if basis[i] < n_struct:
            keep.append(i)
            continue
        swapped = False
        for j in range(n_struct):
            if abs(tableau[i, j]) > _PIVOT_TOL and j not in basis:
                pivot = tableau[i, j]
                tableau[i] /= pivot
                for k in range(n_rows):
                    if k != i and tableau[k, j] != 0.0:
                        tableau[k] -= tableau[k, j] * tableau[i]
                basis[i] = j
                swapped = True
                break
        if swapped:
            keep.append(i)
    if len(keep) < n_rows:
        tableau = tableau[keep]
        basis = [basis[i] for i in keep]

    # Phase 2 on the structural columns only.
    phase2_costs = np.concatenate([c.ravel(), np.full(n_rows, 0.0), [0.0]])
    # blocking artificials: give them a prohibitive cost so they never re-enter
    phase2_costs[n_struct : n_struct + n_rows] = 1e18
    pivots += _bland_simplex(tableau, basis, phase2_costs, n_struct)

    plan = np.zeros(n_struct)
    for i, var in enumerate(basis):
        if var < n_struct:
            plan[var] = max(tableau[i, -1], 0.0)
    plan = plan.reshape(n, m)
    value = math.fsum((c.ravel() * plan.ravel()).tolist())
    return ExactTransportResult(value=value, plan=plan, pivots=pivots)


# ---------------------------------------------------------------------------
# Entropic primal by projected exponentiated-gradient descent
# ---------------------------------------------------------------------------

SIMPLIFIED = "simplified"
FULL_KL = "full_kl"
_CONVENTIONS = (SIMPLIFIED, FULL_KL)


@dataclass(frozen=True)
class EntropicPrimalResult:
    """Both convention values for the entropic primal at its minimizer.

    ``value`` repeats whichever convention was requested. ``simplified``
    integrates ``pi * ln(pi / (a x b))`` alone; ``full_kl`` adds the mass
    correction ``- m(pi) + m(a) m(b)``. Under a hard column constraint both
    share the same minimizing plan, so one descent serves both reports.
    """

    value: float
    simplified: float
    full_kl: float
    plan: np.ndarray
    steps: int
    residual: float
    kl_row_penalty: float


def _logsumexp(v: np.ndarray) -> float:
    peak = v.max()
    if peak == -math.inf:
        return -math.inf
    return peak + math.log(np.exp(v - peak).sum())


def entropic_primal_bruteforce(
    alpha_weights,
    beta_weights,
    cost,
    epsilon: float,
    convention: str = SIMPLIFIED,
    semibalanced: bool = False,
    tol: float = 1e-10,
    max_steps: int = 1_000_000,
) -> EntropicPrimalResult:
    """Minimize the entropic primal directly over the plan, in log domain.

    Each step multiplies the plan by ``exp(-eta * gradient)`` and reprojects:
    columns are renormalized to the target weights, and in the balanced mode
    rows are renormalized to the source weights as well (the hard-constraint
    limit of the generator penalty). Stops when the stationarity residual
    ``max |pi * (grad - multipliers)|`` drops to ``tol``.
    """
    if convention not in _CONVENTIONS:
        raise ValueError(f"convention must be one of {_CONVENTIONS}, got {convention!r}")
    a = np.asarray(alpha_weights, dtype=np.float64).ravel()
    b = np.asarray(beta_weights, dtype=np.float64).ravel()
    c = _as_cost_array(cost)
    n, m = len(a), len(b)
    if c.shape != (n, m):
        raise ValueError(f"cost shape {c.shape} does not match weights ({n}, {m})")
    eps = float(epsilon)
    if not eps > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    ma = math.fsum(a.tolist())
    mb = math.fsum(b.tolist())
    if ma <= 0 or mb <= 0:
        raise ValueError("both measures need positive mass")
    if not semibalanced and abs(ma - mb) > 1e-9 * max(ma, mb):
        raise MassMismatchError(ma, mb, context="entropic_primal_bruteforce")

    with np.errstate(divide="ignore"):
        la = np.log(a)
        lb = np.log(b)
    live = (a[:, None] > 0) & (b[None, :] > 0)
    if not live.any():
        raise ValueError("no admissible plan entries (disjoint supports of positive mass)")

    # log-domain plan, initialized at the product coupling scaled to the
    # column marginals: pi = a x b / m(a)
    L = np.where(live, la[:, None] + lb[None, :] - math.log(ma), -math.inf)
    eta = 1.0 / (1.0 + eps)

    def project(Lx: np.ndarray) -> np.ndarray:
        if semibalanced:
            col = np.array([_logsumexp(Lx[:, j]) if b[j] > 0 else -math.inf for j in range(m)])
            shift = np.where(b > 0, lb - col, 0.0)
            return Lx + shift[None, :]
        for _ in range(400):
            row = np.array([_logsumexp(Lx[i, :]) if a[i] > 0 else -math.inf for i in range(n)])
            Lx = Lx + np.where(a > 0, la - row, 0.0)[:, None]
            col = np.array([_logsumexp(Lx[:, j]) if b[j] > 0 else -math.inf for j in range(m)])
            Lx = Lx + np.where(b > 0, lb - col, 0.0)[None, :]
            with np.errstate(over="ignore"):
                pi = np.exp(Lx)
            row_err = np.abs(pi.sum(axis=1) - a).max()
            if row_err <= 1e-13 * max(1.0, ma):
                break
        return Lx

    def gradient(Lx: np.ndarray, pi: np.ndarray) -> np.ndarray:
        # gradient of cost + eps * full-KL entropy (+ row penalty when soft);
        # convention constants shift the multipliers, not the residual
        G = np.where(live, c + eps * (Lx - la[:, None] - lb[None, :]), 0.0)
        if semibalanced:
            rows = pi.sum(axis=1)
            with np.errstate(divide="ignore"):
                ratio = np.where(a > 0, rows / np.where(a > 0, a, 1.0), 1.0)
                G = G + np.where(live, np.where(ratio > 0, np.log(ratio), -math.inf)[:, None], 0.0)
        return G

    def residual_of(G: np.ndarray, pi: np.ndarray) -> float:
        if semibalanced:
            colmass = pi.sum(axis=0)
            lam = np.zeros(m)
            ok = colmass > 0
            lam[ok] = (pi[:, ok] * G[:, ok]).sum(axis=0) / colmass[ok]
            return float(np.abs(pi * (G - lam[None, :])).max())
        u = np.zeros(n)
        v = np.zeros(m)
        rowmass = pi.sum(axis=1)
        colmass = pi.sum(axis=0)
        for _ in range(60):
            with np.errstate(invalid="ignore", divide="ignore"):
                u = np.where(rowmass > 0, (pi * (G - v[None, :])).sum(axis=1) / rowmass, 0.0)
                v = np.where(colmass > 0, (pi * (G - u[:, None])).sum(axis=0) / colmass, 0.0)
        return float(np.abs(pi * (G - u[:, None] - v[None, :])).max())

    L = project(L)
    steps = 0
    res = math.inf
    while steps < max_steps:
        with np.errstate(over="ignore"):
            pi = np.exp(L)
        G = gradient(L, pi)
        res = residual_of(G, pi)
        if res <= tol:
            break
        L = project(np.where(live, L - eta * G, -math.inf))
        steps += 1
    if res > tol:
        raise NotConvergedError(steps, res, tol)

    pi = np.exp(L)
    mask = pi > 0
    ent_terms = pi[mask] * (L[mask] - (la[:, None] + lb[None, :])[mask])
    simplified = math.fsum((c[mask] * pi[mask]).tolist()) + eps * math.fsum(ent_terms.tolist())
    kl_rows = 0.0
    if semibalanced:
        kl_rows = kl_penalty(pi.sum(axis=1), a)
        simplified += kl_rows
    m_pi = math.fsum(pi.ravel().tolist())
    full_kl = simplified + eps * (ma * mb - m_pi)
    value = simplified if convention == SIMPLIFIED else full_kl
    return EntropicPrimalResult(
        value=value,
        simplified=simplified,
        full_kl=full_kl,
        plan=pi,
        steps=steps,
        residual=res,
        kl_row_penalty=kl_rows,
    )
