"""The entropy generator behind the soft marginal penalty, and its conjugate.

``phi(x) = x ln x - x + 1`` (with ``phi(0) = 1`` by continuity) generates the
divergence that replaces one hard marginal constraint: a marginal that matches
its reference costs nothing, shortfall and excess both cost. Its convex
conjugate is ``phi_star(z) = exp(z) - 1``, which is what the dual objective
and the mass-control term in gradients actually evaluate.
"""

from __future__ import annotations

import math

import numpy as np

# exp overflows float64 just above this point; phi_star saturates instead of raising
_EXP_OVERFLOW = 709.0


def phi(x: float) -> float:
    """Generator value at ``x >= 0``; raises on negative input."""
    x = float(x)
    if x < 0 or not math.isfinite(x):
        raise ValueError(f"phi domain is [0, inf), got {x!r}")
    if x == 0.0:
        return 1.0
    return x * math.log(x) - x + 1.0


def phi_star(z: float) -> float:
    """Convex conjugate ``exp(z) - 1``, stable near zero, saturating above overflow."""
    z = float(z)
    if z > _EXP_OVERFLOW:
        return math.inf
    return math.expm1(z)


def kl_penalty(mu_weights, nu_weights) -> float:
    """Generator divergence ``sum_k nu_k * phi(mu_k / nu_k)`` between weight vectors.

    The convention ``0 * phi(0/0) = 0`` makes shared empty cells free. An atom
    of ``mu`` where ``nu`` carries nothing is infinitely penalized; the return
    value is ``math.inf`` in that case (a signal, not an exception).
    """
    mu = np.asarray(mu_weights, dtype=np.float64).ravel()
    nu = np.asarray(nu_weights, dtype=np.float64).ravel()
    if mu.shape != nu.shape:
        raise ValueError(f"weight vectors differ in length: {mu.shape} vs {nu.shape}")
    if np.any(mu < 0) or np.any(nu < 0):
        raise ValueError("weights must be nonnegative")
    if np.any((mu > 0) & (nu == 0)):
        return math.inf
    terms = []
    for m, n in zip(mu.tolist(), nu.tolist()):
        if n == 0.0:
            continue  # here m == 0 as well, contributing 0
        terms.append(n * phi(m / n))
    return math.fsum(terms)
