"""Array-in/array-out bindings for the transport losses.

External training loops hand over plain double-precision arrays; each call
builds the measures, runs the core once, and returns plain floats and
arrays. Nothing survives a call: no caches, no module state, so calls are
reentrant and repeated identical calls return identical bits.

Single-precision input is rejected rather than upcast. A silent upcast
would make results here differ from a caller's own float32 arithmetic in
ways that are miserable to chase; demanding float64 keeps parity with the
core exact.
"""

import numpy as np

from s3ot import (
    GridMeasure,
    PointMeasure,
    ScaleTransform,
    SolverConfig,
    build_cost,
    counting_loss,
    scale_consistency_loss,
    sinkhorn_divergence,
)

# versioned in lockstep with the core
__version__ = "0.1.0"

__all__ = [
    "bind_scale_consistency_loss",
    "bind_semibalanced_loss",
    "bind_sinkhorn_divergence",
]


def _as_double(name: str, value, ndim: int) -> np.ndarray:
    """Validate one array argument, naming it in every complaint."""
    arr = np.asarray(value)
    if np.issubdtype(arr.dtype, np.floating) and arr.dtype != np.float64:
        raise TypeError(f"{name}: must be float64, got {arr.dtype} "
                        f"(single precision is rejected, not upcast)")
    if not (np.issubdtype(arr.dtype, np.floating)
            or np.issubdtype(arr.dtype, np.integer)):
        raise TypeError(f"{name}: must be a numeric array, got dtype {arr.dtype}")
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name}: expected a {ndim}-d array, got shape {arr.shape}")
    return arr


def _config(epsilon: float, tol: float, max_iter: int) -> SolverConfig:
    return SolverConfig(epsilon=float(epsilon), tolerance=float(tol),
                        max_iterations=int(max_iter))


def bind_semibalanced_loss(alpha_values, grid_shape, cell_size, points,
                           epsilon, tol=1e-9, max_iter=500):
    """Counting loss of a flattened density grid against weighted points.

    ``alpha_values`` is the row-major flattening of a ``grid_shape`` grid
    with square cells of physical size ``cell_size``; ``points`` is an
    (n, 3) array of (x, y, w) rows, possibly empty. Returns
    ``(value, gradient)`` with the gradient flattened like ``alpha_values``.
    """
    alpha = _as_double("alpha_values", alpha_values, ndim=1)
    try:
        rows, cols = (int(s) for s in grid_shape)
    except (TypeError, ValueError):
        raise ValueError(f"grid_shape: expected (rows, cols), got {grid_shape!r}")
    if rows < 1 or cols < 1:
        raise ValueError(f"grid_shape: must be positive, got ({rows}, {cols})")
    if alpha.size != rows * cols:
        raise ValueError(f"alpha_values: a ({rows}, {cols}) grid takes "
                         f"{rows * cols} values, got {alpha.size}")
    pts = _as_double("points", points, ndim=2) if np.size(points) else \
        np.zeros((0, 3))
    if pts.shape[1] != 3:
        raise ValueError(f"points: expected (n, 3) rows of (x, y, w), "
                         f"got shape {pts.shape}")
    grid = GridMeasure(alpha.reshape(rows, cols), cell_size=float(cell_size))
    target = PointMeasure(pts[:, :2], pts[:, 2])
    result = counting_loss(grid, target, _config(epsilon, tol, max_iter))
    return float(result.value), np.reshape(result.gradient, alpha.shape)


def bind_scale_consistency_loss(alpha_hat, alpha, factor, epsilon,
                                tol=1e-9, max_iter=500):
    """Agreement loss between a coarse grid and a pooled fine grid.

    ``alpha`` is the fine 2-d grid (unit cells), ``alpha_hat`` the coarse
    one whose cells are ``1 / factor`` times wider, and ``factor`` the
    linear shrink (0.5 halves each side). Returns
    ``(value, grad_alpha_hat, grad_alpha)`` with gradients shaped like
    their inputs.
    """
    hat = _as_double("alpha_hat", alpha_hat, ndim=2)
    fine = _as_double("alpha", alpha, ndim=2)
    try:
        transform = ScaleTransform(float(factor))
    except ValueError as exc:
        raise ValueError(f"factor: {exc}") from None
    block = transform.block
    pooled_shape = (-(-fine.shape[0] // block), -(-fine.shape[1] // block))
    if hat.shape != pooled_shape:
        raise ValueError(f"alpha_hat: pooling a {fine.shape} grid by "
                         f"{factor} gives shape {pooled_shape}, got {hat.shape}")
    result = scale_consistency_loss(
        GridMeasure(hat, cell_size=float(block)),
        GridMeasure(fine, cell_size=1.0),
        transform, _config(epsilon, tol, max_iter))
    return float(result.value), result.grad_coarse, result.grad_fine


def bind_sinkhorn_divergence(mu, nu, supports, epsilon, tol=1e-9,
                             max_iter=500):
    """Debiased divergence of two equal-mass weight vectors on one support.

    ``supports`` is a (k, 2) array of raw coordinates shared by both
    measures; costs are squared distances with no rescaling, so the caller
    controls the length scale. Returns the scalar value.
    """
    mu_w = _as_double("mu", mu, ndim=1)
    nu_w = _as_double("nu", nu, ndim=1)
    sup = _as_double("supports", supports, ndim=2)
    if sup.shape[1] != 2:
        raise ValueError(f"supports: expected (k, 2) coordinates, "
                         f"got shape {sup.shape}")
    if mu_w.size != sup.shape[0] or nu_w.size != sup.shape[0]:
        raise ValueError(f"mu/nu: need one weight per support point; got "
                         f"{mu_w.size} and {nu_w.size} for {sup.shape[0]} points")
    cost = np.asarray(build_cost(sup, sup).costs)
    return float(sinkhorn_divergence(mu_w, nu_w, cost, cost, cost,
                                     _config(epsilon, tol, max_iter)))
