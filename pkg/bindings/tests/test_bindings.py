"""Binding outputs equal core outputs on the shared vector set, argument
validation names the offender, and nothing persists between calls."""

import csv
import pathlib

import numpy as np
import pytest

pybindings = pytest.importorskip("pybindings")

import s3ot
from pybindings import (  # noqa: E402
    bind_scale_consistency_loss,
    bind_semibalanced_loss,
    bind_sinkhorn_divergence,
)
from s3ot import (
    MassMismatchError,
    ScaleTransform,
    SolverConfig,
    build_cost,
    counting_loss,
    load_grid_measure,
    load_point_measure,
    scale_consistency_loss,
    sinkhorn_divergence,
)

VECTOR_DIR = pathlib.Path(__file__).resolve().parents[2] / "testdata" / "vectors"
PARITY = 1e-12


def load_manifest():
    with open(VECTOR_DIR / "manifest.csv", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


MANIFEST = load_manifest()
BY_NAME = {row["name"]: row for row in MANIFEST}


def _config(row):
    return SolverConfig(epsilon=float(row["epsilon"]),
                        tolerance=float(row["tolerance"]),
                        max_iterations=int(row["max_iterations"]))


def _solver_args(row):
    return dict(epsilon=float(row["epsilon"]), tol=float(row["tolerance"]),
                max_iter=int(row["max_iterations"]))


def _close(got, expected):
    assert abs(got - expected) <= PARITY * max(1.0, abs(expected))


def run_binding(row):
    """Feed one manifest row to the matching binding."""
    path_a = str(VECTOR_DIR / row["input_a"])
    path_b = str(VECTOR_DIR / row["input_b"])
    if row["op"] == "semibalanced_loss":
        grid = load_grid_measure(path_a)
        points = load_point_measure(path_b)
        pts3 = np.column_stack([points.xy, points.weights])
        return bind_semibalanced_loss(grid.values.ravel(),
                                      (grid.rows, grid.cols), grid.cell_size,
                                      pts3, **_solver_args(row))
    if row["op"] == "scale_consistency_loss":
        coarse = load_grid_measure(path_a)
        fine = load_grid_measure(path_b)
        return bind_scale_consistency_loss(coarse.values, fine.values,
                                           float(row["factor"]),
                                           **_solver_args(row))
    mu = load_point_measure(path_a)
    nu = load_point_measure(path_b)
    return bind_sinkhorn_divergence(mu.weights, nu.weights, mu.xy,
                                    **_solver_args(row))


def run_core(row):
    """The same row through the core's own interfaces."""
    path_a = str(VECTOR_DIR / row["input_a"])
    path_b = str(VECTOR_DIR / row["input_b"])
    config = _config(row)
    if row["op"] == "semibalanced_loss":
        res = counting_loss(load_grid_measure(path_a),
                            load_point_measure(path_b), config)
        return res.value, res.gradient
    if row["op"] == "scale_consistency_loss":
        res = scale_consistency_loss(load_grid_measure(path_a),
                                     load_grid_measure(path_b),
                                     ScaleTransform(float(row["factor"])),
                                     config)
        return res.value, res.grad_coarse, res.grad_fine
    mu = load_point_measure(path_a)
    nu = load_point_measure(path_b)
    cost = np.asarray(build_cost(mu.xy, mu.xy).costs)
    return sinkhorn_divergence(mu.weights, nu.weights, cost, cost, cost,
                               config)


# ------------------------------------------------------------------ parity

@pytest.mark.parametrize("row", MANIFEST, ids=lambda r: r["name"])
def test_binding_matches_core_and_frozen_value(row):
    bound = run_binding(row)
    core = run_core(row)
    bound_value = bound[0] if isinstance(bound, tuple) else bound
    core_value = core[0] if isinstance(core, tuple) else core
    _close(bound_value, core_value)
    _close(bound_value, float(row["expected_value"]))
    if isinstance(bound, tuple):
        for got, want in zip(bound[1:], core[1:]):
            assert np.abs(np.asarray(got).ravel()
                          - np.asarray(want).ravel()).max() <= PARITY


def test_counting_gradient_shape_follows_alpha():
    row = BY_NAME["counting_random"]
    _, grad = run_binding(row)
    grid = load_grid_measure(str(VECTOR_DIR / row["input_a"]))
    assert grad.shape == (grid.rows * grid.cols,)


# ------------------------------------------------------- documented floors

def test_coincident_unit_atom_sits_on_zero():
    value, grad = run_binding(BY_NAME["counting_coincident"])
    assert abs(value) <= 1e-9
    assert np.abs(grad).max() <= 0.01


def test_one_atom_value_matches_closed_form():
    value, _ = run_binding(BY_NAME["counting_one_atom"])
    assert value == pytest.approx(1.3118528194400545, abs=1e-9)


def test_consistent_pair_scores_zero():
    value, _, _ = run_binding(BY_NAME["scale_consistent"])
    assert abs(value) <= 1e-9


def test_unit_cells_price_their_distance():
    value, _, _ = run_binding(BY_NAME["scale_unit_cells"])
    assert value == pytest.approx(0.5, abs=1e-9)


def test_self_divergence_is_zero():
    assert abs(run_binding(BY_NAME["divergence_self"])) <= 1e-9


def test_unit_atoms_divergence_is_their_cost():
    assert run_binding(BY_NAME["divergence_unit_atoms"]) == pytest.approx(
        1.0, abs=1e-12)


# ------------------------------------------------------------- statelessness

def test_repeated_calls_are_bit_identical():
    row = BY_NAME["counting_random"]
    v1, g1 = run_binding(row)
    v2, g2 = run_binding(row)
    assert v1 == v2
    assert np.array_equal(g1, g2)

    row = BY_NAME["scale_random"]
    first = run_binding(row)
    second = run_binding(row)
    assert first[0] == second[0]
    assert np.array_equal(first[1], second[1])
    assert np.array_equal(first[2], second[2])


def test_interleaved_calls_do_not_disturb_each_other():
    a = run_binding(BY_NAME["divergence_random"])
    run_binding(BY_NAME["counting_one_atom"])
    run_binding(BY_NAME["scale_unit_cells"])
    assert run_binding(BY_NAME["divergence_random"]) == a


# ---------------------------------------------------------------- validation

def test_single_precision_is_rejected_by_name():
    alpha32 = np.ones(4, dtype=np.float32)
    with pytest.raises(TypeError, match="alpha_values"):
        bind_semibalanced_loss(alpha32, (2, 2), 1.0,
                               np.zeros((0, 3)), epsilon=0.1)
    with pytest.raises(TypeError, match="supports"):
        bind_sinkhorn_divergence([1.0], [1.0],
                                 np.zeros((1, 2), dtype=np.float32),
                                 epsilon=0.1)
    with pytest.raises(TypeError, match="alpha_hat"):
        bind_scale_consistency_loss(np.ones((1, 1), dtype=np.float32),
                                    np.ones((2, 2)), 0.5, epsilon=0.1)


def test_non_numeric_arrays_are_rejected_by_name():
    with pytest.raises(TypeError, match="mu"):
        bind_sinkhorn_divergence(["a", "b"], [1.0, 1.0],
                                 np.zeros((2, 2)), epsilon=0.1)


def test_flat_length_must_match_grid_shape():
    with pytest.raises(ValueError, match="alpha_values"):
        bind_semibalanced_loss(np.ones(5), (2, 2), 1.0,
                               np.zeros((0, 3)), epsilon=0.1)


def test_points_must_carry_weights():
    with pytest.raises(ValueError, match="points"):
        bind_semibalanced_loss(np.ones(4), (2, 2), 1.0,
                               np.ones((3, 2)), epsilon=0.1)


def test_bad_grid_shape_is_named():
    with pytest.raises(ValueError, match="grid_shape"):
        bind_semibalanced_loss(np.ones(4), 4, 1.0,
                               np.zeros((0, 3)), epsilon=0.1)


def test_bad_factor_is_named():
    with pytest.raises(ValueError, match="factor"):
        bind_scale_consistency_loss(np.ones((2, 2)), np.ones((4, 4)), 0.3,
                                    epsilon=0.1)


def test_coarse_shape_must_match_pooling():
    with pytest.raises(ValueError, match="alpha_hat"):
        bind_scale_consistency_loss(np.ones((3, 3)), np.ones((4, 4)), 0.5,
                                    epsilon=0.1)


def test_weight_count_must_match_support():
    with pytest.raises(ValueError, match="mu/nu"):
        bind_sinkhorn_divergence([1.0, 1.0], [1.0], np.zeros((1, 2)),
                                 epsilon=0.1)


def test_support_must_be_planar():
    with pytest.raises(ValueError, match="supports"):
        bind_sinkhorn_divergence([1.0], [1.0], np.zeros((1, 3)), epsilon=0.1)


def test_unequal_masses_propagate_the_core_error():
    sup = np.array([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(MassMismatchError):
        bind_sinkhorn_divergence([1.0, 0.0], [1.0, 1.0], sup, epsilon=0.1)


# ------------------------------------------------------------------- version

def test_version_is_locked_to_the_core():
    assert pybindings.__version__ == s3ot.__version__
