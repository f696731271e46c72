"""Measure containers, ground costs, discretization, and file formats."""

import math
import os

import numpy as np
import pytest

from s3ot import (
    EUCLIDEAN,
    SQUARED_EUCLIDEAN,
    GridMeasure,
    MeasureFormatError,
    PointMeasure,
    build_cost,
    grid_to_discrete,
    load_grid_measure,
    load_point_measure,
    mass,
    save_grid_measure,
    save_point_measure,
    write_pgm,
)


# ---------------------------------------------------------------- containers

def test_point_measure_defaults_to_unit_weights():
    pm = PointMeasure(np.array([[0.0, 0.0], [1.0, 2.0], [3.0, 4.0]]))
    assert np.array_equal(pm.weights, np.ones(3))
    assert mass(pm) == 3.0
    assert len(pm) == 3


def test_point_measure_empty():
    pm = PointMeasure(np.zeros((0, 2)))
    assert len(pm) == 0
    assert mass(pm) == 0.0


def test_point_measure_rejects_bad_shapes_and_values():
    with pytest.raises(MeasureFormatError):
        PointMeasure(np.zeros((2, 3)))
    with pytest.raises(MeasureFormatError):
        PointMeasure(np.array([[0.0, np.inf]]))
    with pytest.raises(MeasureFormatError):
        PointMeasure(np.zeros((2, 2)), weights=[1.0])
    with pytest.raises(MeasureFormatError):
        PointMeasure(np.zeros((2, 2)), weights=[1.0, -0.5])


def test_point_measure_arrays_are_frozen():
    pm = PointMeasure(np.array([[1.0, 1.0]]))
    with pytest.raises(ValueError):
        pm.xy[0, 0] = 9.0
    with pytest.raises(ValueError):
        pm.weights[0] = 9.0


def test_grid_measure_mass_and_shape():
    gm = GridMeasure(np.full((2, 2), 0.5))
    assert mass(gm) == 2.0
    assert gm.rows == 2 and gm.cols == 2
    assert gm.extent == (2.0, 2.0)


def test_grid_measure_rejects_bad_input():
    with pytest.raises(MeasureFormatError):
        GridMeasure(np.array([1.0, 2.0]))  # 1-D
    with pytest.raises(MeasureFormatError):
        GridMeasure(np.array([[1.0, -1.0]]))
    with pytest.raises(MeasureFormatError):
        GridMeasure(np.array([[np.nan]]))
    with pytest.raises(MeasureFormatError):
        GridMeasure(np.ones((2, 2)), cell_size=0.0)


def test_cell_centers_row_major_x_from_columns():
    gm = GridMeasure(np.ones((2, 3)), cell_size=2.0)
    expected = np.array([
        [1.0, 1.0], [3.0, 1.0], [5.0, 1.0],
        [1.0, 3.0], [3.0, 3.0], [5.0, 3.0],
    ])
    assert np.array_equal(gm.cell_centers(), expected)


def test_mass_uses_compensated_summation():
    # naive left-to-right float addition loses the small terms here
    vals = np.full(10_000, 0.1)
    gm = GridMeasure(vals.reshape(100, 100))
    assert mass(gm) == math.fsum([0.1] * 10_000)


# ---------------------------------------------------------------- build_cost

def test_build_cost_zero_self_cost():
    cm = build_cost([(1.0, 1.0)], [(1.0, 1.0)], kind=SQUARED_EUCLIDEAN)
    assert cm.costs.shape == (1, 1)
    assert cm.costs[0, 0] == 0.0


def test_build_cost_345_triangle():
    sq = build_cost([(0.0, 0.0)], [(3.0, 4.0)], kind=SQUARED_EUCLIDEAN)
    eu = build_cost([(0.0, 0.0)], [(3.0, 4.0)], kind=EUCLIDEAN)
    assert sq.costs[0, 0] == 25.0
    assert eu.costs[0, 0] == 5.0


def test_build_cost_normalization_divides_coordinates_first():
    cm = build_cost([(0.0, 0.0)], [(3.0, 4.0)], kind=SQUARED_EUCLIDEAN,
                    normalization=5.0)
    assert cm.costs[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert cm.normalization == 5.0


def test_build_cost_rejects_empty_support_and_bad_normalization():
    with pytest.raises(ValueError):
        build_cost([], [(0.0, 0.0)])
    with pytest.raises(ValueError):
        build_cost([(0.0, 0.0)], [(1.0, 1.0)], normalization=0.0)
    with pytest.raises(ValueError):
        build_cost([(0.0, 0.0)], [(1.0, 1.0)], kind="manhattan")


def test_build_cost_doubling_normalization_scales_exactly(rng):
    src = rng.uniform(0, 8, (5, 2))
    tgt = rng.uniform(0, 8, (4, 2))
    sq1 = np.asarray(build_cost(src, tgt, kind=SQUARED_EUCLIDEAN, normalization=2.0).costs)
    sq2 = np.asarray(build_cost(src, tgt, kind=SQUARED_EUCLIDEAN, normalization=4.0).costs)
    eu1 = np.asarray(build_cost(src, tgt, kind=EUCLIDEAN, normalization=2.0).costs)
    eu2 = np.asarray(build_cost(src, tgt, kind=EUCLIDEAN, normalization=4.0).costs)
    # powers of two make the rescaling exact bit for bit
    assert np.array_equal(sq2, sq1 / 4.0)
    assert np.array_equal(eu2, eu1 / 2.0)


def test_build_cost_permutation_equivariant(rng):
    src = rng.uniform(0, 4, (6, 2))
    tgt = rng.uniform(0, 4, (3, 2))
    perm = rng.permutation(6)
    plain = np.asarray(build_cost(src, tgt).costs)
    permuted = np.asarray(build_cost(src[perm], tgt).costs)
    assert np.array_equal(permuted, plain[perm])


def test_build_cost_symmetric_on_shared_support(rng):
    src = rng.uniform(0, 4, (5, 2))
    c = np.asarray(build_cost(src, src).costs)
    assert np.array_equal(c, c.T)
    assert np.all(np.diag(c) == 0.0)


# ---------------------------------------------------------- grid_to_discrete

def test_grid_to_discrete_centers_and_weights():
    gm = GridMeasure(np.array([[1.0, 2.0]]), cell_size=1.0)
    d = grid_to_discrete(gm)
    assert np.array_equal(d.support, np.array([[0.5, 0.5], [1.5, 0.5]]))
    assert np.array_equal(d.weights, np.array([1.0, 2.0]))
    assert not d.all_pruned


def test_grid_to_discrete_drops_zero_cells():
    gm = GridMeasure(np.array([[0.0, 0.0], [0.0, 3.0]]), cell_size=1.0)
    d = grid_to_discrete(gm)
    assert d.support.shape == (1, 2)
    assert np.array_equal(d.support[0], np.array([1.5, 1.5]))
    assert d.weights[0] == 3.0


def test_grid_to_discrete_mass_preserved_exactly(rng):
    vals = rng.uniform(1e-8, 1.0, (7, 5))
    gm = GridMeasure(vals)
    d = grid_to_discrete(gm)
    assert d.retained_mass == mass(gm)


def test_grid_to_discrete_all_pruned_flag():
    gm = GridMeasure(np.zeros((2, 2)))
    d = grid_to_discrete(gm)
    assert d.all_pruned
    assert len(d.weights) == 0
    assert d.retained_mass == 0.0


def test_grid_to_discrete_prune_threshold_is_strict():
    gm = GridMeasure(np.array([[0.5, 0.2, 0.7]]))
    d = grid_to_discrete(gm, prune_below=0.5)
    assert np.array_equal(d.weights, np.array([0.7]))


# ------------------------------------------------------------------ file I/O

def test_point_file_round_trip(tmp_path, rng):
    pm = PointMeasure(rng.uniform(0, 10, (9, 2)), weights=rng.uniform(0.1, 2, 9))
    path = str(tmp_path / "pts.csv")
    save_point_measure(pm, path)
    back = load_point_measure(path)
    assert np.array_equal(back.xy, pm.xy)
    assert np.array_equal(back.weights, pm.weights)


def test_point_file_unit_weight_header(tmp_path):
    path = tmp_path / "pts.csv"
    path.write_text("x,y\n\n1.5,2.5\n3.0,4.0\n\n")
    pm = load_point_measure(str(path))
    assert np.array_equal(pm.xy, np.array([[1.5, 2.5], [3.0, 4.0]]))
    assert np.array_equal(pm.weights, np.ones(2))


def test_point_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n1.0\n")
    with pytest.raises(MeasureFormatError):
        load_point_measure(str(path))
    path.write_text("a,b\n1.0,2.0\n")
    with pytest.raises(MeasureFormatError):
        load_point_measure(str(path))


def test_grid_file_round_trip(tmp_path, rng):
    gm = GridMeasure(rng.uniform(0, 3, (4, 6)), cell_size=0.75)
    path = str(tmp_path / "grid.csv")
    save_grid_measure(gm, path)
    back = load_grid_measure(path)
    assert np.array_equal(back.values, gm.values)
    assert back.cell_size == gm.cell_size


def test_grid_file_accepts_any_line_chunking(tmp_path):
    path = tmp_path / "grid.csv"
    path.write_text("2,3,1.0\n1,2\n3,4,5\n6\n")
    gm = load_grid_measure(str(path))
    assert np.array_equal(gm.values, np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))


def test_grid_file_rejects_wrong_cell_count(tmp_path):
    path = tmp_path / "grid.csv"
    path.write_text("2,2,1.0\n1,2,3\n")
    with pytest.raises(MeasureFormatError):
        load_grid_measure(str(path))
    path.write_text("not,a,header\n")
    with pytest.raises(MeasureFormatError):
        load_grid_measure(str(path))


def test_atomic_write_leaves_no_temp_files(tmp_path):
    gm = GridMeasure(np.ones((2, 2)))
    path = str(tmp_path / "grid.csv")
    save_grid_measure(gm, path)
    save_grid_measure(gm, path)  # overwrite goes through rename too
    assert sorted(os.listdir(tmp_path)) == ["grid.csv"]


def test_pgm_export_is_linear_p2(tmp_path):
    gm = GridMeasure(np.array([[0.0, 1.0], [2.0, 4.0]]))
    path = str(tmp_path / "density.pgm")
    write_pgm(gm, path)
    tokens = open(path).read().split()
    assert tokens[:4] == ["P2", "2", "2", "255"]
    assert [int(t) for t in tokens[4:]] == [0, 64, 128, 255]


def test_pgm_export_all_zero_grid(tmp_path):
    gm = GridMeasure(np.zeros((1, 3)))
    path = str(tmp_path / "zero.pgm")
    write_pgm(gm, path)
    tokens = open(path).read().split()
    assert tokens[:4] == ["P2", "3", "1", "255"]
    assert [int(t) for t in tokens[4:]] == [0, 0, 0]
