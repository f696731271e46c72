#!/usr/bin/env python3
"""Mint the shared cross-language test vectors.

Writes grid and point text files plus a manifest into ``testdata/vectors/``,
with every expected value computed by the installed core at full precision.
The inputs round-trip exactly (file floats are written with repr), so any
consumer that parses the files sees bit-identical arrays and must reproduce
the expected values to 1e-12.

Deterministic; rerunning overwrites the same content.
"""

import csv
import math
import pathlib

import numpy as np

from s3ot import (
    GridMeasure,
    PointMeasure,
    ScaleTransform,
    SolverConfig,
    build_cost,
    counting_loss,
    downscale,
    save_grid_measure,
    save_point_measure,
    scale_consistency_loss,
    sinkhorn_divergence,
)

OUT = pathlib.Path(__file__).resolve().parent / "vectors"

FIELDS = ("name", "op", "epsilon", "tolerance", "max_iterations", "factor",
          "input_a", "input_b", "expected_value")


def _config(eps, tol, cap):
    return SolverConfig(epsilon=eps, tolerance=tol, max_iterations=cap)


def counting_vectors():
    rng = np.random.default_rng(20260816)
    cases = [
        # one unit atom each, coincident: the loss floor
        ("counting_coincident", GridMeasure([[1.0]]),
         PointMeasure([(0.5, 0.5)]), 0.01, 1e-12, 10_000),
        # one atom of weight 2 at unit normalized distance
        ("counting_one_atom", GridMeasure([[2.0]]),
         PointMeasure([(1.5, 0.5)]), 0.1, 1e-13, 10_000),
        ("counting_random",
         GridMeasure(rng.uniform(0.2, 1.2, size=(5, 5))),
         PointMeasure(rng.uniform(0.5, 4.5, size=(3, 2)),
                      rng.uniform(0.5, 1.5, size=3)),
         0.05, 1e-11, 20_000),
    ]
    rows = []
    for name, grid, points, eps, tol, cap in cases:
        res = counting_loss(grid, points, _config(eps, tol, cap))
        assert res.converged, name
        ga = f"{name}_grid.csv"
        gb = f"{name}_points.csv"
        save_grid_measure(grid, str(OUT / ga))
        save_point_measure(points, str(OUT / gb))
        rows.append((name, "semibalanced_loss", eps, tol, cap, "",
                     ga, gb, res.value))
    return rows


def scale_vectors():
    rng = np.random.default_rng(20260817)
    half = ScaleTransform(0.5)
    fine_a = GridMeasure(rng.uniform(0.1, 1.0, size=(4, 4)))
    unit_coarse = np.zeros((2, 2))
    unit_coarse[0, 0] = 1.0
    unit_fine = np.zeros((4, 4))
    unit_fine[2, 2] = 1.0
    cases = [
        # pooling the fine grid reproduces the coarse one exactly
        ("scale_consistent", downscale(fine_a, half), fine_a,
         0.1, 1e-12, 3000),
        # single cells: the loss is the normalized squared center distance
        ("scale_unit_cells", GridMeasure(unit_coarse, cell_size=2.0),
         GridMeasure(unit_fine), 0.05, 1e-12, 20_000),
        ("scale_random",
         GridMeasure(rng.uniform(0.1, 1.0, size=(3, 3)), cell_size=2.0),
         GridMeasure(rng.uniform(0.1, 1.0, size=(6, 6))),
         0.15, 1e-11, 5000),
    ]
    rows = []
    for name, coarse, fine, eps, tol, cap in cases:
        res = scale_consistency_loss(coarse, fine, half, _config(eps, tol, cap))
        assert res.converged, name
        ga = f"{name}_coarse.csv"
        gb = f"{name}_fine.csv"
        save_grid_measure(coarse, str(OUT / ga))
        save_grid_measure(fine, str(OUT / gb))
        rows.append((name, "scale_consistency_loss", eps, tol, cap, 0.5,
                     ga, gb, res.value))
    return rows


def divergence_vectors():
    rng = np.random.default_rng(20260818)
    sup_self = rng.uniform(0.0, 2.0, size=(4, 2))
    w_self = rng.uniform(0.2, 1.0, size=4)
    sup_rand = rng.uniform(0.0, 2.0, size=(6, 2))
    mu_rand = rng.uniform(0.2, 1.0, size=6)
    nu_rand = rng.uniform(0.2, 1.0, size=6)
    nu_rand *= math.fsum(mu_rand.tolist()) / math.fsum(nu_rand.tolist())
    cases = [
        ("divergence_self", sup_self, w_self, w_self.copy(),
         0.05, 1e-12, 20_000),
        # unit atoms one apart on a shared support: the raw cost survives
        ("divergence_unit_atoms", np.array([[0.0, 0.0], [1.0, 0.0]]),
         np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.05, 1e-12, 20_000),
        ("divergence_random", sup_rand, mu_rand, nu_rand,
         0.2, 1e-12, 20_000),
    ]
    rows = []
    for name, sup, mu, nu, eps, tol, cap in cases:
        cost = np.asarray(build_cost(sup, sup).costs)
        value = sinkhorn_divergence(mu, nu, cost, cost, cost,
                                    _config(eps, tol, cap))
        ga = f"{name}_mu.csv"
        gb = f"{name}_nu.csv"
        save_point_measure(PointMeasure(sup, mu), str(OUT / ga))
        save_point_measure(PointMeasure(sup, nu), str(OUT / gb))
        rows.append((name, "sinkhorn_divergence", eps, tol, cap, "",
                     ga, gb, value))
    return rows


def main() -> int:
    OUT.mkdir(parents=True, exist_ok=True)
    rows = counting_vectors() + scale_vectors() + divergence_vectors()
    with open(OUT / "manifest.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FIELDS)
        for name, op, eps, tol, cap, factor, ga, gb, value in rows:
            writer.writerow((name, op, repr(float(eps)), repr(float(tol)),
                             cap, repr(float(factor)) if factor != "" else "",
                             ga, gb, repr(float(value))))
    print(f"wrote {len(rows)} vectors to {OUT}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
