"""Discrete measures, cost matrices, and their on-disk formats.

Two measure families cover everything downstream:

* ``PointMeasure``: weighted atoms at arbitrary planar locations. Annotation
  files (one head per line) load into these, with unit weights by default.
* ``GridMeasure``: a nonnegative density grid. Cell (r, c) owns the square
  ``[c*s, (c+1)*s] x [r*s, (r+1)*s]`` for cell size ``s`` and is represented
  by its center when the grid is flattened to atoms.

Both are immutable after construction; solver state never aliases them.

File formats
------------
Point file: UTF-8 CSV, header ``x,y`` or ``x,y,w``, one atom per subsequent
line, blank lines ignored. Grid file: first line ``rows,cols,cell_size``,
then the values in row-major order as comma-separated floats (any line
chunking). PGM export writes plain P2 with the maximum value mapped to 255.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import EmptyMeasureError, MeasureFormatError

SQUARED_EUCLIDEAN = "squared_euclidean"
EUCLIDEAN = "euclidean"
COST_KINDS = (SQUARED_EUCLIDEAN, EUCLIDEAN)


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True, order="C")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PointMeasure:
    """Weighted atoms in the plane.

    Parameters
    ----------
    xy : (n, 2) array of atom locations.
    weights : (n,) array of nonnegative weights; omitted means unit weights.
    """

    xy: np.ndarray
    weights: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=np.float64)
        if xy.size == 0:
            xy = xy.reshape(0, 2)
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise MeasureFormatError(f"point support must be (n, 2), got {xy.shape}")
        if not np.all(np.isfinite(xy)):
            raise MeasureFormatError("point coordinates must be finite")
        w = self.weights
        if w is None:
            w = np.ones(len(xy))
        w = np.asarray(w, dtype=np.float64).reshape(-1)
        if len(w) != len(xy):
            raise MeasureFormatError(
                f"got {len(w)} weights for {len(xy)} atoms"
            )
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise MeasureFormatError("weights must be finite and nonnegative")
        object.__setattr__(self, "xy", _readonly(xy))
        object.__setattr__(self, "weights", _readonly(w))

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class GridMeasure:
    """A nonnegative density grid with square cells of physical size ``cell_size``."""

    values: np.ndarray
    cell_size: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise MeasureFormatError(f"grid values must be a nonempty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise MeasureFormatError("grid values must be finite")
        if np.any(v < 0):
            raise MeasureFormatError("grid values must be nonnegative")
        if not (float(self.cell_size) > 0):
            raise MeasureFormatError(f"cell_size must be positive, got {self.cell_size}")
        object.__setattr__(self, "values", _readonly(v))
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def extent(self) -> tuple[float, float]:
        """Physical (width, height) of the covered rectangle."""
        return (self.cols * self.cell_size, self.rows * self.cell_size)

    def cell_centers(self) -> np.ndarray:
        """(rows*cols, 2) cell centers in row-major order, columns as x."""
        r = (np.arange(self.rows) + 0.5) * self.cell_size
        c = (np.arange(self.cols) + 0.5) * self.cell_size
        cx, cy = np.meshgrid(c, r)
        return np.column_stack([cx.ravel(), cy.ravel()])


@dataclass(frozen=True)
class CostMatrix:
    """Pairwise ground costs between a source and a target support."""

    costs: np.ndarray
    kind: str = SQUARED_EUCLIDEAN
    normalization: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=np.float64)
        if c.ndim != 2:
            raise MeasureFormatError(f"cost matrix must be 2-D, got shape {c.shape}")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise MeasureFormatError("costs must be finite and nonnegative")
        object.__setattr__(self, "costs", _readonly(c))

    @property
    def n_source(self) -> int:
        return self.costs.shape[0]

    @property
    def n_target(self) -> int:
        return self.costs.shape[1]


def mass(measure) -> float:
    """Total mass of a measure, summed with compensated (exact) accumulation.

    Accepts a PointMeasure, a GridMeasure, or a bare array of weights.
    """
    if isinstance(measure, PointMeasure):
        vals = measure.weights
    elif isinstance(measure, GridMeasure):
        vals = measure.values.ravel()
    else:
        vals = np.asarray(measure, dtype=np.float64).ravel()
    return math.fsum(vals.tolist())


def build_cost(
    source_support: np.ndarray,
    target_support: np.ndarray,
    kind: str = SQUARED_EUCLIDEAN,
    normalization: float = 1.0,
) -> CostMatrix:
    """Pairwise costs after dividing coordinates by ``normalization``.

    ``squared_euclidean`` gives ``|x/N - y/N|^2`` and ``euclidean`` gives
    ``|x/N - y/N|`` for source atom x and target atom y. Dividing the raw
    coordinates first (rather than rescaling the finished matrix) keeps the
    doubling property exact: doubling N scales squared costs by exactly 1/4.
    """
    if kind not in COST_KINDS:
        raise ValueError(f"unknown cost kind {kind!r}; expected one of {COST_KINDS}")
    n = float(normalization)
    if not (n > 0) or not math.isfinite(n):
        raise ValueError(f"normalization must be a positive real, got {normalization!r}")
    s = np.asarray(source_support, dtype=np.float64) / n
    t = np.asarray(target_support, dtype=np.float64) / n
    if s.size == 0 or t.size == 0:
        raise EmptyMeasureError("empty support")
    if s.ndim != 2 or s.shape[1] != 2 or t.ndim != 2 or t.shape[1] != 2:
        raise MeasureFormatError("supports must have shape (n, 2)")
    dx = s[:, 0][:, None] - t[:, 0][None, :]
    dy = s[:, 1][:, None] - t[:, 1][None, :]
    sq = dx * dx + dy * dy
    costs = sq if kind == SQUARED_EUCLIDEAN else np.sqrt(sq)
    return CostMatrix(costs=costs, kind=kind, normalization=n)


class DiscretizedGrid(NamedTuple):
    """Row-major atoms for a grid: one (center, value) pair per retained cell."""

    support: np.ndarray
    weights: np.ndarray
    retained_mass: float
    all_pruned: bool


def grid_to_discrete(grid: GridMeasure, prune_below: float = 0.0) -> DiscretizedGrid:
    """Flatten a grid to atoms at cell centers, keeping values > ``prune_below``."""
    centers = grid.cell_centers()
    vals = grid.values.ravel()
    keep = vals > prune_below
    support = centers[keep]
    weights = vals[keep]
    return DiscretizedGrid(
        support=support,
        weights=weights,
        retained_mass=math.fsum(weights.tolist()),
        all_pruned=not bool(keep.any()),
    )


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def _atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the target directory and rename on success."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def load_point_measure(path: str) -> PointMeasure:
    """Parse a point file (header ``x,y`` or ``x,y,w``; blank lines ignored)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    rows = [(i + 1, ln.strip()) for i, ln in enumerate(lines) if ln.strip()]
    if not rows:
        raise MeasureFormatError(f"{path}: empty point file (missing header)")
    header_no, header = rows[0]
    cols = [c.strip().lower() for c in header.split(",")]
    if cols == ["x", "y"]:
        weighted = False
    elif cols == ["x", "y", "w"]:
        weighted = True
    else:
        raise MeasureFormatError(
            f"{path}:{header_no}: header must be 'x,y' or 'x,y,w', got {header!r}"
        )
    xs, ys, ws = [], [], []
    for lineno, ln in rows[1:]:
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) != (3 if weighted else 2):
            raise MeasureFormatError(
                f"{path}:{lineno}: expected {3 if weighted else 2} fields, got {len(parts)}"
            )
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise MeasureFormatError(f"{path}:{lineno}: non-numeric field ({exc})") from None
        xs.append(vals[0])
        ys.append(vals[1])
        ws.append(vals[2] if weighted else 1.0)
    xy = np.column_stack([xs, ys]) if xs else np.zeros((0, 2))
    try:
        return PointMeasure(xy=xy, weights=np.asarray(ws))
    except MeasureFormatError as exc:
        raise MeasureFormatError(f"{path}: {exc}") from None


def save_point_measure(measure: PointMeasure, path: str) -> None:
    unit = bool(np.all(measure.weights == 1.0))
    out = ["x,y" if unit else "x,y,w"]
    for (x, y), w in zip(measure.xy, measure.weights):
        # repr of a Python float round-trips exactly; numpy scalars do not
        x, y, w = float(x), float(y), float(w)
        out.append(f"{x!r},{y!r}" if unit else f"{x!r},{y!r},{w!r}")
    _atomic_write_text(path, "\n".join(out) + "\n")


def load_grid_measure(path: str) -> GridMeasure:
    """Parse a grid file: ``rows,cols,cell_size`` then row-major values."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh.read().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise MeasureFormatError(f"{path}: empty grid file")
    head = [p.strip() for p in lines[0].split(",")]
    if len(head) != 3:
        raise MeasureFormatError(
            f"{path}:1: header must be 'rows,cols,cell_size', got {lines[0]!r}"
        )
    try:
        rows, cols, cell_size = int(head[0]), int(head[1]), float(head[2])
    except ValueError as exc:
        raise MeasureFormatError(f"{path}:1: bad header ({exc})") from None
    vals: list[float] = []
    for ln in lines[1:]:
        for p in ln.split(","):
            p = p.strip()
            if not p:
                continue
            try:
                vals.append(float(p))
            except ValueError:
                raise MeasureFormatError(f"{path}: non-numeric grid value {p!r}") from None
    if len(vals) != rows * cols:
        raise MeasureFormatError(
            f"{path}: expected {rows * cols} values for a {rows}x{cols} grid, got {len(vals)}"
        )
    try:
        return GridMeasure(values=np.asarray(vals).reshape(rows, cols), cell_size=cell_size)
    except MeasureFormatError as exc:
        raise MeasureFormatError(f"{path}: {exc}") from None


def save_grid_measure(grid: GridMeasure, path: str) -> None:
    out = [f"{grid.rows},{grid.cols},{float(grid.cell_size)!r}"]
    for row in grid.values:
        out.append(",".join(repr(float(v)) for v in row))
    _atomic_write_text(path, "\n".join(out) + "\n")


def write_pgm(grid: GridMeasure, path: str) -> None:
    """Export as plain PGM (P2), max value rescaled linearly to 255.

    An all-zero grid exports as an all-zero image rather than dividing by zero.
    """
    peak = float(grid.values.max())
    if peak > 0:
        pixels = np.rint(grid.values * (255.0 / peak)).astype(np.int64)
    else:
        pixels = np.zeros_like(grid.values, dtype=np.int64)
    lines = [f"P2", f"{grid.cols} {grid.rows}", "255"]
    for row in pixels:
        # keep lines short per the plain-PGM 70 character recommendation
        vals = [str(v) for v in row]
        for i in range(0, len(vals), 16):
            lines.append(" ".join(vals[i : i + 16]))
    _atomic_write_text(path, "\n".join(lines) + "\n")
