"""Map-quality measures over a 2-D map of a 2-D input region.

All measures are built on cells: the input-space quadrilateral spanned by
the weights of four grid-adjacent nodes.  An (m x n) grid has
(m-1)(n-1) cells.  Cell corners are kept in cyclic grid order
(a, b), (a+1, b), (a+1, b+1), (a, b+1), so the shoelace formula applies
directly and the two diagonals connect corners 0-2 and 1-3.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .lattice import Lattice, WeightMatrix

# Below this diagonal length a cell is treated as collapsed; its skew
# would be dominated by rounding noise.
DEGENERATE_DIAGONAL = 1e-12


@dataclass(frozen=True)
class Cell:
    """Four grid-adjacent nodes and their weights, in cyclic grid order."""

    corner_nodes: tuple[int, int, int, int]
    corners: np.ndarray  # (4, 2)


class MetricsSample(NamedTuple):
    iteration: int
    unused_space: float
    avg_skew: float
    cell_dev_all: float
    cell_dev_interior: float
    twist_flips: int


def _require_2d(lattice: Lattice, w: WeightMatrix) -> None:
    if lattice.ndim != 2:
        raise ValueError(f"cell metrics need a 2-D lattice, got {lattice.ndim}-D")
    if w.input_dim != 2:
        raise ValueError(f"cell metrics need 2-D input space, got {w.input_dim}-D")
    if w.node_count != lattice.node_count:
        raise ValueError("weight matrix does not match lattice size")


def enumerate_cells(lattice: Lattice, w: WeightMatrix) -> list[Cell]:
    """All (m-1)(n-1) cells in row-major order over the cell grid."""
    _require_2d(lattice, w)
    m, n = lattice.extents
    cells = []
    for a in range(m - 1):
        for b in range(n - 1):
            nodes = (
                lattice.node_index((a, b)),
                lattice.node_index((a + 1, b)),
                lattice.node_index((a + 1, b + 1)),
                lattice.node_index((a, b + 1)),
            )
            cells.append(Cell(nodes, w.values[list(nodes)]))
    return cells


def _signed_areas(lattice: Lattice, w: WeightMatrix) -> np.ndarray:
    """Signed shoelace area of every cell, vectorized."""
    _require_2d(lattice, w)
    m, n = lattice.extents
    v = w.values.reshape(m, n, 2)
    p0 = v[:-1, :-1]
    p1 = v[1:, :-1]
    p2 = v[1:, 1:]
    p3 = v[:-1, 1:]
    area2 = (
        p0[..., 0] * p1[..., 1] - p1[..., 0] * p0[..., 1]
        + p1[..., 0] * p2[..., 1] - p2[..., 0] * p1[..., 1]
        + p2[..., 0] * p3[..., 1] - p3[..., 0] * p2[..., 1]
        + p3[..., 0] * p0[..., 1] - p0[..., 0] * p3[..., 1]
    )
    return 0.5 * area2.reshape(-1)


def cell_area(cell: Cell) -> float:
    """Absolute shoelace area of the quadrilateral in corner order."""
    p = cell.corners
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return float(abs(0.5 * np.sum(x * yn - xn * y)))


def cell_areas(lattice: Lattice, w: WeightMatrix) -> np.ndarray:
    return np.abs(_signed_areas(lattice, w))


def unused_space(lattice: Lattice, w: WeightMatrix, total_area: float) -> float:
    """Fraction of the input area not covered by cells.

    (total_area - sum of cell areas) / total_area.  Overlapping cells are
    counted once each, so the value can be misleadingly low (or negative)
    on folded maps; check the twist indicator alongside.
    """
    if total_area <= 0.0:
        raise ValueError(f"total_area must be > 0, got {total_area}")
    covered = float(cell_areas(lattice, w).sum())
    return (total_area - covered) / total_area


def covered_fraction(lattice: Lattice, w: WeightMatrix, total_area: float = 1.0) -> float:
    """Sum of cell areas over the total input area."""
    return 1.0 - unused_space(lattice, w, total_area)


def _diagonals(lattice: Lattice, w: WeightMatrix) -> tuple[np.ndarray, np.ndarray]:
    m, n = lattice.extents
    v = w.values.reshape(m, n, 2)
    d1 = np.linalg.norm(v[1:, 1:] - v[:-1, :-1], axis=-1).reshape(-1)  # corner 0 -> 2
    d2 = np.linalg.norm(v[:-1, 1:] - v[1:, :-1], axis=-1).reshape(-1)  # corner 1 -> 3
    return d1, d2


def average_skew(lattice: Lattice, w: WeightMatrix, with_excluded: bool = False):
    """Mean over cells of (longer diagonal / shorter diagonal) - 1.

    0 means every cell is a square (or any shape with equal diagonals,
    e.g. a rectangle).  Cells whose shorter diagonal is below
    ``DEGENERATE_DIAGONAL`` have infinite skew; they are excluded from the
    mean and counted separately (pass ``with_excluded=True`` to get the
    count).
    """
    _require_2d(lattice, w)
    d1, d2 = _diagonals(lattice, w)
    lo = np.minimum(d1, d2)
    hi = np.maximum(d1, d2)
    ok = lo >= DEGENERATE_DIAGONAL
    excluded = int(np.sum(~ok))
    if not np.any(ok):
        raise ValueError("all cells have a degenerate diagonal")
    skew = float(np.mean(hi[ok] / lo[ok] - 1.0))
    if with_excluded:
        return skew, excluded
    return skew


def _interior_mask(m: int, n: int) -> np.ndarray:
    """Mask over the (m-1) x (n-1) cell grid: cells touching no boundary node."""
    mask = np.zeros((m - 1, n - 1), dtype=bool)
    if m >= 4 and n >= 4:
        mask[1:-1, 1:-1] = True
    return mask.reshape(-1)


def cell_size_deviation(lattice: Lattice, w: WeightMatrix, include_edges: bool = True) -> float:
    """Absolute mean deviation of cell area divided by the mean cell area.

    With ``include_edges=False`` only cells whose four nodes are all
    interior grid nodes are counted (an edge cell is any cell containing a
    boundary grid node).
    """
    areas = cell_areas(lattice, w)
    if not include_edges:
        m, n = lattice.extents
        mask = _interior_mask(m, n)
        if not np.any(mask):
            raise ValueError(f"grid {lattice.extents} has no interior cells")
        areas = areas[mask]
    mean = float(areas.mean())
    if mean == 0.0:
        raise ValueError("mean cell area is zero")
    return float(np.mean(np.abs(areas - mean)) / mean)


class DensityHistogram(NamedTuple):
    edges: np.ndarray   # (bins + 1,) radii, edges[k] = k * bin_width
    counts: np.ndarray  # (bins,) node counts per annulus
    density: np.ndarray  # counts / annulus area


def density_vs_radius(w: WeightMatrix, center, bin_width: float) -> DensityHistogram:
    """Node density per annulus of width ``bin_width`` around ``center``.

    Bin k covers radii [k*bin_width, (k+1)*bin_width); density is the node
    count divided by the annulus area.
    """
    if bin_width <= 0.0:
        raise ValueError(f"bin_width must be > 0, got {bin_width}")
    center = np.asarray(center, dtype=float)
    radii = np.linalg.norm(w.values - center, axis=1)
    bins = int(np.max(radii) // bin_width) + 1
    idx = np.minimum((radii // bin_width).astype(int), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    k = np.arange(bins)
    ring_area = np.pi * bin_width**2 * (2 * k + 1)
    edges = bin_width * np.arange(bins + 1)
    return DensityHistogram(edges, counts, counts / ring_area)


def topology_twist_indicator(lattice: Lattice, w: WeightMatrix) -> tuple[int, int]:
    """(flipped cell count, total cell count).

    A flipped cell has signed shoelace area of opposite sign to the
    majority of cells; zero flips means every cell is consistently
    oriented, i.e. the map is untwisted.  Zero-area cells count toward
    neither sign.
    """
    signed = _signed_areas(lattice, w)
    pos = int(np.sum(signed > 0.0))
    neg = int(np.sum(signed < 0.0))
    return min(pos, neg), signed.size


def sample_metrics(lattice: Lattice, w: WeightMatrix, iteration: int,
                   total_area: float = 1.0) -> MetricsSample:
    """One row of the metrics time series at the given iteration."""
    flips, _ = topology_twist_indicator(lattice, w)
    return MetricsSample(
        iteration=int(iteration),
        unused_space=unused_space(lattice, w, total_area),
        avg_skew=average_skew(lattice, w),
        cell_dev_all=cell_size_deviation(lattice, w, include_edges=True),
        cell_dev_interior=cell_size_deviation(lattice, w, include_edges=False),
        twist_flips=flips,
    )


METRICS_HEADER = ["iteration", "unused_space", "avg_skew",
                  "cell_dev_all", "cell_dev_interior", "twist_flips"]


def write_metrics_csv(path, samples: list[MetricsSample]) -> None:
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_HEADER)
        for s in samples:
            writer.writerow([s.iteration, repr(s.unused_space), repr(s.avg_skew),
                             repr(s.cell_dev_all), repr(s.cell_dev_interior),
                             s.twist_flips])


def read_metrics_csv(path) -> list[MetricsSample]:
    path = Path(path)
    out = []
    with path.open("r", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected metrics header {header!r}")
        for row in reader:
            if not row:
                continue
            out.append(MetricsSample(int(row[0]), float(row[1]), float(row[2]),
                                     float(row[3]), float(row[4]), int(row[5])))
    return out
