"""Output-space grid, weight storage, winner search, and weight initialization.

The node grid is rectangular with an arbitrary number of output dimensions.
Node indices and grid coordinates are related by the row-major (C-order)
bijection, so index 0 is the grid origin and the last coordinate varies
fastest.  All randomness flows through numpy's PCG64 generator: see
``rng_streams`` for how per-purpose streams are derived from one seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

GRID_METRICS = ("euclidean", "manhattan")


def rng_streams(seed: int, n: int) -> list[np.random.Generator]:
    """Derive ``n`` independent PCG64 generators from one integer seed.

    Stream ``k`` is ``np.random.Generator(PCG64(SeedSequence(seed).spawn(n)[k]))``.
    Reproducing a run therefore needs only the seed and the documented draw
    order; no generator state is shared between streams.
    """
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass(frozen=True)
class Lattice:
    """Rectangular node grid in output space.

    Parameters
    ----------
    extents : tuple of int
        Number of nodes along each output dimension, all >= 1.
    grid_metric : str
        Distance measure on the grid, "euclidean" or "manhattan".
    """

    extents: tuple[int, ...]
    grid_metric: str = "euclidean"

    def __post_init__(self):
        if len(self.extents) == 0:
            raise ValueError("lattice needs at least one extent")
        ext = tuple(int(e) for e in self.extents)
        if any(e < 1 for e in ext):
            raise ValueError(f"extents must be >= 1, got {self.extents}")
        object.__setattr__(self, "extents", ext)
        if self.grid_metric not in GRID_METRICS:
            raise ValueError(
                f"grid_metric must be one of {GRID_METRICS}, got {self.grid_metric!r}"
            )

    @property
    def ndim(self) -> int:
        return len(self.extents)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.extents))

    @cached_property
    def coords(self) -> np.ndarray:
        """(node_count, ndim) float array of grid coordinates, row-major order."""
        idx = np.unravel_index(np.arange(self.node_count), self.extents)
        return np.stack(idx, axis=1).astype(float)

    def node_coord(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.node_count:
            raise IndexError(f"node index {index} out of range [0, {self.node_count})")
        return tuple(int(c) for c in np.unravel_index(index, self.extents))

    def node_index(self, coord) -> int:
        coord = tuple(int(c) for c in coord)
        if len(coord) != self.ndim:
            raise ValueError(f"coordinate {coord} has wrong dimension")
        if any(not 0 <= c < e for c, e in zip(coord, self.extents)):
            raise IndexError(f"coordinate {coord} outside extents {self.extents}")
        return int(np.ravel_multi_index(coord, self.extents))


def grid_distance(lattice: Lattice, i: int, c: int) -> float:
    """Distance between nodes ``i`` and ``c`` measured on the grid."""
    a = np.asarray(lattice.node_coord(i), dtype=float)
    b = np.asarray(lattice.node_coord(c), dtype=float)
    if lattice.grid_metric == "manhattan":
        return float(np.abs(a - b).sum())
    return float(np.linalg.norm(a - b))


def grid_distances_from(lattice: Lattice, c: int) -> np.ndarray:
    """Vector of grid distances from every node to node ``c``.

    Used by the trainers each step; avoids materializing the full
    node-by-node distance matrix for large maps.
    """
    delta = lattice.coords - lattice.coords[c]
    if lattice.grid_metric == "manhattan":
        return np.abs(delta).sum(axis=1)
    return np.sqrt((delta * delta).sum(axis=1))


@dataclass
class WeightMatrix:
    """Per-node weight vectors in input space; the mutable learned state.

    ``values`` has shape (node_count, input_dim) and must be finite.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("weights contain non-finite entries")
        self.values = v

    @property
    def node_count(self) -> int:
        return self.values.shape[0]

    @property
    def input_dim(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "WeightMatrix":
        return WeightMatrix(self.values.copy())


def find_winner(x, w: WeightMatrix) -> tuple[int, float]:
    """Index of the node whose weight is nearest ``x`` (L2), and that distance.

    Ties are broken toward the lowest node index.
    """
    if w.node_count == 0:
        raise ValueError("weight matrix has no nodes")
    x = np.asarray(x, dtype=float)
    if x.shape != (w.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({w.input_dim},)")
    diff = w.values - x
    d2 = np.einsum("ij,ij->i", diff, diff)
    c = int(np.argmin(d2))  # argmin returns the first minimum: lowest index
    return c, float(np.sqrt(d2[c]))


@dataclass(frozen=True)
class UniformBox:
    """Initialization scheme: i.i.d. uniform draws over [lo, hi] per component.

    ``lo``/``hi`` may be scalars or per-component arrays.
    """

    lo: object = 0.4
    hi: object = 0.6

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if np.any(lo > hi):
            raise ValueError(f"uniform_box needs lo <= hi, got lo={self.lo}, hi={self.hi}")


@dataclass(frozen=True)
class Constant:
    """Initialization scheme: every weight component equals ``value``."""

    value: float = 0.5


def init_weights(lattice: Lattice, input_dim: int, seed: int, scheme=None) -> WeightMatrix:
    """Deterministic weight initialization.

    The default scheme is ``UniformBox(0.4, 0.6)``: a small central region so
    that comparison experiments start from an identical, hard configuration.
    Draw order: a single ``rng.random((node_count, input_dim))`` call on
    ``np.random.default_rng(seed)``, scaled into the box.
    """
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    if scheme is None:
        scheme = UniformBox()
    n = lattice.node_count
    if isinstance(scheme, Constant):
        return WeightMatrix(np.full((n, input_dim), float(scheme.value)))
    if isinstance(scheme, UniformBox):
        lo = np.broadcast_to(np.asarray(scheme.lo, dtype=float), (input_dim,))
        hi = np.broadcast_to(np.asarray(scheme.hi, dtype=float), (input_dim,))
        rng = np.random.default_rng(seed)
        u = rng.random((n, input_dim))
        return WeightMatrix(lo + (hi - lo) * u)
    raise TypeError(f"unknown initialization scheme {scheme!r}")


def write_weights_csv(path, w: WeightMatrix) -> None:
    """Write weights as ``node_index,w_0,...,w_{d-1}`` with full precision."""
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["node_index"] + [f"w_{k}" for k in range(w.input_dim)])
        for i in range(w.node_count):
            writer.writerow([i] + [repr(float(v)) for v in w.values[i]])


def read_weights_csv(path) -> WeightMatrix:
    path = Path(path)
    with path.open("r", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if not header or header[0].strip() != "node_index":
            raise ValueError(f"{path}: not a weights CSV (header {header!r})")
        dim = len(header) - 1
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != dim + 1:
                raise ValueError(f"{path}: row has {len(row)} fields, expected {dim + 1}")
            rows.append((int(row[0]), [float(v) for v in row[1:]]))
    rows.sort(key=lambda r: r[0])
    if [r[0] for r in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: node indices are not 0..{len(rows) - 1}")
    return WeightMatrix(np.array([r[1] for r in rows], dtype=float))
