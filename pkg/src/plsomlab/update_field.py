"""Expected-update analysis under an input distribution.

Where a single training step moves a node is a deterministic function of
the input; weighting that displacement by the input's probability density
and integrating over the input region explains which nodes are pulled
hardest, and in which direction, for a frozen map snapshot.  Supported
densities are a uniform box and an axis-aligned Gaussian renormalized over
the box (sampling by discarding out-of-range draws conditions the
distribution on the box, which is the same thing).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np
from scipy.special import erf, ndtr, ndtri

DisplacementFn = Callable[[np.ndarray], np.ndarray]


def interval_probability(z1: float, z2: float, s: float) -> float:
    """Probability that a centered Gaussian falls in [z1, z2].

    Computed as (erf(z2*s/sqrt(2)) - erf(z1*s/sqrt(2))) / 2, where s scales
    for the standard deviation (s = 1/sd).  Infinite endpoints give the
    one- or two-sided limits.
    """
    if z1 > z2:
        raise ValueError(f"need z1 <= z2, got z1={z1}, z2={z2}")
    c = s / math.sqrt(2.0)
    return 0.5 * (erf(z2 * c) - erf(z1 * c))


def _as_box(lo, hi, dim: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (dim,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (dim,)).copy()
    if np.any(lo >= hi):
        raise ValueError(f"degenerate support box lo={lo}, hi={hi}")
    return lo, hi


@dataclass(frozen=True)
class UniformBoxDist:
    """Uniform density over an axis-aligned box."""

    lo: object = 0.0
    hi: object = 1.0
    dim: int = 2

    @property
    def support(self) -> tuple[np.ndarray, np.ndarray]:
        return _as_box(self.lo, self.hi, self.dim)

    def pdf(self, points: np.ndarray) -> np.ndarray:
        lo, hi = self.support
        points = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.all((points >= lo) & (points <= hi), axis=1)
        vol = float(np.prod(hi - lo))
        return np.where(inside, 1.0 / vol, 0.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        lo, hi = self.support
        return lo + (hi - lo) * rng.random((n, self.dim))


@dataclass(frozen=True)
class ClippedGaussian:
    """Axis-aligned Gaussian conditioned on an axis-aligned box.

    Out-of-range components are redrawn (the discard rule), which is
    equivalent to truncating each axis and renormalizing so the density
    integrates to 1 over the box.
    """

    mean: object = 0.5
    sd: float = 0.2
    lo: object = 0.0
    hi: object = 1.0
    dim: int = 2

    def __post_init__(self):
        if self.sd <= 0.0:
            raise ValueError(f"sd must be > 0, got {self.sd}")

    @property
    def support(self) -> tuple[np.ndarray, np.ndarray]:
        return _as_box(self.lo, self.hi, self.dim)

    def _axis_params(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        lo, hi = self.support
        mean = np.broadcast_to(np.asarray(self.mean, dtype=float), (self.dim,))
        z = ndtr((hi - mean) / self.sd) - ndtr((lo - mean) / self.sd)
        return lo, hi, mean, z

    def pdf(self, points: np.ndarray) -> np.ndarray:
        lo, hi, mean, z = self._axis_params()
        points = np.atleast_2d(np.asarray(points, dtype=float))
        u = (points - mean) / self.sd
        phi = np.exp(-0.5 * u * u) / (self.sd * math.sqrt(2.0 * math.pi))
        dens = np.prod(phi / z, axis=1)
        inside = np.all((points >= lo) & (points <= hi), axis=1)
        return np.where(inside, dens, 0.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # Inverse-CDF transform of the documented uniform stream, with
        # per-component redraws for values landing outside the box.
        lo, hi, mean, _ = self._axis_params()
        x = mean + self.sd * ndtri(rng.random((n, self.dim)))
        bad = (x < lo) | (x > hi)
        while np.any(bad):
            k = int(bad.sum())
            x[bad] = (np.broadcast_to(mean, x.shape)[bad]
                      + self.sd * ndtri(rng.random(k)))
            bad = (x < lo) | (x > hi)
        return x


InputDistribution = Union[UniformBoxDist, ClippedGaussian]


@dataclass(frozen=True)
class GridQuadrature:
    """Midpoint rule on an n-by-n grid over the support box."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid quadrature needs n >= 2, got {self.n}")


@dataclass(frozen=True)
class MonteCarloQuadrature:
    """Average over seeded draws from the input distribution."""

    samples: int
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1000:
            raise ValueError(f"monte carlo needs >= 1000 samples, got {self.samples}")


def _grid_centers(dist: InputDistribution, n: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Square centers (n*n, 2), per-axis center vectors, and square area."""
    lo, hi = dist.support
    if lo.size != 2:
        raise ValueError("field operations need a 2-D input space")
    step = (hi - lo) / n
    cx = lo[0] + (np.arange(n) + 0.5) * step[0]
    cy = lo[1] + (np.arange(n) + 0.5) * step[1]
    gx, gy = np.meshgrid(cx, cy, indexing="ij")
    centers = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)
    return centers, np.stack([cx, cy]), float(step[0] * step[1])


@dataclass(frozen=True)
class DisplacementField:
    """Scalar expected-displacement map for one node over an n-by-n grid."""

    node_index: int
    grid_resolution: int
    values: np.ndarray  # (n, n), indexed [ix, iy]


def expected_displacement_map(node: int, displacement: DisplacementFn,
                              dist: InputDistribution, n: int = 100) -> DisplacementField:
    """Per-square ``|step displacement of node| * density`` at square centers.

    ``displacement`` maps an input point to the (node_count, input_dim)
    array of hypothetical single-step updates at a frozen trainer state
    (see frozen_som_displacement / frozen_plsom_displacement).
    """
    if n < 2:
        raise ValueError(f"resolution must be >= 2, got {n}")
    centers, _, _ = _grid_centers(dist, n)
    rho = dist.pdf(centers)
    values = np.empty(centers.shape[0])
    for k, x in enumerate(centers):
        if rho[k] == 0.0:
            values[k] = 0.0
            continue
        values[k] = float(np.linalg.norm(displacement(x)[node])) * rho[k]
    return DisplacementField(node, n, values.reshape(n, n))


def integrated_expected_displacement(displacement: DisplacementFn,
                                     dist: InputDistribution,
                                     quadrature) -> np.ndarray:
    """Expected single-step displacement vector per node.

    Approximates the density-weighted integral of the displacement over the
    input region; grid quadrature uses the midpoint rule, Monte Carlo
    averages the displacement over seeded draws.  Returns
    (node_count, input_dim).
    """
    if isinstance(quadrature, GridQuadrature):
        centers, _, area = _grid_centers(dist, quadrature.n)
        rho = dist.pdf(centers)
        total = None
        for k, x in enumerate(centers):
            if rho[k] == 0.0:
                continue
            contrib = displacement(x) * (rho[k] * area)
            total = contrib if total is None else total + contrib
        if total is None:
            raise ValueError("distribution has zero mass on the quadrature grid")
        return total
    if isinstance(quadrature, MonteCarloQuadrature):
        rng = np.random.default_rng(quadrature.seed)
        draws = dist.sample(rng, quadrature.samples)
        total = displacement(draws[0])
        for x in draws[1:]:
            total = total + displacement(x)
        return total / quadrature.samples
    raise TypeError(f"unknown quadrature {quadrature!r}")


def write_field_csv(path, field: DisplacementField) -> None:
    """Scalar map as ``gx,gy,value`` rows (gx, gy are square indices)."""
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["gx", "gy", "value"])
        n = field.grid_resolution
        for ix in range(n):
            for iy in range(n):
                writer.writerow([ix, iy, repr(float(field.values[ix, iy]))])


def write_vector_field_csv(path, vectors: np.ndarray) -> None:
    """Per-node vector field as ``node_index,vx,vy`` rows."""
    path = Path(path)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["node_index", "vx", "vy"])
        for i, v in enumerate(np.asarray(vectors)):
            writer.writerow([i, repr(float(v[0])), repr(float(v[1]))])
