import math

import numpy as np
import pytest

from plsomlab.lattice import Lattice, WeightMatrix
from plsomlab.metrics import (Cell, average_skew, cell_area, cell_size_deviation,
                              covered_fraction, density_vs_radius, enumerate_cells,
                              read_metrics_csv, sample_metrics,
                              topology_twist_indicator, unused_space,
                              write_metrics_csv)


def regular_grid(m, n, lo=0.0, hi=1.0):
    """Weights on a regular m x n grid spanning [lo, hi]^2."""
    xs = np.linspace(lo, hi, m)
    ys = np.linspace(lo, hi, n)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return WeightMatrix(np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1))


# --- cells -------------------------------------------------------------------

def test_cell_counts():
    assert len(enumerate_cells(Lattice((2, 2)), regular_grid(2, 2))) == 1
    assert len(enumerate_cells(Lattice((20, 20)), regular_grid(20, 20))) == 361
    assert len(enumerate_cells(Lattice((3, 2)), regular_grid(3, 2))) == 2


def test_cell_corner_ordering():
    # manual enumeration for the 3x2 grid: cells walk the first axis,
    # corners cycle (a,b) (a+1,b) (a+1,b+1) (a,b+1)
    lat = Lattice((3, 2))
    cells = enumerate_cells(lat, regular_grid(3, 2))
    assert cells[0].corner_nodes == (0, 2, 3, 1)
    assert cells[1].corner_nodes == (2, 4, 5, 3)


def test_cells_require_2d():
    with pytest.raises(ValueError):
        enumerate_cells(Lattice((4,)), WeightMatrix(np.zeros((4, 2))))
    with pytest.raises(ValueError):
        enumerate_cells(Lattice((2, 2)), WeightMatrix(np.zeros((4, 3))))


def test_cell_area_unit_square():
    cell = Cell((0, 1, 2, 3), np.array([(0, 0), (1, 0), (1, 1), (0, 1)], float))
    assert cell_area(cell) == 1.0


def test_cell_area_degenerate():
    cell = Cell((0, 1, 2, 3), np.full((4, 2), 0.3))
    assert cell_area(cell) == 0.0


def test_cell_area_rectangle():
    cell = Cell((0, 1, 2, 3), np.array([(0, 0), (2, 0), (2, 1), (0, 1)], float))
    assert cell_area(cell) == 2.0


def test_cell_area_monte_carlo_agreement():
    # oracle: point-in-polygon counting over random convex quadrilaterals
    rng = np.random.default_rng(21)
    for _ in range(10):
        # four sorted angles on an ellipse always give a convex quad
        ang = np.sort(rng.uniform(0.0, 2.0 * np.pi, 4))
        if np.any(np.diff(ang) < 0.3):  # avoid near-degenerate slivers
            continue
        a, b = rng.uniform(0.3, 1.5, 2)
        quad = np.stack([a * np.cos(ang), b * np.sin(ang)], axis=1) + rng.random(2)
        area = cell_area(Cell((0, 1, 2, 3), quad))

        lo = quad.min(axis=0)
        hi = quad.max(axis=0)
        samples = lo + (hi - lo) * rng.random((200_000, 2))
        inside = np.ones(len(samples), dtype=bool)
        for k in range(4):
            a, b = quad[k], quad[(k + 1) % 4]
            cross = ((b[0] - a[0]) * (samples[:, 1] - a[1])
                     - (b[1] - a[1]) * (samples[:, 0] - a[0]))
            inside &= cross >= 0
        mc = inside.mean() * np.prod(hi - lo)
        assert area == pytest.approx(mc, rel=0.01)


# --- unused space ------------------------------------------------------------

def test_unused_space_perfect_tiling():
    lat = Lattice((5, 5))
    assert unused_space(lat, regular_grid(5, 5), 1.0) == pytest.approx(0.0)


def test_unused_space_collapsed_map():
    lat = Lattice((4, 4))
    w = WeightMatrix(np.full((16, 2), 0.5))
    assert unused_space(lat, w, 1.0) == 1.0


def test_unused_space_central_patch():
    lat = Lattice((3, 3))
    w = regular_grid(3, 3, 0.25, 0.75)
    assert unused_space(lat, w, 1.0) == pytest.approx(0.75)
    assert covered_fraction(lat, w, 1.0) == pytest.approx(0.25)


def test_unused_space_needs_positive_area():
    with pytest.raises(ValueError):
        unused_space(Lattice((2, 2)), regular_grid(2, 2), 0.0)


# --- skew ---------------------------------------------------------------------

def test_skew_square_and_rectangle_zero():
    lat = Lattice((2, 2))
    assert average_skew(lat, regular_grid(2, 2)) == pytest.approx(0.0)
    rect = WeightMatrix(np.array([(0, 0), (0, 1), (2, 0), (2, 1)], float))
    assert average_skew(lat, rect) == pytest.approx(0.0)


def test_skew_parallelogram_direct_diagonals():
    # oracle: direct diagonal computation on the stated corners
    corners = np.array([(0, 0), (1, 0), (1.5, 1), (0.5, 1)], float)
    d1 = float(np.linalg.norm(corners[2] - corners[0]))
    d2 = float(np.linalg.norm(corners[3] - corners[1]))
    expected = max(d1, d2) / min(d1, d2) - 1.0
    assert expected == pytest.approx(0.61245155, rel=1e-7)

    lat = Lattice((2, 2))
    # node layout (a,b): (0,0)=corner0, (1,0)=corner1, (1,1)=corner2, (0,1)=corner3
    values = np.empty((4, 2))
    values[lat.node_index((0, 0))] = corners[0]
    values[lat.node_index((1, 0))] = corners[1]
    values[lat.node_index((1, 1))] = corners[2]
    values[lat.node_index((0, 1))] = corners[3]
    assert average_skew(lat, WeightMatrix(values)) == pytest.approx(expected)


def test_skew_degenerate_cells_excluded():
    lat = Lattice((3, 2))
    values = regular_grid(3, 2).values.copy()
    # collapse the second cell onto a single point
    for coord in ((1, 0), (1, 1), (2, 0), (2, 1)):
        values[lat.node_index(coord)] = (0.5, 0.5)
    skew, excluded = average_skew(lat, WeightMatrix(values), with_excluded=True)
    assert excluded == 1
    assert math.isfinite(skew)


# --- cell size deviation -------------------------------------------------------

def test_cell_dev_uniform_zero():
    lat = Lattice((6, 6))
    assert cell_size_deviation(lat, regular_grid(6, 6)) == pytest.approx(0.0)


def test_cell_dev_two_cells_arithmetic():
    # areas 1 and 3: mean 2, mean abs deviation 1, ratio 0.5
    lat = Lattice((3, 2))
    values = np.empty((6, 2))
    values[lat.node_index((0, 0))] = (0, 0)
    values[lat.node_index((0, 1))] = (0, 1)
    values[lat.node_index((1, 0))] = (1, 0)
    values[lat.node_index((1, 1))] = (1, 1)
    values[lat.node_index((2, 0))] = (4, 0)
    values[lat.node_index((2, 1))] = (4, 1)
    assert cell_size_deviation(Lattice((3, 2)), WeightMatrix(values)) == pytest.approx(0.5)


def test_cell_dev_interior_ignores_perturbed_corner():
    lat = Lattice((4, 4))
    values = regular_grid(4, 4).values.copy()
    values[lat.node_index((0, 0))] += (-0.3, -0.25)
    w = WeightMatrix(values)
    dev_all = cell_size_deviation(lat, w, include_edges=True)
    dev_int = cell_size_deviation(lat, w, include_edges=False)
    assert dev_int < dev_all
    assert dev_int == pytest.approx(0.0)  # the single interior cell is untouched


def test_cell_dev_interior_needs_4x4():
    with pytest.raises(ValueError):
        cell_size_deviation(Lattice((3, 3)), regular_grid(3, 3), include_edges=False)


def test_cell_dev_zero_mean_area_rejected():
    w = WeightMatrix(np.full((4, 2), 0.1))
    with pytest.raises(ValueError):
        cell_size_deviation(Lattice((2, 2)), w)


# --- density vs radius ---------------------------------------------------------

def test_density_single_node_at_center():
    w = WeightMatrix(np.array([[0.5, 0.5]]))
    hist = density_vs_radius(w, (0.5, 0.5), 0.1)
    assert hist.counts[0] == 1
    assert hist.counts.sum() == 1


def test_density_circle_lands_in_bin_three():
    # radius 0.35 sits mid-bin, clear of the representability edge at 0.3
    angles = np.linspace(0.0, 2.0 * np.pi, 17)[:-1]
    pts = 0.35 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    hist = density_vs_radius(WeightMatrix(pts), (0.0, 0.0), 0.1)
    assert hist.counts[3] == 16
    assert hist.counts.sum() == 16


def test_density_matches_brute_force_counts():
    rng = np.random.default_rng(2)
    w = WeightMatrix(rng.random((200, 2)))
    center = (0.5, 0.5)
    bw = 0.07
    hist = density_vs_radius(w, center, bw)
    radii = np.linalg.norm(w.values - center, axis=1)
    for k in range(len(hist.counts)):
        brute = int(np.sum((radii >= k * bw) & (radii < (k + 1) * bw)))
        assert hist.counts[k] == brute
        ring = math.pi * ((k + 1) ** 2 - k**2) * bw**2
        assert hist.density[k] == pytest.approx(brute / ring)


# --- twist ---------------------------------------------------------------------

def test_twist_zero_on_regular_grid():
    flips, total = topology_twist_indicator(Lattice((5, 5)), regular_grid(5, 5))
    assert flips == 0
    assert total == 16


def test_twist_detects_swapped_rows():
    lat = Lattice((4, 4))
    values = regular_grid(4, 4).values.reshape(4, 4, 2).copy()
    values[[1, 2]] = values[[2, 1]]  # swap two grid rows: forced fold
    flips, _ = topology_twist_indicator(lat, WeightMatrix(values.reshape(-1, 2)))
    assert flips > 0


# --- metric invariances ----------------------------------------------------------

def test_metrics_invariant_under_translation():
    rng = np.random.default_rng(8)
    lat = Lattice((5, 5))
    values = regular_grid(5, 5).values + rng.normal(0, 0.02, (25, 2))
    w = WeightMatrix(values)
    shifted = WeightMatrix(values + np.array([3.7, -1.2]))
    assert average_skew(lat, shifted) == pytest.approx(average_skew(lat, w))
    assert cell_size_deviation(lat, shifted) == pytest.approx(cell_size_deviation(lat, w))
    assert unused_space(lat, shifted, 2.0) == pytest.approx(unused_space(lat, w, 2.0))


def test_metrics_scaling_behavior():
    rng = np.random.default_rng(9)
    lat = Lattice((5, 5))
    values = regular_grid(5, 5).values + rng.normal(0, 0.02, (25, 2))
    w = WeightMatrix(values)
    s = 2.5
    scaled = WeightMatrix(values * s)
    assert average_skew(lat, scaled) == pytest.approx(average_skew(lat, w))
    assert cell_size_deviation(lat, scaled) == pytest.approx(cell_size_deviation(lat, w))
    assert unused_space(lat, scaled, 4.0 * s**2) == pytest.approx(
        unused_space(lat, w, 4.0))


# --- series csv -------------------------------------------------------------------

def test_metrics_csv_roundtrip(tmp_path):
    lat = Lattice((5, 5))
    samples = [sample_metrics(lat, regular_grid(5, 5), it) for it in (0, 250)]
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, samples)
    header = path.read_text().splitlines()[0]
    assert header == "iteration,unused_space,avg_skew,cell_dev_all,cell_dev_interior,twist_flips"
    assert read_metrics_csv(path) == samples
