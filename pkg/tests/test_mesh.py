"""Structured meshes, graded line sets and perforated geometry."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stokesdarcy.mesh import (
    ObstacleLattice,
    RectDomain,
    StructuredMesh,
    build_perforated_mesh,
    build_rect_mesh,
    extract_interface_nodes,
    graded_lines,
    overlap_line_set,
)


class TestRectDomain:
    def test_extents(self):
        dom = RectDomain(-0.5, 0.5, -0.5, 1.0)
        assert dom.width == 1.0
        assert dom.height == 1.5
        assert dom.area == 1.5

    @pytest.mark.parametrize(
        ("x0", "x1", "y0", "y1"),
        [(0.0, 0.0, 0.0, 1.0), (0.0, 1.0, 1.0, 1.0), (1.0, 0.0, 0.0, 1.0)],
    )
    def test_degenerate_raises(self, x0, x1, y0, y1):
        with pytest.raises(ValueError, match="degenerate"):
            RectDomain(x0, x1, y0, y1)

    def test_contains_with_slack(self):
        dom = RectDomain(0.0, 1.0, 0.0, 1.0)
        assert bool(dom.contains(0.5, 0.5))
        assert not bool(dom.contains(1.1, 0.5))
        assert bool(dom.contains(1.05, 0.5, tol=0.1))


class TestStructuredMesh:
    @pytest.mark.parametrize("order", [1, 2])
    def test_node_lattice(self, order):
        mesh = build_rect_mesh(RectDomain(0.0, 1.0, 0.0, 2.0), 0.25, order=order)
        assert mesh.nex == 4 and mesh.ney == 8
        assert mesh.nnx == order * 4 + 1
        assert mesh.nny == order * 8 + 1
        assert mesh.n_nodes == mesh.nnx * mesh.nny
        assert mesh.node_coords.shape == (mesh.n_nodes, 2)
        np.testing.assert_allclose(
            mesh.node_x, np.linspace(0.0, 1.0, mesh.nnx), atol=1e-15
        )

    def test_element_areas_sum_to_domain(self):
        xs = np.array([0.0, 0.3, 0.55, 1.0])
        ys = np.array([0.0, 0.5, 0.6, 0.9, 1.0])
        mesh = StructuredMesh(xs, ys, order=2)
        assert mesh.element_areas.sum() == pytest.approx(1.0)
        assert mesh.active_area == pytest.approx(1.0)

    def test_line_index_exact_rows(self):
        mesh = build_rect_mesh(RectDomain(0.0, 1.0, -0.5, 0.5), 0.125, order=2)
        j = mesh.line_index(0.0)
        assert mesh.node_y[j] == pytest.approx(0.0, abs=1e-15)

    def test_line_index_off_grid_raises(self):
        xs = np.array([0.0, 0.5, 1.0])
        ys = np.array([0.0, 0.02, 1.0])
        mesh = StructuredMesh(xs, ys, order=1)
        with pytest.raises(ValueError, match="mesh line"):
            mesh.line_index(0.3)
        with pytest.raises(ValueError, match="mesh line"):
            mesh.line_index(-0.5)

    @pytest.mark.parametrize(
        ("xs", "ys"),
        [
            ([0.0, 1.0, 0.5], [0.0, 1.0]),
            ([0.0], [0.0, 1.0]),
            ([0.0, 1.0], [0.0, 0.0, 1.0]),
        ],
    )
    def test_bad_lines_raise(self, xs, ys):
        with pytest.raises(ValueError):
            StructuredMesh(np.array(xs, dtype=float), np.array(ys, dtype=float))

    def test_boundary_nodes_sides(self):
        mesh = build_rect_mesh(RectDomain(0.0, 1.0, 0.0, 1.0), 0.5, order=1)
        coords = mesh.node_coords
        for side, axis, value in [
            ("left", 0, 0.0),
            ("right", 0, 1.0),
            ("bottom", 1, 0.0),
            ("top", 1, 1.0),
        ]:
            ids = mesh.boundary_nodes(side)
            np.testing.assert_allclose(coords[ids, axis], value, atol=1e-15)


class TestObstacleLattice:
    def test_porosity_exact(self):
        band = RectDomain(-0.5, 0.5, -0.5, 0.0)
        lat = ObstacleLattice(0.1, 0.8, band)
        assert lat.porosity == pytest.approx(1.0 - 0.64, abs=1e-15)
        assert lat.cells_x == 10 and lat.cells_y == 5

    def test_misaligned_band_raises(self):
        band = RectDomain(-0.5, 0.5, -0.5, 0.0)
        with pytest.raises(ValueError, match="integer multiple"):
            ObstacleLattice(0.15, 0.6, band)

    @pytest.mark.parametrize(
        ("s_hat", "n_per_cell", "ok"),
        [
            (0.8, 10, True),
            (0.6, 10, True),
            (0.6, 5, True),
            (0.6, 8, False),
            (0.8, 7, False),
        ],
    )
    def test_edge_offsets_alignment(self, s_hat, n_per_cell, ok):
        band = RectDomain(-0.5, 0.5, -0.5, 0.0)
        lat = ObstacleLattice(0.25, s_hat, band)
        if ok:
            lo, hi = lat.edge_offsets(n_per_cell)
            assert hi - lo == pytest.approx(s_hat * n_per_cell)
        else:
            with pytest.raises(ValueError, match="align"):
                lat.edge_offsets(n_per_cell)


class TestPerforatedMesh:
    @pytest.mark.parametrize("s_hat", [0.6, 0.8])
    def test_inactive_area_matches_solid_fraction(self, s_hat):
        domain = RectDomain(-0.5, 0.5, -0.5, 1.0)
        band = RectDomain(-0.5, 0.5, -0.5, 0.0)
        lat = ObstacleLattice(0.25, s_hat, band)
        mesh = build_perforated_mesh(domain, lat, n_per_cell=10, order=1)
        solid = mesh.element_areas[~mesh.active].sum()
        assert solid == pytest.approx(band.area * s_hat**2, rel=1e-12)

    def test_obstacle_boundary_nodes_on_edges(self):
        domain = RectDomain(-0.5, 0.5, -0.5, 0.5)
        band = RectDomain(-0.5, 0.5, -0.5, 0.0)
        lat = ObstacleLattice(0.5, 0.6, band)
        mesh = build_perforated_mesh(domain, lat, n_per_cell=10, order=2)
        ids = mesh.obstacle_boundary_nodes
        assert ids.size > 0
        x, y = mesh.node_coords[ids, 0], mesh.node_coords[ids, 1]
        # All obstacle-boundary nodes must lie inside the band.
        assert np.all((y >= band.y0 - 1e-12) & (y <= band.y1 + 1e-12))
        # Each node sits on the rim of its cell's centered square.
        fx = (x - band.x0) / lat.period
        fy = (y - band.y0) / lat.period
        lx = np.minimum(fx - np.floor(fx + 1e-12), np.ceil(fx - 1e-12) - fx)
        ly = np.minimum(fy - np.floor(fy + 1e-12), np.ceil(fy - 1e-12) - fy)
        edge = (1.0 - lat.s_hat) / 2.0
        on_rim = (
            (np.abs(lx - edge) < 1e-9) & (ly >= edge - 1e-9)
        ) | ((np.abs(ly - edge) < 1e-9) & (lx >= edge - 1e-9))
        assert np.all(on_rim)

    def test_fully_active_above_band(self):
        domain = RectDomain(-0.5, 0.5, -0.5, 1.0)
        band = RectDomain(-0.5, 0.5, -0.5, 0.0)
        lat = ObstacleLattice(0.25, 0.6, band)
        mesh = build_perforated_mesh(domain, lat, n_per_cell=5, order=1)
        _, ey = mesh._element_grid_indices()
        above = mesh.ys[ey] >= band.y1 - 1e-12
        assert mesh.active[above].all()

    def test_band_width_mismatch_raises(self):
        domain = RectDomain(-0.5, 0.5, -0.5, 1.0)
        band = RectDomain(-0.4, 0.5, -0.5, 0.0)
        with pytest.raises(ValueError):
            lat = ObstacleLattice(0.3, 0.6, band)
            build_perforated_mesh(domain, lat, n_per_cell=5, order=1)


class TestInterfaceNodes:
    def test_sorted_and_on_line(self):
        mesh = build_rect_mesh(RectDomain(0.0, 1.0, -0.5, 0.5), 0.25, order=2)
        ids = extract_interface_nodes(mesh, 0.0)
        assert ids.size == mesh.nnx
        assert np.all(np.diff(mesh.node_coords[ids, 0]) > 0)
        np.testing.assert_allclose(mesh.node_coords[ids, 1], 0.0, atol=1e-15)


class TestGradedLines:
    @given(
        h_first=st.floats(0.01, 0.2),
        h_max=st.floats(0.2, 0.6),
        growth=st.floats(1.05, 2.0),
    )
    def test_monotone_capped_and_exact_ends(self, h_first, h_max, growth):
        lines = graded_lines(0.0, 2.0, h_first, h_max, growth)
        assert lines[0] == 0.0 and lines[-1] == 2.0
        gaps = np.diff(lines)
        assert np.all(gaps > 0)
        assert np.all(gaps <= h_max * (1 + 1e-9))

    def test_growth_bounded(self):
        lines = graded_lines(0.0, 5.0, 0.01, 1.0, growth=1.35)
        gaps = np.diff(lines)
        ratios = gaps[1:] / gaps[:-1]
        assert np.all(ratios <= 1.35 * (1 + 1e-9))

    def test_short_interval_two_lines(self):
        lines = graded_lines(0.0, 0.005, 0.01, 0.1)
        np.testing.assert_allclose(lines, [0.0, 0.005])

    @pytest.mark.parametrize(
        ("start", "stop", "h_first", "h_max", "growth"),
        [
            (1.0, 0.0, 0.1, 0.2, 1.3),
            (0.0, 1.0, -0.1, 0.2, 1.3),
            (0.0, 1.0, 0.3, 0.2, 1.3),
            (0.0, 1.0, 0.1, 0.2, 1.0),
        ],
    )
    def test_bad_arguments_raise(self, start, stop, h_first, h_max, growth):
        with pytest.raises(ValueError):
            graded_lines(start, stop, h_first, h_max, growth)


class TestOverlapLineSet:
    @given(
        delta=st.floats(0.005, 0.2),
        h_fine=st.floats(0.002, 0.05),
    )
    def test_contains_anchor_lines(self, delta, h_fine):
        ys = overlap_line_set(-0.5, 1.0, delta, h_fine, h_max=0.2)
        assert np.all(np.diff(ys) > 0)
        for anchor in (-0.5, -delta, 0.0, 1.0):
            assert np.any(ys == anchor), f"missing line at {anchor}"

    def test_overlap_uniform(self):
        ys = overlap_line_set(-0.5, 1.0, 0.04, 0.01, h_max=0.2)
        inside = ys[(ys >= -0.04 - 1e-15) & (ys <= 1e-15)]
        gaps = np.diff(inside)
        np.testing.assert_allclose(gaps, gaps[0], rtol=1e-12)
        assert gaps[0] <= 0.01 * (1 + 1e-9)

    def test_bad_ordering_raises(self):
        with pytest.raises(ValueError):
            overlap_line_set(-0.5, 1.0, 0.6, 0.01, h_max=0.2)
