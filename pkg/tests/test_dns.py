"""Pore-scale reference solver on perforated geometry."""

from __future__ import annotations

import numpy as np
import pytest

from stokesdarcy.dns import (
    DnsResolution,
    dns_line_set,
    solve_dns,
    trivial_extension,
)
from stokesdarcy.mesh import StructuredMesh, build_perforated_mesh
from stokesdarcy.presets import PRESETS


@pytest.fixture(scope="module")
def solution():
    """Small pore-scale solve: lid cavity, two cell rows, order 1."""
    preset = PRESETS[1]
    lattice = preset.lattice(0.25, 0.6)
    return solve_dns(preset, lattice, DnsResolution(n_per_cell=10, order=1))


class TestResolution:
    def test_defaults(self):
        res = DnsResolution()
        assert res.n_per_cell == 10
        assert res.order == 2

    @pytest.mark.parametrize(
        ("cells", "order"), [(1, 1), (0, 2), (10, 3), (10, 0)]
    )
    def test_invalid_raises(self, cells, order):
        with pytest.raises(ValueError):
            DnsResolution(n_per_cell=cells, order=order)


class TestLineSet:
    def test_uniform_in_band_graded_above(self):
        preset = PRESETS[1]
        lattice = preset.lattice(0.25, 0.6)
        res = DnsResolution(n_per_cell=10, order=1)
        ys = dns_line_set(preset.domain, lattice, res)
        h = 0.25 / 10
        in_band = ys[(ys >= -0.5 - 1e-15) & (ys <= 1e-15)]
        np.testing.assert_allclose(np.diff(in_band), h, rtol=1e-12)
        above = ys[ys >= -1e-15]
        assert np.all(np.diff(above) <= res.h_max_factor * h * (1 + 1e-9))
        assert ys[0] == preset.domain.y0 and ys[-1] == preset.domain.y1


class TestSolution:
    def test_divergence_small(self, solution):
        # The lid speed is order one, so an absolute bound is meaningful.
        assert solution.divergence() < 1e-5

    def test_noslip_on_obstacles(self, solution):
        rim = solution.mesh.obstacle_boundary_nodes
        speeds = np.linalg.norm(solution.velocity.values[rim], axis=1)
        assert speeds.max() < 1e-12

    def test_lid_velocity_attained(self, solution):
        mesh = solution.mesh
        top = mesh.boundary_nodes("top")
        interior = np.abs(mesh.node_coords[top, 0]) < 0.45
        u1 = solution.velocity.values[top][interior, 0]
        assert np.all(u1 > 0.0)

    def test_speed_decays_into_bed(self, solution):
        s0 = solution.mean_speed(0.0)
        s1 = solution.mean_speed(-0.25)
        s2 = solution.mean_speed(-0.5)
        assert s0 > s1 > s2 >= 0.0

    def test_sample_rows_skip_solid_nodes(self, solution):
        rows = solution.sample_rows()
        active = int(solution.mesh.node_active.sum())
        assert len(rows) == active
        assert {r[5] for r in rows} == {"dns"}


class TestTrivialExtension:
    def test_zero_inside_obstacles_match_outside(self, solution):
        mesh = solution.mesh
        full = StructuredMesh(mesh.xs, mesh.ys, mesh.order)
        velocity, pressure = trivial_extension(solution, full)
        solid = ~mesh.node_active
        assert solid.any()
        np.testing.assert_array_equal(velocity.values[solid], 0.0)
        np.testing.assert_array_equal(
            velocity.values[mesh.node_active],
            solution.velocity.values[mesh.node_active],
        )
        # Points inside obstacles now evaluate through full elements.
        center = np.array([[-0.375, -0.375]])
        np.testing.assert_allclose(velocity.eval(center), 0.0, atol=1e-13)
        assert pressure.values.shape == (full.n_nodes,)

    def test_mismatched_host_raises(self, solution):
        mesh = solution.mesh
        other = StructuredMesh(mesh.xs[::2], mesh.ys, mesh.order)
        with pytest.raises(ValueError):
            trivial_extension(solution, other)
