"""Pore-scale reference solver.

Solves the viscous flow problem on the full domain with the porous band
resolved obstacle by obstacle: a single Stokes system on a perforated
mesh with no-slip on every obstacle boundary.  The result serves as the
reference against which the homogenized coupled solver is validated.

The mesh is uniform inside the band (so obstacle edges land exactly on
mesh lines) and grades geometrically towards a coarser spacing above
it.  Fields on the perforated mesh evaluate to zero inside obstacles,
realizing the trivial extension of pore-scale fields to the full band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import FemConfig, Field, assemble_stokes, divergence_l2
from .mesh import ObstacleLattice, StructuredMesh, graded_lines
from .mesh import build_perforated_mesh
from .presets import TestCasePreset


@dataclass(frozen=True)
class DnsResolution:
    """Mesh resolution of the pore-scale solve.

    Parameters
    ----------
    n_per_cell : int
        Elements per obstacle-cell edge inside the band.
    order : int
        Nodal order of the discretization.
    h_max_factor : float
        Coarsest vertical spacing above the band, as a multiple of the
        band spacing.
    growth : float
        Geometric grading factor above the band.
    """

    n_per_cell: int = 10
    order: int = 2
    h_max_factor: float = 4.0
    growth: float = 1.35

    def __post_init__(self):
        if self.n_per_cell < 2:
            raise ValueError("need at least two elements per cell edge")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")


def dns_line_set(
    domain, lattice: ObstacleLattice, resolution: DnsResolution
) -> np.ndarray:
    """Vertical mesh lines: uniform over the band, graded above it.

    Parameters
    ----------
    domain : RectDomain
        Full domain; its bottom must coincide with the band bottom.
    lattice : ObstacleLattice
        Obstacle description.
    resolution : DnsResolution
        Spacing parameters.

    Returns
    -------
    ndarray
        Strictly increasing line coordinates from the domain bottom to
        its top, containing every band line.
    """
    band = lattice.band
    h = lattice.period / resolution.n_per_cell
    n_band = lattice.cells_y * resolution.n_per_cell
    lines_band = band.y0 + h * np.arange(n_band + 1)
    lines_band[-1] = band.y1
    if abs(band.y0 - domain.y0) > 1e-12:
        raise ValueError("band must start at the domain bottom")
    if domain.y1 <= band.y1 + 1e-12:
        return lines_band
    above = graded_lines(
        band.y1,
        domain.y1,
        h,
        resolution.h_max_factor * h,
        resolution.growth,
    )
    return np.concatenate([lines_band[:-1], above])


class DnsSolution:
    """Solved pore-scale flow on a perforated mesh.

    Attributes
    ----------
    mesh : StructuredMesh
        Perforated mesh (inactive elements are obstacles).
    velocity, pressure : Field
        Solution fields; both evaluate to zero inside obstacles.
    """

    def __init__(self, system, x, preset, lattice, resolution):
        self.system = system
        self.x = x
        self.preset = preset
        self.lattice = lattice
        self.resolution = resolution
        self.mesh = system.mesh
        self.velocity = system.velocity(x)
        self.pressure = system.pressure(x)

    def mean_speed(self, y: float) -> float:
        """Mean velocity magnitude over the fluid nodes of a mesh line.

        Parameters
        ----------
        y : float
            Height of an existing node line.

        Returns
        -------
        float
            Arithmetic mean of ``|u|`` over the active nodes at that
            height.
        """
        mesh = self.mesh
        row = mesh.line_index(y)
        nodes = row * mesh.nnx + np.arange(mesh.nnx)
        nodes = nodes[mesh.node_active[nodes]]
        speed = np.hypot(
            self.velocity.values[nodes, 0], self.velocity.values[nodes, 1]
        )
        return float(np.mean(speed))

    def divergence(self) -> float:
        """L2 norm of the velocity divergence (consistency diagnostic)."""
        return divergence_l2(self.velocity)

    def sample_rows(self):
        """Nodal samples ``(x, y, u1, u2, p, domain)`` for export.

        Solid (inactive) nodes are skipped; the domain tag is ``"dns"``.
        """
        mesh = self.mesh
        n = mesh.n_nodes
        coords = mesh.node_coords
        rows = []
        for i in np.flatnonzero(mesh.node_active):
            rows.append(
                (
                    coords[i, 0],
                    coords[i, 1],
                    self.x[i],
                    self.x[i + n],
                    self.x[i + 2 * n],
                    "dns",
                )
            )
        rows.sort(key=lambda r: (r[1], r[0]))
        return rows


def solve_dns(
    preset: TestCasePreset,
    lattice: ObstacleLattice,
    resolution: DnsResolution = DnsResolution(),
) -> DnsSolution:
    """Solve the pore-scale problem of a preset over an obstacle lattice.

    Parameters
    ----------
    preset : TestCasePreset
        Driving scenario; supplies domain, forces and exterior data.
    lattice : ObstacleLattice
        Obstacle array filling the porous band of the preset.
    resolution : DnsResolution
        Mesh resolution parameters.

    Returns
    -------
    DnsSolution
    """
    mesh = build_perforated_mesh(
        preset.domain,
        lattice,
        resolution.n_per_cell,
        order=resolution.order,
        y_lines=dns_line_set(preset.domain, lattice, resolution),
    )
    config = FemConfig(order=resolution.order)
    system = assemble_stokes(
        mesh,
        config,
        mu=preset.mu,
        f=preset.force,
        bc=preset.dns_bc(),
        null_mean_pressure=preset.pin_pressure,
    )
    x = system.solve()
    return DnsSolution(system, x, preset, lattice, resolution)


def trivial_extension(
    solution: DnsSolution, full_mesh: StructuredMesh
) -> tuple[Field, Field]:
    """Rebind the pore-scale fields to an unperforated twin mesh.

    The perforated mesh already stores zeros at solid nodes, so the
    extension only re-hosts the nodal arrays on a mesh whose elements
    are all active, making the fields evaluable across obstacles.

    Parameters
    ----------
    solution : DnsSolution
        Solved pore-scale flow.
    full_mesh : StructuredMesh
        Mesh with the same nodal lattice and order but no inactive
        elements.

    Returns
    -------
    (Field, Field)
        Velocity and pressure on the full mesh.

    Raises
    ------
    ValueError
        If the lattices differ or the full mesh has inactive elements.
    """
    src = solution.mesh
    if full_mesh.order != src.order:
        raise ValueError("order mismatch")
    if not (
        np.array_equal(full_mesh.xs, src.xs)
        and np.array_equal(full_mesh.ys, src.ys)
    ):
        raise ValueError("meshes do not share a nodal lattice")
    if not np.all(full_mesh.active):
        raise ValueError("target mesh must have no inactive elements")
    order = src.order
    vel = Field(full_mesh, solution.velocity.values.copy(), order)
    pre = Field(full_mesh, solution.pressure.values.copy(), order)
    return vel, pre
