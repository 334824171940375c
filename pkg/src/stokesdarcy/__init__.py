"""Coupled free-flow and porous-media flow on structured meshes.

The package solves a two-dimensional channel-over-porous-bed problem
three ways: a pore-scale direct simulation on the perforated geometry,
a homogenized two-domain model coupled through an overlapping
interface-control formulation, and the unit-cell problems that supply
the effective permeability.  Validation utilities compare the coupled
model against the pore-scale reference and estimate convergence rates
in the microstructure period.
"""

__version__ = "0.1.0"
