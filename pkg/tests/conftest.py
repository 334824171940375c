"""Shared fixtures: small solved instances reused across test modules."""

from __future__ import annotations

import pytest

from stokesdarcy.homogenize import solve_cell_problem


@pytest.fixture(scope="session")
def cell_small():
    """Coarse unit-cell solution (s_hat = 0.6, 10 elements per edge)."""
    return solve_cell_problem(0.6, resolution=10)
