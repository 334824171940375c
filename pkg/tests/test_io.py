"""Deterministic CSV, VTK and manifest serialization."""

from __future__ import annotations

import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stokesdarcy.io import (
    FLOAT_FORMAT,
    config_digest,
    format_value,
    read_csv,
    write_csv,
    write_manifest,
    write_vtk,
)
from stokesdarcy.mesh import (
    ObstacleLattice,
    RectDomain,
    build_perforated_mesh,
    build_rect_mesh,
)


class TestFormatValue:
    @pytest.mark.parametrize(
        ("value", "expected"),
        [
            (True, "true"),
            (False, "false"),
            (np.bool_(True), "true"),
            (7, "7"),
            (np.int64(-3), "-3"),
            (0.5, "5.00000000e-01"),
            (np.float64(1.0 / 3.0), "3.33333333e-01"),
            (-2.5e-11, "-2.50000000e-11"),
            ("stokes", "stokes"),
        ],
    )
    def test_rendering_table(self, value, expected):
        assert format_value(value) == expected

    @given(value=st.floats(-1e12, 1e12, allow_nan=False))
    @settings(max_examples=50)
    def test_floats_have_nine_significant_digits(self, value):
        text = format_value(value)
        assert text == FLOAT_FORMAT % value
        mantissa = text.split("e")[0].replace("-", "").replace(".", "")
        assert len(mantissa) == 9


class TestCsv:
    def test_exact_bytes(self, tmp_path):
        path = tmp_path / "table.csv"
        write_csv(path, ["a", "b", "c"], [(1, 0.5, "x"), (2, -1.0, "y")])
        assert path.read_text() == (
            "a,b,c\n1,5.00000000e-01,x\n2,-1.00000000e+00,y\n"
        )

    def test_roundtrip(self, tmp_path):
        path = tmp_path / "table.csv"
        rows = [(1, 2.5e-3, "s"), (2, 3.25, "d")]
        write_csv(path, ["i", "v", "tag"], rows)
        header, back = read_csv(path)
        assert header == ["i", "v", "tag"]
        assert [r[2] for r in back] == ["s", "d"]
        assert float(back[0][1]) == pytest.approx(2.5e-3)

    def test_rerun_byte_identical(self, tmp_path):
        rows = [(k, np.sin(k)) for k in range(20)]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(p1, ["k", "v"], rows)
        write_csv(p2, ["k", "v"], rows)
        assert p1.read_bytes() == p2.read_bytes()


class TestVtk:
    def _full_mesh(self):
        return build_rect_mesh(RectDomain(0.0, 1.0, 0.0, 0.5), 0.25, order=2)

    def test_structure_and_counts(self, tmp_path):
        mesh = self._full_mesh()
        rng = np.random.default_rng(0)
        data = {
            "velocity": rng.standard_normal((mesh.n_nodes, 2)),
            "pressure": rng.standard_normal(mesh.n_nodes),
        }
        path = tmp_path / "out.vtk"
        write_vtk(path, mesh, data, "test dataset")
        lines = path.read_text().splitlines()
        assert lines[0] == "# vtk DataFile Version 3.0"
        assert lines[1] == "test dataset"
        assert lines[2] == "ASCII"
        assert lines[3] == "DATASET RECTILINEAR_GRID"
        assert lines[4] == f"DIMENSIONS {mesh.nnx} {mesh.nny} 1"
        assert f"POINT_DATA {mesh.n_nodes}" in lines
        vec = lines.index("VECTORS velocity double")
        # Three components per point, third identically zero.
        first = lines[vec + 1].split()
        assert len(first) == 3 and float(first[2]) == 0.0
        assert "SCALARS pressure double" in lines
        assert "CELL_DATA" not in path.read_text()

    def test_active_mask_written_for_perforated(self, tmp_path):
        band = RectDomain(0.0, 1.0, 0.0, 0.5)
        lattice = ObstacleLattice(0.5, 0.6, band)
        mesh = build_perforated_mesh(
            RectDomain(0.0, 1.0, 0.0, 1.0), lattice, n_per_cell=5, order=2
        )
        path = tmp_path / "holes.vtk"
        write_vtk(path, mesh, {"p": np.zeros(mesh.n_nodes)}, "holes")
        text = path.read_text()
        n_cells = (mesh.nnx - 1) * (mesh.nny - 1)
        assert f"CELL_DATA {n_cells}" in text
        tail = text.split("LOOKUP_TABLE default")[-1].split()
        assert set(tail) == {"0", "1"}
        assert tail.count("0") == mesh.order**2 * int((~mesh.active).sum())

    def test_vector_third_component_zero_everywhere(self, tmp_path):
        mesh = self._full_mesh()
        data = {"velocity": np.ones((mesh.n_nodes, 2))}
        path = tmp_path / "v.vtk"
        write_vtk(path, mesh, data, "v")
        lines = path.read_text().splitlines()
        start = lines.index("VECTORS velocity double") + 1
        for line in lines[start : start + mesh.n_nodes]:
            assert line.split()[2] == FLOAT_FORMAT % 0.0


class TestManifest:
    def test_sorted_and_stable(self, tmp_path):
        a = {"zeta": 1, "alpha": {"b": 2.5, "a": [1, 2]}}
        b = {"alpha": {"a": [1, 2], "b": 2.5}, "zeta": 1}
        pa, pb = tmp_path / "a.json", tmp_path / "b.json"
        write_manifest(pa, a)
        write_manifest(pb, b)
        assert pa.read_bytes() == pb.read_bytes()
        assert json.loads(pa.read_text()) == a

    def test_config_digest_is_sha256(self):
        text = "[case]\npreset = 1\n"
        assert config_digest(text) == hashlib.sha256(text.encode()).hexdigest()
