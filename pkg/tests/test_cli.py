"""Command line front end: config parsing, outputs, reruns, failures."""

from __future__ import annotations

import hashlib
import json

import pytest

from stokesdarcy.cli import CliError, load_run_config, main
from stokesdarcy.io import read_csv


def write_config(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


CELL_INI = """\
[case]
preset = 1
configuration = C2

[discretization]
cell_resolution = 10
"""

ICDD_INI = """\
[case]
preset = 1
configuration = C1
ell = 0.1

[discretization]
order = 1
hx = 0.1

[solver]
tolerance = 1e-10
"""


class TestLoadRunConfig:
    def test_unknown_entries_listed(self, tmp_path):
        path = write_config(
            tmp_path,
            "[case]\npreset = 1\ntypo_key = 3\n\n[mystery]\nx = 1\n",
        )
        with pytest.raises(CliError, match="unknown configuration entries"):
            load_run_config(path)
        try:
            load_run_config(path)
        except CliError as err:
            message = str(err)
        assert "[case] typo_key" in message
        assert "[mystery]" in message

    def test_missing_file(self, tmp_path):
        with pytest.raises(CliError, match="cannot read config"):
            load_run_config(tmp_path / "absent.ini")

    def test_syntax_error(self, tmp_path):
        path = write_config(tmp_path, "case]\npreset\n")
        with pytest.raises(CliError, match="config syntax error"):
            load_run_config(path)

    def test_missing_required_key(self, tmp_path):
        config = load_run_config(write_config(tmp_path, "[case]\nell = 0.1\n"))
        with pytest.raises(CliError, match=r"missing required key \[case\] preset"):
            config.preset()

    def test_bad_cast(self, tmp_path):
        config = load_run_config(
            write_config(tmp_path, "[case]\npreset = 1\nell = fast\n")
        )
        with pytest.raises(CliError, match=r"bad value for \[case\] ell"):
            config.ell()

    def test_configuration_and_s_hat_conflict(self, tmp_path):
        config = load_run_config(
            write_config(
                tmp_path, "[case]\npreset = 1\nconfiguration = C1\ns_hat = 0.7\n"
            )
        )
        with pytest.raises(CliError, match="not both"):
            config.configuration(need_mesh=False)

    def test_circle_configuration_rejected_for_meshing(self, tmp_path):
        config = load_run_config(
            write_config(tmp_path, "[case]\npreset = 1\nconfiguration = C3\n")
        )
        with pytest.raises(CliError, match="square"):
            config.configuration(need_mesh=True)

    def test_custom_s_hat_builds_configuration(self, tmp_path):
        config = load_run_config(
            write_config(tmp_path, "[case]\npreset = 1\ns_hat = 0.7\n")
        )
        porous = config.configuration(need_mesh=True)
        assert porous.size_ratio == pytest.approx(0.7)
        assert porous.porosity == pytest.approx(1.0 - 0.49)

    def test_inline_comments_ignored(self, tmp_path):
        config = load_run_config(
            write_config(tmp_path, "[case]\npreset = 1  # lid driven\n")
        )
        assert config.preset().identifier == 1


class TestCellCommand:
    def test_outputs_and_manifest(self, tmp_path, capsys):
        config_path = write_config(tmp_path, CELL_INI)
        out = tmp_path / "out"
        code = main(["cell", "--config", str(config_path), "--out", str(out)])
        assert code == 0
        assert "cell: s_hat=0.6" in capsys.readouterr().out
        header, rows = read_csv(out / "cell.csv")
        assert header[:2] == ["s_hat", "porosity"]
        assert len(rows) == 1
        assert float(rows[0][1]) == pytest.approx(1.0 - 0.36)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "cell"
        assert manifest["outputs"] == ["cell.csv", "manifest.json"]
        digest = hashlib.sha256(config_path.read_text().encode()).hexdigest()
        assert manifest["config_sha256"] == digest
        assert "stokesdarcy" in manifest["versions"]

    def test_rerun_byte_identical(self, tmp_path):
        config_path = write_config(tmp_path, CELL_INI)
        out1, out2 = tmp_path / "one", tmp_path / "two"
        assert main(["cell", "--config", str(config_path), "--out", str(out1)]) == 0
        assert main(["cell", "--config", str(config_path), "--out", str(out2)]) == 0
        for name in ("cell.csv", "manifest.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


class TestIcddCommand:
    def test_outputs(self, tmp_path, capsys):
        config_path = write_config(tmp_path, ICDD_INI)
        out = tmp_path / "out"
        code = main(["icdd", "--config", str(config_path), "--out", str(out)])
        assert code == 0
        log = capsys.readouterr().out
        assert "icdd: interface at y=" in log
        assert "iterations=" in log
        for name in (
            "solution.csv",
            "residuals.csv",
            "stokes.vtk",
            "darcy.vtk",
            "manifest.json",
        ):
            assert (out / name).exists()
        header, rows = read_csv(out / "solution.csv")
        assert header == ["x", "y", "u1", "u2", "p", "domain"]
        assert {r[5] for r in rows} == {"stokes", "darcy"}
        _, res_rows = read_csv(out / "residuals.csv")
        assert float(res_rows[-1][1]) < 1e-10
        manifest = json.loads((out / "manifest.json").read_text())
        # residuals.csv row 0 records the initial residual before iterating
        assert manifest["iterations"]["interface"] == len(res_rows) - 1


class TestFailureModes:
    def test_unknown_key_exits_2_without_outputs(self, tmp_path, capsys):
        config_path = write_config(tmp_path, CELL_INI + "\n[case2]\nz = 1\n")
        out = tmp_path / "out"
        code = main(["cell", "--config", str(config_path), "--out", str(out)])
        assert code == 2
        assert "error:" in capsys.readouterr().err
        assert not out.exists()

    def test_invalid_value_exits_2_without_outputs(self, tmp_path, capsys):
        bad = CELL_INI.replace("configuration = C2", "s_hat = 1.5")
        out = tmp_path / "out"
        code = main(
            ["cell", "--config", str(write_config(tmp_path, bad)), "--out", str(out)]
        )
        assert code == 2
        assert "s_hat" in capsys.readouterr().err
        assert not out.exists()

    def test_unaligned_dns_exits_2(self, tmp_path, capsys):
        ini = (
            "[case]\npreset = 1\nconfiguration = C1\nell = 0.2\n\n"
            "[discretization]\ndns_cells = 5\ndns_order = 1\n"
        )
        out = tmp_path / "out"
        code = main(
            ["dns", "--config", str(write_config(tmp_path, ini)), "--out", str(out)]
        )
        assert code == 2
        assert capsys.readouterr().err.startswith("error:")
        assert not out.exists()


class TestDnsCommand:
    def test_outputs(self, tmp_path, capsys):
        ini = (
            "[case]\npreset = 1\nconfiguration = C2\nell = 0.25\n\n"
            "[discretization]\ndns_cells = 5\ndns_order = 1\n"
        )
        out = tmp_path / "out"
        code = main(
            ["dns", "--config", str(write_config(tmp_path, ini)), "--out", str(out)]
        )
        assert code == 0
        assert "dns:" in capsys.readouterr().out
        header, rows = read_csv(out / "solution.csv")
        assert header == ["x", "y", "u1", "u2", "p", "domain"]
        assert {r[5] for r in rows} == {"dns"}
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["parameters"]["cells"] == 5
        assert (out / "solution.vtk").read_text().startswith(
            "# vtk DataFile Version 3.0"
        )
