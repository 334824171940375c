"""Configuration-driven command line for the coupled-flow toolkit.

Five subcommands cover the workflow: ``cell`` homogenizes one unit
cell, ``icdd`` runs one coupled solve, ``dns`` runs one pore-scale
solve, ``validate`` runs the period-refinement study and ``sweep``
scans the layer thickness.  Every run is described by a flat INI file
  (``key = value`` under a few fixed sections); unknown sections or
keys abort before any output is written.  Outputs are deterministic:
identical configurations yield byte-identical files.
"""

from __future__ import annotations

import argparse
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from configparser import ConfigParser
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dns import DnsResolution, solve_dns
from .fem import FemConfig
from .homogenize import delta_star, permeability_dimensional, solve_cell_problem
from .icdd import IcddGeometry, IcddPhysics, assemble_problem, icdd_solve
from .io import config_digest, write_csv, write_manifest, write_vtk
from .linalg import KrylovConfig
from .presets import CONFIGURATIONS, PRESETS, PorousConfiguration
from .validate import convergence_study, delta_sweep


class CliError(Exception):
    """Configuration or geometry problem that aborts the run."""


#: Allowed sections and keys of the run configuration.
SCHEMA: dict[str, tuple[str, ...]] = {
    "case": ("preset", "configuration", "s_hat", "ell"),
    "discretization": (
        "order",
        "hx",
        "cell_resolution",
        "dns_cells",
        "dns_order",
    ),
    "solver": ("tolerance", "max_iterations", "seed"),
    "study": ("ells", "factors"),
}


class RunConfig:
    """Validated run configuration.

    Parameters
    ----------
    parser : ConfigParser
        Parsed INI content, already schema-checked.
    text : str
        Raw file text (hashed into the manifest).
    """

    def __init__(self, parser: ConfigParser, text: str):
        self._p = parser
        self.digest = config_digest(text)

    def _get(self, section, key, cast, default=None, required=False):
        if not self._p.has_option(section, key):
            if required:
                raise CliError(f"missing required key [{section}] {key}")
            return default
        raw = self._p.get(section, key)
        try:
            return cast(raw)
        except ValueError as err:
            raise CliError(f"bad value for [{section}] {key}: {raw!r}") from err

    # -- case --------------------------------------------------------------

    def preset(self):
        pid = self._get("case", "preset", int, required=True)
        if pid not in PRESETS:
            raise CliError(f"unknown preset {pid}; choose from 1, 2, 3")
        return PRESETS[pid]

    def configuration(self, need_mesh: bool) -> PorousConfiguration:
        """Resolve the microstructure row or a custom square obstacle."""
        name = self._get("case", "configuration", str)
        s_hat = self._get("case", "s_hat", float)
        if name is not None and s_hat is not None:
            raise CliError("give either [case] configuration or s_hat, not both")
        if name is not None:
            if name not in CONFIGURATIONS:
                raise CliError(
                    f"unknown configuration {name!r}; choose from "
                    + ", ".join(CONFIGURATIONS)
                )
            cfg = CONFIGURATIONS[name]
            if need_mesh and not cfg.meshable:
                raise CliError(
                    f"configuration {name} has circular obstacles and cannot "
                    "be meshed; use a square row or give s_hat"
                )
            return cfg
        if s_hat is None:
            raise CliError("need [case] configuration or s_hat")
        if not 0.0 < s_hat < 1.0:
            raise CliError(f"s_hat must lie in (0, 1), got {s_hat}")
        return PorousConfiguration(
            name=f"square(s_hat={s_hat:g})",
            shape="square",
            size_ratio=s_hat,
            porosity=1.0 - s_hat**2,
            k_hat=float("nan"),
        )

    def ell(self) -> float:
        ell = self._get("case", "ell", float, required=True)
        if ell <= 0:
            raise CliError(f"ell must be positive, got {ell}")
        return ell

    # -- discretization -----------------------------------------------------

    def fem_config(self) -> FemConfig:
        order = self._get("discretization", "order", int, default=2)
        if order not in (1, 2):
            raise CliError(f"order must be 1 or 2, got {order}")
        return FemConfig(order=order)

    def hx(self) -> float:
        hx = self._get("discretization", "hx", float, default=1.0 / 144.0)
        if hx <= 0:
            raise CliError(f"hx must be positive, got {hx}")
        return hx

    def cell_resolution(self) -> int:
        return self._get("discretization", "cell_resolution", int, default=40)

    def dns_resolution(self, default_order: int) -> DnsResolution:
        order = self._get(
            "discretization", "dns_order", int, default=default_order
        )
        cells = self._get("discretization", "dns_cells", int, default=10)
        try:
            return DnsResolution(n_per_cell=cells, order=order)
        except ValueError as err:
            raise CliError(str(err)) from err

    # -- solver --------------------------------------------------------------

    def krylov(self) -> KrylovConfig:
        return KrylovConfig(
            tol=self._get("solver", "tolerance", float, default=1e-8),
            maxiter=self._get("solver", "max_iterations", int, default=200),
            seed=self._get("solver", "seed", int, default=0),
        )

    # -- study ----------------------------------------------------------------

    def _float_list(self, key, default=None, required=False):
        raw = self._get("study", key, str, required=required)
        if raw is None:
            return default
        try:
            values = [float(tok) for tok in raw.replace(",", " ").split()]
        except ValueError as err:
            raise CliError(f"bad value for [study] {key}: {raw!r}") from err
        if not values:
            raise CliError(f"[study] {key} is empty")
        return values

    def ells(self) -> list:
        return self._float_list("ells", required=True)

    def factors(self) -> list:
        return self._float_list("factors", default=[0.5, 1.0, 1.5])


def load_run_config(path) -> RunConfig:
    """Parse and schema-check a run configuration file.

    Raises
    ------
    CliError
        On unreadable files, syntax errors, or unknown sections/keys
        (all unknown names are listed).
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise CliError(f"cannot read config {path}: {err}") from err
    parser = ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except Exception as err:
        raise CliError(f"config syntax error in {path}: {err}") from err
    unknown = []
    for section in parser.sections():
        if section not in SCHEMA:
            unknown.append(f"[{section}]")
            continue
        for key in parser.options(section):
            if key not in SCHEMA[section]:
                unknown.append(f"[{section}] {key}")
    if unknown:
        raise CliError("unknown configuration entries: " + ", ".join(unknown))
    return RunConfig(parser, text)


def _versions() -> dict:
    return {
        "stokesdarcy": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _manifest(config: RunConfig, command, parameters, iterations, outputs):
    return {
        "command": command,
        "config_sha256": config.digest,
        "versions": _versions(),
        "parameters": parameters,
        "iterations": iterations,
        "outputs": sorted(outputs),
    }


def _write_all(out_dir: Path, files: dict) -> None:
    """Write every artifact; called only after all computation is done."""
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, writer in files.items():
        writer(out_dir / name)


def _permeability_for(config, configuration, ell):
    """Dimensional permeability: published constant or fresh cell solve."""
    if np.isfinite(configuration.k_hat):
        return permeability_dimensional(configuration.k_hat, ell), "published"
    cell = solve_cell_problem(
        configuration.size_ratio, resolution=config.cell_resolution()
    )
    return permeability_dimensional(cell.k_scalar(), ell), "computed"


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------


def cmd_cell(config: RunConfig, out_dir: Path, threads: int) -> int:
    configuration = config.configuration(need_mesh=True)
    fem = config.fem_config()
    cell = solve_cell_problem(
        configuration.size_ratio,
        resolution=config.cell_resolution(),
        order=fem.order,
    )
    header = [
        "s_hat",
        "porosity",
        "porosity_quadrature",
        "k_hat_11",
        "k_hat_12",
        "k_hat_21",
        "k_hat_22",
        "delta_star_hat",
    ]
    row = [
        cell.s_hat,
        cell.porosity,
        cell.porosity_quadrature,
        cell.k_hat[0, 0],
        cell.k_hat[0, 1],
        cell.k_hat[1, 0],
        cell.k_hat[1, 1],
        delta_star(cell.porosity, 1.0),
    ]
    files = {
        "cell.csv": lambda p: write_csv(p, header, [row]),
    }
    manifest = _manifest(
        config,
        "cell",
        {
            "s_hat": cell.s_hat,
            "resolution": cell.resolution,
            "order": cell.order,
        },
        {},
        [*files, "manifest.json"],
    )
    files["manifest.json"] = lambda p: write_manifest(p, manifest)
    _write_all(out_dir, files)
    print(
        f"cell: s_hat={cell.s_hat:g} porosity={cell.porosity:.6f} "
        f"k_hat={cell.k_scalar():.6e}"
    )
    return 0


def cmd_icdd(config: RunConfig, out_dir: Path, threads: int) -> int:
    preset = config.preset()
    configuration = config.configuration(need_mesh=False)
    ell = config.ell()
    delta = delta_star(configuration.porosity, ell)
    permeability, k_source = _permeability_for(config, configuration, ell)
    problem = assemble_problem(
        config.fem_config(),
        IcddGeometry(delta=delta, hx=config.hx()),
        IcddPhysics(preset=preset, permeability=permeability),
    )
    result = icdd_solve(problem, config.krylov())
    rows = result.composite.sample_rows()
    residuals = list(enumerate(result.info["residuals"]))
    stokes_fields = {
        "velocity": result.composite.stokes_velocity.values,
        "pressure": result.composite.stokes_pressure.values,
    }
    darcy_fields = {
        "velocity": result.composite.darcy_velocity.values,
        "pressure": result.composite.darcy_pressure.values,
    }
    files = {
        "solution.csv": lambda p: write_csv(
            p, ["x", "y", "u1", "u2", "p", "domain"], rows
        ),
        "residuals.csv": lambda p: write_csv(
            p, ["iteration", "relative_residual"], residuals
        ),
        "stokes.vtk": lambda p: write_vtk(
            p, problem.stokes.mesh, stokes_fields, "free-flow subdomain"
        ),
        "darcy.vtk": lambda p: write_vtk(
            p, problem.darcy.mesh, darcy_fields, "porous subdomain"
        ),
    }
    manifest = _manifest(
        config,
        "icdd",
        {
            "preset": preset.identifier,
            "configuration": configuration.name,
            "ell": ell,
            "delta": delta,
            "permeability": permeability,
            "permeability_source": k_source,
            "matching_velocity": result.matching_velocity,
            "matching_pressure": result.matching_pressure,
        },
        {"interface": result.info["iterations"]},
        [*files, "manifest.json"],
    )
    files["manifest.json"] = lambda p: write_manifest(p, manifest)
    _write_all(out_dir, files)
    print(
        f"icdd: interface at y={-delta:.6e}, iterations="
        f"{result.info['iterations']}, matching residuals "
        f"({result.matching_velocity:.3e}, {result.matching_pressure:.3e})"
    )
    return 0


def cmd_dns(config: RunConfig, out_dir: Path, threads: int) -> int:
    preset = config.preset()
    configuration = config.configuration(need_mesh=True)
    ell = config.ell()
    try:
        lattice = preset.lattice(ell, configuration.size_ratio)
        solution = solve_dns(preset, lattice, config.dns_resolution(2))
    except ValueError as err:
        raise CliError(str(err)) from err
    divergence = solution.divergence()
    rows = solution.sample_rows()
    fields = {
        "velocity": solution.velocity.values,
        "pressure": solution.pressure.values,
    }
    files = {
        "solution.csv": lambda p: write_csv(
            p, ["x", "y", "u1", "u2", "p", "domain"], rows
        ),
        "solution.vtk": lambda p: write_vtk(
            p, solution.mesh, fields, "pore-scale solution"
        ),
    }
    manifest = _manifest(
        config,
        "dns",
        {
            "preset": preset.identifier,
            "configuration": configuration.name,
            "ell": ell,
            "cells": solution.resolution.n_per_cell,
            "order": solution.resolution.order,
            "divergence_l2": divergence,
        },
        {},
        [*files, "manifest.json"],
    )
    files["manifest.json"] = lambda p: write_manifest(p, manifest)
    _write_all(out_dir, files)
    print(f"dns: {solution.system.n_dofs} unknowns, divergence={divergence:.3e}")
    return 0


def _mapper(threads: int, pool_holder: list):
    if threads <= 1:
        return map
    pool = ThreadPoolExecutor(max_workers=threads)
    pool_holder.append(pool)
    return pool.map


def cmd_validate(config: RunConfig, out_dir: Path, threads: int) -> int:
    preset = config.preset()
    configuration = config.configuration(need_mesh=True)
    ells = config.ells()
    pools: list = []
    try:
        study = convergence_study(
            preset,
            configuration,
            ells,
            fem_config=config.fem_config(),
            hx=config.hx(),
            dns_resolution=config.dns_resolution(1),
            krylov=config.krylov(),
            mapper=_mapper(threads, pools),
            progress=lambda msg: print(msg, flush=True),
        )
    except ValueError as err:
        raise CliError(str(err)) from err
    finally:
        for pool in pools:
            pool.shutdown()
    error_rows = [
        (r.configuration, r.ell, metric, value)
        for r in study.reports
        for metric, value in r.errors.items()
    ]
    slope_rows = list(study.slopes.items())
    iterations = {
        f"ell={r.ell:g}": r.iterations for r in study.reports
    }
    files = {
        "errors.csv": lambda p: write_csv(
            p, ["config", "ell", "metric", "value"], error_rows
        ),
        "slopes.csv": lambda p: write_csv(p, ["metric", "slope"], slope_rows),
    }
    manifest = _manifest(
        config,
        "validate",
        {
            "preset": preset.identifier,
            "configuration": configuration.name,
            "ells": ells,
        },
        iterations,
        [*files, "manifest.json"],
    )
    files["manifest.json"] = lambda p: write_manifest(p, manifest)
    _write_all(out_dir, files)
    for metric, slope in study.slopes.items():
        print(f"slope {metric} = {slope:+.3f}")
    return 0


def cmd_sweep(config: RunConfig, out_dir: Path, threads: int) -> int:
    preset = config.preset()
    configuration = config.configuration(need_mesh=True)
    ell = config.ell()
    factors = config.factors()
    pools: list = []
    try:
        sweep = delta_sweep(
            preset,
            configuration,
            ell,
            factors=factors,
            fem_config=config.fem_config(),
            hx=config.hx(),
            dns_resolution=config.dns_resolution(1),
            krylov=config.krylov(),
            mapper=_mapper(threads, pools),
            progress=lambda msg: print(msg, flush=True),
        )
    except ValueError as err:
        raise CliError(str(err)) from err
    finally:
        for pool in pools:
            pool.shutdown()
    rows = [
        (factor, delta, error)
        for factor, delta, error in zip(factors, sweep.deltas, sweep.errors)
    ]
    files = {
        "sweep.csv": lambda p: write_csv(
            p, ["factor", "delta", "error_u_fluid"], rows
        ),
    }
    manifest = _manifest(
        config,
        "sweep",
        {
            "preset": preset.identifier,
            "configuration": configuration.name,
            "ell": ell,
            "delta_star": sweep.delta_star,
            "interior_minimum": sweep.is_interior_minimum(),
        },
        {},
        [*files, "manifest.json"],
    )
    files["manifest.json"] = lambda p: write_manifest(p, manifest)
    _write_all(out_dir, files)
    print(
        f"sweep: delta_star={sweep.delta_star:.6e}, interior minimum: "
        f"{sweep.is_interior_minimum()}"
    )
    return 0


COMMANDS = {
    "cell": cmd_cell,
    "icdd": cmd_icdd,
    "dns": cmd_dns,
    "validate": cmd_validate,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stokes-darcy",
        description=(
            "Coupled free-flow and porous-medium solver with pore-scale "
            "validation"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "cell": "homogenize one unit cell (permeability, porosity)",
        "icdd": "run one coupled two-domain solve",
        "dns": "run one pore-scale reference solve",
        "validate": "period-refinement error study against references",
        "sweep": "scan the overlap thickness around its predicted value",
    }
    for name, help_text in descriptions.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="INI run description")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--threads",
            type=int,
            default=1,
            help="worker threads for independent study members",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_run_config(args.config)
        return COMMANDS[args.command](config, Path(args.out), args.threads)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
