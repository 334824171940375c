"""Deterministic artifact writers: CSV tables, legacy VTK, manifests.

All floating-point output uses scientific notation with nine
significant digits, so identical inputs always serialize to identical
bytes.  Manifests are JSON with sorted keys and no timestamps.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .mesh import StructuredMesh

#: Fixed float format: nine significant digits, scientific.
FLOAT_FORMAT = "%.8e"


def format_value(value) -> str:
    """Render one CSV cell: fixed-format floats, plain ints and text."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % float(value)
    return str(value)


def write_csv(path, header, rows) -> None:
    """Write a CSV table with a header row and fixed number formatting.

    Parameters
    ----------
    path : path-like
        Output file.
    header : sequence of str
        Column names.
    rows : iterable of sequences
        Row values; floats are formatted with nine significant digits.
    """
    path = Path(path)
    lines = [",".join(str(h) for h in header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path) -> tuple[list, list]:
    """Read back a CSV table written by :func:`write_csv`.

    Returns
    -------
    (header, rows)
        Column names and rows of strings.
    """
    text = Path(path).read_text().strip().split("\n")
    header = text[0].split(",")
    rows = [line.split(",") for line in text[1:]]
    return header, rows


def write_vtk(path, mesh: StructuredMesh, point_data: dict, title: str) -> None:
    """Write a legacy-VTK ASCII rectilinear grid with nodal fields.

    Vector fields (``(n, 2)`` arrays) gain a zero third component;
    scalar fields are written as-is.  On perforated meshes an
    ``active`` cell field records which lattice cells belong to fluid
    elements.

    Parameters
    ----------
    path : path-like
        Output file.
    mesh : StructuredMesh
        Mesh supplying the nodal lattice.
    point_data : dict
        Field name to nodal array (``(n,)`` or ``(n, 2)``).
    title : str
        Dataset title line.
    """
    path = Path(path)
    fmt = FLOAT_FORMAT
    out = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET RECTILINEAR_GRID",
        f"DIMENSIONS {mesh.nnx} {mesh.nny} 1",
        f"X_COORDINATES {mesh.nnx} double",
        " ".join(fmt % v for v in mesh.node_x),
        f"Y_COORDINATES {mesh.nny} double",
        " ".join(fmt % v for v in mesh.node_y),
        "Z_COORDINATES 1 double",
        fmt % 0.0,
        f"POINT_DATA {mesh.n_nodes}",
    ]
    for name, values in point_data.items():
        values = np.asarray(values, dtype=float)
        if values.ndim == 2:
            out.append(f"VECTORS {name} double")
            for row in values:
                out.append(f"{fmt % row[0]} {fmt % row[1]} {fmt % 0.0}")
        else:
            out.append(f"SCALARS {name} double")
            out.append("LOOKUP_TABLE default")
            for v in values:
                out.append(fmt % v)
    if not np.all(mesh.active):
        k = mesh.order
        grid = mesh.active.reshape(mesh.ney, mesh.nex)
        lattice = np.repeat(np.repeat(grid, k, axis=0), k, axis=1)
        out.append(f"CELL_DATA {lattice.size}")
        out.append("SCALARS active int")
        out.append("LOOKUP_TABLE default")
        out.extend(str(int(v)) for v in lattice.ravel())
    path.write_text("\n".join(out) + "\n")


def config_digest(text: str) -> str:
    """SHA-256 hex digest of a configuration file's text."""
    return hashlib.sha256(text.encode()).hexdigest()


def write_manifest(path, payload: dict) -> None:
    """Write a deterministic JSON manifest (sorted keys, no clock).

    Parameters
    ----------
    path : path-like
        Output file.
    payload : dict
        JSON-serializable run description; floats pass through the
        default JSON repr, which is value-stable.
    """
    path = Path(path)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
