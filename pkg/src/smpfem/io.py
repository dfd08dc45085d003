"""Output writers: probe CSV, legacy ASCII VTK snapshots and two-column curve files."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .fem_core import Mesh

VTK_CELL = {"hex8": 12, "tet4": 10}


def _num(x: float) -> str:
    return f"{float(x):.17g}"


def _open(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", encoding="ascii", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def write_csv(path, fields, rows) -> Path:
    """Header plus comma-separated rows at 17 significant digits."""
    path = Path(path)
    with _open(path) as fh:
        fh.write(",".join(fields) + "\n")
        for row in rows:
            fh.write(",".join(_num(v) for v in row) + "\n")
    return path


def write_records(path, records) -> Path:
    from .solver import TimeSeriesRecord

    return write_csv(path, TimeSeriesRecord.FIELDS, [r.row() for r in records])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    header = lines[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]]).reshape(-1, len(header))
    return header, data


def write_curve(path, columns: dict[str, np.ndarray]) -> Path:
    """Whitespace-separated columns with a '#' header line (gnuplot-ready)."""
    path = Path(path)
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], float) for k in names])
    with _open(path) as fh:
        fh.write("# " + " ".join(names) + "\n")
        for row in data:
            fh.write(" ".join(_num(v) for v in row) + "\n")
    return path


def write_vtk(path, mesh: Mesh, point_data: dict[str, np.ndarray], title: str = "smpfem") -> Path:
    """Legacy ASCII UNSTRUCTURED_GRID with POINT_DATA scalars (n,) and vectors (n, 3)."""
    path = Path(path)
    cells = [(b.kind, c) for b in mesh.blocks for c in b.conn]
    size = sum(len(c) + 1 for _, c in cells)
    with _open(path) as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for p in mesh.nodes:
            fh.write(" ".join(_num(x) for x in p) + "\n")
        fh.write(f"CELLS {len(cells)} {size}\n")
        for _, c in cells:
            fh.write(f"{len(c)} " + " ".join(str(int(i)) for i in c) + "\n")
        fh.write(f"CELL_TYPES {len(cells)}\n")
        for kind, _ in cells:
            fh.write(f"{VTK_CELL[kind]}\n")
        fh.write(f"POINT_DATA {mesh.n_nodes}\n")
        for name in sorted(point_data):
            arr = np.asarray(point_data[name], float)
            if arr.shape == (mesh.n_nodes,):
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for x in arr:
                    fh.write(_num(x) + "\n")
            elif arr.shape == (mesh.n_nodes, 3):
                fh.write(f"VECTORS {name} double\n")
                for row in arr:
                    fh.write(" ".join(_num(x) for x in row) + "\n")
            else:
                raise ValueError(f"point field '{name}' has shape {arr.shape}, expected ({mesh.n_nodes},) or ({mesh.n_nodes}, 3)")
    return path


def check_vtk(path) -> dict:
    """Format self-check of a legacy file written by ``write_vtk``; returns the counts."""
    toks = Path(path).read_text(encoding="ascii").split("\n")
    if not toks[0].startswith("# vtk DataFile") or toks[2] != "ASCII" or toks[3] != "DATASET UNSTRUCTURED_GRID":
        raise ValueError("not a legacy ASCII unstructured grid")
    i = 4
    _, n_pts, _ = toks[i].split()
    n_pts = int(n_pts)
    for row in toks[i + 1:i + 1 + n_pts]:
        if len(row.split()) != 3:
            raise ValueError("malformed POINTS row")
    i += 1 + n_pts
    _, n_cells, size = toks[i].split()
    n_cells, size = int(n_cells), int(size)
    rows = toks[i + 1:i + 1 + n_cells]
    if sum(len(r.split()) for r in rows) != size:
        raise ValueError("CELLS size field does not match the connectivity")
    for r in rows:
        ids = [int(x) for x in r.split()]
        if ids[0] != len(ids) - 1 or max(ids[1:]) >= n_pts or min(ids[1:]) < 0:
            raise ValueError("cell references a nonexistent point")
    i += 1 + n_cells
    if toks[i] != f"CELL_TYPES {n_cells}":
        raise ValueError("CELL_TYPES count mismatch")
    i += 1 + n_cells
    if toks[i] != f"POINT_DATA {n_pts}":
        raise ValueError("POINT_DATA count mismatch")
    arrays = [t.split()[1] for t in toks[i + 1:] if t.startswith(("SCALARS", "VECTORS"))]
    return {"points": n_pts, "cells": n_cells, "arrays": arrays}
