"""Legacy ASCII VTK and CSV output.

Floats are written with 17 significant digits so that reading a file back
reproduces the in-memory arrays bit for bit.
"""
import csv
import math

import numpy as np

from .errors import DataError

VTK_TETRA = 10
FLOAT_FMT = "%.17g"


def _fmt(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _write_grid(fh, mesh, title):
    fh.write("# vtk DataFile Version 3.0\n")
    fh.write(f"{title}\n")
    fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
    fh.write(f"POINTS {mesh.n_vertices} double\n")
    np.savetxt(fh, mesh.vertices, fmt=FLOAT_FMT)
    nt = mesh.n_tets
    fh.write(f"CELLS {nt} {5 * nt}\n")
    np.savetxt(fh, np.column_stack([np.full(nt, 4), mesh.tets]), fmt="%d")
    fh.write(f"CELL_TYPES {nt}\n")
    np.savetxt(fh, np.full(nt, VTK_TETRA), fmt="%d")


def write_cell_vectors(path, mesh, name, vectors, title="cell vectors"):
    """Unstructured grid with one CELL_DATA vector array (nt, 3)."""
    vectors = np.asarray(vectors, dtype=float)
    if vectors.shape != (mesh.n_tets, 3):
        raise DataError(f"expected ({mesh.n_tets}, 3) cell vectors, got {vectors.shape}")
    with open(path, "w") as fh:
        _write_grid(fh, mesh, title)
        fh.write(f"CELL_DATA {mesh.n_tets}\nVECTORS {name} double\n")
        np.savetxt(fh, vectors, fmt=FLOAT_FMT)


def write_point_scalars(path, mesh, arrays, title="point scalars"):
    """Unstructured grid with POINT_DATA scalars; ``arrays`` maps name -> (nv,)."""
    with open(path, "w") as fh:
        _write_grid(fh, mesh, title)
        fh.write(f"POINT_DATA {mesh.n_vertices}\n")
        for name, vals in arrays.items():
            vals = np.asarray(vals, dtype=float)
            if vals.shape != (mesh.n_vertices,):
                raise DataError(f"{name}: expected ({mesh.n_vertices},) values, got {vals.shape}")
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, vals, fmt=FLOAT_FMT)


def read_vtk(path):
    """Parse a file written by this module.

    Returns a dict with ``points``, ``cells`` and ``cell_data`` /
    ``point_data`` dicts of arrays.
    """
    with open(path) as fh:
        tokens = fh.read().split("\n")
    out = {"points": None, "cells": None, "cell_data": {}, "point_data": {}}
    i = 4
    section = None
    count = 0

    def block(start, nrows):
        rows = tokens[start:start + nrows]
        if len(rows) < nrows:
            raise DataError(f"{path}: truncated data block")
        return np.array([[float(v) for v in r.split()] for r in rows])

    while i < len(tokens):
        line = tokens[i].strip()
        if not line:
            i += 1
            continue
        head = line.split()
        key = head[0]
        if key == "POINTS":
            n = int(head[1])
            out["points"] = block(i + 1, n)
            i += n + 1
        elif key == "CELLS":
            n = int(head[1])
            out["cells"] = block(i + 1, n)[:, 1:].astype(np.int64)
            i += n + 1
        elif key == "CELL_TYPES":
            i += int(head[1]) + 1
        elif key in ("CELL_DATA", "POINT_DATA"):
            section = "cell_data" if key == "CELL_DATA" else "point_data"
            count = int(head[1])
            i += 1
        elif key == "VECTORS":
            out[section][head[1]] = block(i + 1, count)
            i += count + 1
        elif key == "SCALARS":
            out[section][head[1]] = block(i + 2, count)[:, 0]
            i += count + 2
        else:
            raise DataError(f"{path}: unexpected line {line!r}")
    return out


def write_convergence_csv(path, residues, force_residuals):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "residue", "force_residual_inf"])
        for i, (r, f) in enumerate(zip(residues, force_residuals)):
            w.writerow([i, _fmt(r), _fmt(f)])


def write_errors_csv(path, rows, slopes=None):
    """Rows of (h, err_B_rel, err_p_rel); ``slopes`` (sB, sp) adds a final ``slope`` row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h", "err_B_rel", "err_p_rel"])
        for h, eb, ep in rows:
            w.writerow([_fmt(h), _fmt(eb), _fmt(ep)])
        if slopes is not None:
            w.writerow(["slope", _fmt(slopes[0]), _fmt(slopes[1])])


def read_csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))
