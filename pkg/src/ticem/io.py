"""Text exports: legacy VTK unstructured grids and CSV tables.

Floats are written with ``repr`` so every file reloads bit-exactly and
reruns are byte-identical.  The layouts are described in docs/formats.md.
"""
from __future__ import annotations

import csv
import hashlib
import os
from pathlib import Path
from typing import Mapping

import numpy as np

VTK_TETRA = 10


class ExportError(OSError):
    pass


def _f(x) -> str:
    return repr(float(x))


def _write_text(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    return path


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _split_complex(name, a):
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return [(f"{name}_re", a.real), (f"{name}_im", a.imag)]
    return [(name, a.astype(float))]


def write_vtk(path, mesh, scalars: Mapping | None = None, vectors: Mapping | None = None,
              title: str = "ticem field") -> Path:
    """Legacy ASCII VTK unstructured grid with per-cell data.

    Complex arrays are split into ``<name>_re`` and ``<name>_im``.
    """
    scalars = dict(scalars or {})
    vectors = dict(vectors or {})
    m = mesh.n_tets
    out = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_nodes} double"]
    out += [" ".join(_f(v) for v in p) for p in mesh.nodes.tolist()]
    out.append(f"CELLS {m} {5 * m}")
    out += [f"4 {a} {b} {c} {d}" for a, b, c, d in mesh.tets.tolist()]
    out.append(f"CELL_TYPES {m}")
    out += [str(VTK_TETRA)] * m
    out.append(f"CELL_DATA {m}")
    out.append("SCALARS compartment int 1")
    out.append("LOOKUP_TABLE default")
    out += [str(c) for c in mesh.compartment.tolist()]
    for name, arr in scalars.items():
        for nm, a in _split_complex(name, arr):
            if a.shape != (m,):
                raise ValueError(f"scalar {name!r} has shape {a.shape}, expected ({m},)")
            out.append(f"SCALARS {nm} double 1")
            out.append("LOOKUP_TABLE default")
            out += [_f(v) for v in a.tolist()]
    for name, arr in vectors.items():
        for nm, a in _split_complex(name, arr):
            if a.shape != (m, 3):
                raise ValueError(f"vector {name!r} has shape {a.shape}, expected ({m}, 3)")
            out.append(f"VECTORS {nm} double")
            out += [" ".join(_f(v) for v in row) for row in a.tolist()]
    return _write_text(path, "\n".join(out) + "\n")


def read_vtk_cell_data(path) -> dict:
    """Read back the CELL_DATA arrays written by :func:`write_vtk`."""
    with open(path, encoding="ascii") as fh:
        lines = fh.read().split("\n")
    i = next(k for k, ln in enumerate(lines) if ln.startswith("CELL_DATA"))
    m = int(lines[i].split()[1])
    i += 1
    out = {}
    while i < len(lines) and lines[i]:
        parts = lines[i].split()
        if parts[0] == "SCALARS":
            name, kind = parts[1], parts[2]
            vals = lines[i + 2:i + 2 + m]
            out[name] = np.array([int(v) if kind == "int" else float(v) for v in vals])
            i += 2 + m
        elif parts[0] == "VECTORS":
            out[parts[1]] = np.array([[float(v) for v in ln.split()] for ln in lines[i + 1:i + 1 + m]])
            i += 1 + m
        else:
            raise ValueError(f"{path}: unexpected line {lines[i]!r}")
    return out


def write_csv(path, header, rows) -> Path:
    """CSV with floats in repr form; complex values become two columns upstream."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="ascii", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_f(v) if isinstance(v, (float, np.floating)) else v for v in r])
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    with open(path, encoding="ascii", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_solver_stats(path, stats, label: str = "") -> Path:
    rows = ([label, j, s.iterations, float(s.residual)] for j, s in enumerate(stats))
    return write_csv(path, ["solve", "column", "iterations", "relative_residual"], rows)


def write_steering_csv(path, result) -> Path:
    rows = []
    for a, b, t, c, v in result.rows():
        rows.append([float(a), float(b), -1 if t is None else t,
                     float(c[0]), float(c[1]), float(c[2]), float(v)])
    return write_csv(path, ["i_pair1_mA", "i_pair2_mA", "argmax_tet", "x_mm", "y_mm", "z_mm",
                            "max_value"], rows)


def write_diff_csv(path, report) -> Path:
    rows = ([t, float(r), float(a)] for t, (r, a) in enumerate(zip(report.rel.tolist(),
                                                                    report.abs.tolist())))
    return write_csv(path, ["tet", "rel_diff", "abs_diff"], rows)


def relpath(path, root) -> str:
    return os.path.relpath(path, root).replace(os.sep, "/")
