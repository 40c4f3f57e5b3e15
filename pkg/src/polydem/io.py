"""Writers for legacy ASCII VTK and plain CSV."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .mesh import PolyMesh

__all__ = ["polygon_loop", "write_vtk", "write_csv", "read_csv", "CSV_FORMAT"]

CSV_FORMAT = "%.9g"

VTK_TRIANGLE = 5
VTK_POLYGON = 7
VTK_TETRA = 10
VTK_POLYHEDRON = 42


def polygon_loop(mesh: PolyMesh, c: int) -> np.ndarray:
    """Vertices of a 2D cell in counter-clockwise order."""
    edges = [tuple(mesh.facet_vertices(f)) for f in mesh.cell_facets(c)]
    nxt: dict[int, list[int]] = {}
    for a, b in edges:
        nxt.setdefault(a, []).append(b)
        nxt.setdefault(b, []).append(a)
    start = edges[0][0]
    loop, prev = [start], None
    cur = start
    for _ in range(len(edges) - 1):
        nb = [v for v in nxt[cur] if v != prev]
        prev, cur = cur, nb[0]
        loop.append(cur)
    X = mesh.vertices[loop]
    area = 0.5 * np.sum(X[:, 0] * np.roll(X[:, 1], -1) - np.roll(X[:, 0], -1) * X[:, 1])
    return np.array(loop if area > 0 else loop[::-1])


def _cell_stream(mesh: PolyMesh, c: int) -> tuple[int, list[int]]:
    if mesh.dim == 2:
        loop = polygon_loop(mesh, c)
        return (VTK_TRIANGLE if len(loop) == 3 else VTK_POLYGON), [len(loop), *loop.tolist()]
    fs = mesh.cell_facets(c)
    if len(fs) == 4 and all(len(mesh.facet_vertices(f)) == 3 for f in fs):
        vs = mesh.cell_vertices(c)
        X = mesh.vertices[vs]
        if np.linalg.det(X[1:] - X[0]) < 0:
            vs = vs[[0, 2, 1, 3]]
        return VTK_TETRA, [4, *vs.tolist()]
    stream = [len(fs)]
    for f, s in zip(fs, mesh.cell_signs(c)):
        vs = mesh.facet_vertices(f)
        vs = vs if s > 0 else vs[::-1]
        stream += [len(vs), *vs.tolist()]
    return VTK_POLYHEDRON, [len(stream), *stream]


def _fmt(a) -> str:
    return " ".join(CSV_FORMAT % v for v in np.ravel(a))


def write_vtk(path, mesh: PolyMesh, cell_data: dict | None = None, title: str = "polydem") -> Path:
    """Legacy ASCII unstructured grid.

    ``cell_data`` maps names to arrays of shape (n_cells,) for scalars or
    (n_cells, d) for vectors (padded to three components).
    """
    path = Path(path)
    cell_data = cell_data or {}
    nv, nc = mesh.n_vertices, mesh.n_cells
    X = np.zeros((nv, 3))
    X[:, : mesh.dim] = mesh.vertices
    types, streams = zip(*(_cell_stream(mesh, c) for c in range(nc))) if nc else ((), ())
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [_fmt(x) for x in X]
    lines.append(f"CELLS {nc} {sum(len(s) for s in streams)}")
    lines += [" ".join(map(str, s)) for s in streams]
    lines.append(f"CELL_TYPES {nc}")
    lines += [str(t) for t in types]
    if cell_data:
        lines.append(f"CELL_DATA {nc}")
        for name, arr in cell_data.items():
            arr = np.asarray(arr, dtype=float)
            key = str(name).replace(" ", "_")
            if arr.shape == (nc,):
                lines += [f"SCALARS {key} double 1", "LOOKUP_TABLE default"]
                lines += [CSV_FORMAT % v for v in arr]
            elif arr.ndim == 2 and arr.shape[0] == nc and arr.shape[1] <= 3:
                V = np.zeros((nc, 3))
                V[:, : arr.shape[1]] = arr
                lines.append(f"VECTORS {key} double")
                lines += [_fmt(v) for v in V]
            else:
                raise ValueError(f"cell field {name!r} has shape {arr.shape}; expected ({nc},) or ({nc}, <=3)")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_csv(path, header, rows) -> Path:
    """CSV with a header row and numbers at 9 significant digits."""
    path = Path(path)
    rows = np.atleast_2d(np.asarray(rows, dtype=float)) if len(rows) else np.zeros((0, len(header)))
    if rows.shape[1] != len(header):
        raise ValueError(f"{len(header)} columns in header but rows have {rows.shape[1]}")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([CSV_FORMAT % v for v in r])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) for v in row] for row in reader if row]
    return header, np.array(data, dtype=float).reshape(-1, len(header))
