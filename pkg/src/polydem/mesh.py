"""Polygonal / polyhedral meshes with derived facet and cell geometry.

A mesh is given by its topology only: vertex coordinates, facets as ordered
vertex lists and cells as facet lists.  Everything else (areas, unit normals,
barycentres, diameters, volumes, orientation signs) is derived on
construction and validated.

Two file formats are read:

* the native JSON format (see ``docs/mesh_format.md``), which can describe
  arbitrary polygons and polyhedra;
* the Gmsh ``msh`` version 2 ASCII format, restricted to triangle (2D) and
  tetrahedron (3D) cells with physical groups on the boundary elements.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MeshError",
    "PolyMesh",
    "load_mesh",
    "read_json_mesh",
    "read_msh2",
    "write_json_mesh",
    "cell_closure_defect",
]

PLANARITY_TOL = 1e-8


class MeshError(ValueError):
    """Raised for malformed or geometrically invalid meshes."""


def _csr(lists):
    ptr = np.zeros(len(lists) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(x) for x in lists])
    idx = np.fromiter((i for x in lists for i in x), dtype=np.int64, count=int(ptr[-1]))
    return ptr, idx


@dataclass
class PolyMesh:
    """Mesh of a polygonal (d=2) or polyhedral (d=3) domain.

    Facet normals ``facet_normal[F]`` point from ``facet_cells[F, 0]`` (the
    cell c-) towards ``facet_cells[F, 1]`` (c+), or out of the domain for
    boundary facets, where ``facet_cells[F, 1] == -1``.  ``cell_facet_sign``
    stores, for every (cell, facet) incidence, the sign turning ``n_F`` into
    the outward normal of that cell.
    """

    vertices: np.ndarray
    facet_ptr: np.ndarray
    facet_vtx: np.ndarray
    cell_ptr: np.ndarray
    cell_fac: np.ndarray
    facet_tag: np.ndarray  # object array, None on interior facets
    # derived
    facet_cells: np.ndarray = field(init=False)
    cell_facet_sign: np.ndarray = field(init=False)
    facet_area: np.ndarray = field(init=False)
    facet_centroid: np.ndarray = field(init=False)
    facet_normal: np.ndarray = field(init=False)
    facet_diameter: np.ndarray = field(init=False)
    cell_volume: np.ndarray = field(init=False)
    cell_centroid: np.ndarray = field(init=False)
    boundary_vertices: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] not in (2, 3):
            raise MeshError("vertices must be an (n, 2) or (n, 3) array")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("non-finite vertex coordinates")
        self._build_incidence()
        self._facet_geometry()
        self._orient_and_measure()
        self._check_tags()

    # -- construction ------------------------------------------------------

    @classmethod
    def from_lists(cls, vertices, facets, cells, boundary):
        """Build from python lists.

        ``boundary`` maps a tag name to the list of facet indices carrying it.
        """
        fptr, fidx = _csr(facets)
        cptr, cidx = _csr(cells)
        tags = np.full(len(facets), None, dtype=object)
        for name, ids in boundary.items():
            for f in ids:
                if tags[f] is not None and tags[f] != name:
                    raise MeshError(f"facet {f} carries two boundary tags")
                tags[f] = str(name)
        return cls(np.asarray(vertices, dtype=float), fptr, fidx, cptr, cidx, tags)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_facets(self) -> int:
        return len(self.facet_ptr) - 1

    @property
    def n_cells(self) -> int:
        return len(self.cell_ptr) - 1

    def facet_vertices(self, f: int) -> np.ndarray:
        return self.facet_vtx[self.facet_ptr[f]:self.facet_ptr[f + 1]]

    def cell_facets(self, c: int) -> np.ndarray:
        return self.cell_fac[self.cell_ptr[c]:self.cell_ptr[c + 1]]

    def cell_signs(self, c: int) -> np.ndarray:
        return self.cell_facet_sign[self.cell_ptr[c]:self.cell_ptr[c + 1]]

    def cell_vertices(self, c: int) -> np.ndarray:
        fs = self.cell_facets(c)
        return np.unique(np.concatenate([self.facet_vertices(f) for f in fs]))

    @property
    def cell_of_incidence(self) -> np.ndarray:
        """Cell index of each entry of ``cell_fac``."""
        return np.repeat(np.arange(self.n_cells), np.diff(self.cell_ptr))

    @property
    def interior_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] >= 0)

    @property
    def boundary_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] < 0)

    @property
    def tag_names(self) -> list[str]:
        return sorted({t for t in self.facet_tag if t is not None})

    def facets_with_tag(self, tag: str) -> np.ndarray:
        return np.flatnonzero(self.facet_tag == tag)

    def vertices_with_tag(self, tag: str) -> np.ndarray:
        fs = self.facets_with_tag(tag)
        if len(fs) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate([self.facet_vertices(f) for f in fs]))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))

    @property
    def h(self) -> float:
        """Mesh size: largest facet diameter."""
        return float(self.facet_diameter.max())

    @property
    def volume(self) -> float:
        return float(self.cell_volume.sum())

    # -- derived data ------------------------------------------------------

    def _build_incidence(self):
        nf, nc = self.n_facets, self.n_cells
        if len(self.facet_tag) != nf:
            raise MeshError("facet_tag must have one entry per facet")
        if nc == 0:
            raise MeshError("mesh has no cells")
        if self.facet_vtx.size and (self.facet_vtx.min() < 0 or self.facet_vtx.max() >= self.n_vertices):
            raise MeshError("facet references an unknown vertex")
        if self.cell_fac.size and (self.cell_fac.min() < 0 or self.cell_fac.max() >= nf):
            raise MeshError("cell references an unknown facet")
        fc = np.full((nf, 2), -1, dtype=np.int64)
        count = np.zeros(nf, dtype=np.int64)
        for inc, (c, f) in enumerate(zip(self.cell_of_incidence, self.cell_fac)):
            if count[f] >= 2:
                raise MeshError(f"facet {f} belongs to more than two cells")
            fc[f, count[f]] = c
            count[f] += 1
        if np.any(count == 0):
            raise MeshError(f"facet {int(np.flatnonzero(count == 0)[0])} belongs to no cell")
        if np.any(fc[:, 0] == fc[:, 1]):
            raise MeshError("facet listed twice by the same cell")
        self.facet_cells = fc
        sign = np.where(self.cell_of_incidence == fc[self.cell_fac, 0], 1.0, -1.0)
        self.cell_facet_sign = sign

    def _facet_geometry(self):
        d, nf = self.dim, self.n_facets
        X = self.vertices
        nvf = np.diff(self.facet_ptr)
        area = np.empty(nf)
        cen = np.empty((nf, d))
        nrm = np.empty((nf, d))
        diam = np.empty(nf)
        if d == 2:
            if np.any(nvf != 2):
                raise MeshError("2D facets must be segments")
            ab = self.facet_vtx.reshape(-1, 2)
            a, b = X[ab[:, 0]], X[ab[:, 1]]
            t = b - a
            area[:] = np.linalg.norm(t, axis=1)
            cen[:] = 0.5 * (a + b)
            nrm[:] = np.column_stack([t[:, 1], -t[:, 0]])
            diam[:] = area
        else:
            if np.any(nvf < 3):
                raise MeshError("3D facets need at least three vertices")
            for k in np.unique(nvf):
                sel = np.flatnonzero(nvf == k)
                idx = self.facet_vtx[self.facet_ptr[sel][:, None] + np.arange(k)]
                P = X[idx]  # (m, k, 3)
                c0 = P.mean(axis=1)
                A = np.zeros((len(sel), 3))
                tri_area = np.empty((len(sel), k, 3))
                for i in range(k):
                    p, q = P[:, i] - c0, P[:, (i + 1) % k] - c0
                    tri_area[:, i] = 0.5 * np.cross(p, q)
                    A += tri_area[:, i]
                amag = np.linalg.norm(A, axis=1)
                if np.any(amag <= 0):
                    raise MeshError("degenerate facet with zero area")
                n = A / amag[:, None]
                w = np.einsum("mkj,mj->mk", tri_area, n)
                tc = (c0[:, None, :] + P + np.roll(P, -1, axis=1)) / 3.0
                cen[sel] = np.einsum("mk,mkj->mj", w, tc) / w.sum(1)[:, None]
                area[sel] = amag
                nrm[sel] = n
                dd = np.linalg.norm(P[:, :, None, :] - P[:, None, :, :], axis=-1)
                diam[sel] = dd.max(axis=(1, 2))
                dev = np.abs(np.einsum("mkj,mj->mk", P - cen[sel][:, None, :], n)).max(axis=1)
                bad = dev > PLANARITY_TOL * diam[sel]
                if np.any(bad):
                    raise MeshError(f"non-planar facet {int(sel[np.flatnonzero(bad)[0]])}")
        if np.any(area <= 0):
            raise MeshError("degenerate facet with zero measure")
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        self.facet_area, self.facet_centroid = area, cen
        self.facet_normal, self.facet_diameter = nrm, diam

    def _orient_and_measure(self):
        d, nc = self.dim, self.n_cells
        X = self.vertices
        inc_cell = self.cell_of_incidence
        # vertex average of each cell as reference point
        ref = np.zeros((nc, d))
        cnt = np.zeros(nc)
        fv_cell = np.repeat(inc_cell, np.diff(self.facet_ptr)[self.cell_fac])
        fv_vtx = np.concatenate([self.facet_vertices(f) for f in self.cell_fac]) if d == 3 else \
            self.facet_vtx.reshape(-1, 2)[self.cell_fac].ravel()
        pairs = np.unique(np.column_stack([fv_cell, fv_vtx]), axis=0)
        np.add.at(ref, pairs[:, 0], X[pairs[:, 1]])
        np.add.at(cnt, pairs[:, 0], 1.0)
        ref /= cnt[:, None]
        # orient each facet away from its c- cell
        cm = self.facet_cells[:, 0]
        s = np.einsum("fj,fj->f", self.facet_centroid - ref[cm], self.facet_normal)
        self.facet_normal[s < 0] *= -1.0
        # signed distances from each cell reference to its facet planes
        sign = self.cell_facet_sign
        f = self.cell_fac
        hgt = sign * np.einsum("ij,ij->i", self.facet_centroid[f] - ref[inc_cell], self.facet_normal[f])
        if np.any(hgt <= 0):
            c = int(inc_cell[np.flatnonzero(hgt <= 0)[0]])
            raise MeshError(f"inverted or non star-shaped cell {c}")
        wa = self.facet_area[f] * hgt
        vol = np.bincount(inc_cell, weights=wa, minlength=nc) / d
        if np.any(vol <= 0):
            raise MeshError("zero-volume cell")
        mom = np.zeros((nc, d))
        np.add.at(mom, inc_cell, wa[:, None] * (self.facet_centroid[f] - ref[inc_cell]))
        self.cell_volume = vol
        self.cell_centroid = ref + mom / ((d + 1) * vol[:, None])

    def _check_tags(self):
        bnd = self.facet_cells[:, 1] < 0
        untagged = np.flatnonzero(bnd & np.array([t is None for t in self.facet_tag]))
        if len(untagged):
            raise MeshError(f"untagged boundary facet {int(untagged[0])}")
        tagged_interior = np.flatnonzero(~bnd & np.array([t is not None for t in self.facet_tag]))
        if len(tagged_interior):
            raise MeshError(f"interior facet {int(tagged_interior[0])} carries a boundary tag")
        bf = np.flatnonzero(bnd)
        if self.dim == 3 and np.any(np.diff(self.facet_ptr)[bf] != 3):
            raise MeshError("3D boundary facets must be triangles")
        self.boundary_vertices = np.unique(
            np.concatenate([self.facet_vertices(f) for f in bf])) if len(bf) else np.zeros(0, np.int64)

    def to_dict(self) -> dict:
        boundary: dict[str, list[int]] = {}
        for f in self.boundary_facets:
            boundary.setdefault(self.facet_tag[f], []).append(int(f))
        return {
            "dimension": self.dim,
            "vertices": self.vertices.tolist(),
            "facets": [self.facet_vertices(f).tolist() for f in range(self.n_facets)],
            "cells": [self.cell_facets(c).tolist() for c in range(self.n_cells)],
            "boundary": boundary,
        }


def cell_closure_defect(mesh: PolyMesh) -> np.ndarray:
    """Per-cell norm of sum_F |F| n_{F,c}; zero for a closed cell."""
    inc = mesh.cell_of_incidence
    vec = (mesh.cell_facet_sign * mesh.facet_area[mesh.cell_fac])[:, None] * mesh.facet_normal[mesh.cell_fac]
    tot = np.zeros((mesh.n_cells, mesh.dim))
    np.add.at(tot, inc, vec)
    return np.linalg.norm(tot, axis=1)


# -- readers / writers -----------------------------------------------------

def read_json_mesh(path) -> PolyMesh:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MeshError(f"{path}: JSON parse failure: {exc}") from exc
    return mesh_from_dict(data)


def mesh_from_dict(data: dict) -> PolyMesh:
    try:
        d = int(data["dimension"])
        verts = np.asarray(data["vertices"], dtype=float)
        facets = data["facets"]
        cells = data["cells"]
        boundary = data.get("boundary", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise MeshError(f"malformed mesh description: {exc}") from exc
    if verts.ndim != 2 or verts.shape[1] != d:
        raise MeshError("vertex coordinates do not match the declared dimension")
    return PolyMesh.from_lists(verts, facets, cells, boundary)


def write_json_mesh(mesh: PolyMesh, path) -> None:
    Path(path).write_text(json.dumps(mesh.to_dict()))


_MSH_NODES = {1: 2, 2: 3, 4: 4, 15: 1}


def read_msh2(path) -> PolyMesh:
    """Read a Gmsh v2 ASCII file with triangle or tetrahedron cells."""
    lines = Path(path).read_text().splitlines()
    pos = 0

    def section(name):
        nonlocal pos
        try:
            start = lines.index(f"${name}", pos)
        except ValueError:
            return None
        end = lines.index(f"$End{name}", start)
        return lines[start + 1:end]

    fmt = section("MeshFormat")
    if fmt is None or not fmt[0].split()[0].startswith("2"):
        raise MeshError(f"{path}: only msh format 2 ASCII is supported")
    if fmt[0].split()[1] != "0":
        raise MeshError(f"{path}: binary msh files are not supported")
    names = {}
    pn = section("PhysicalNames")
    if pn:
        for ln in pn[1:]:
            dim, tag, name = ln.split(maxsplit=2)
            names[(int(dim), int(tag))] = name.strip().strip('"')
    nodes = section("Nodes")
    if nodes is None:
        raise MeshError(f"{path}: missing $Nodes")
    nn = int(nodes[0])
    ids, xyz = [], []
    for ln in nodes[1:nn + 1]:
        parts = ln.split()
        ids.append(int(parts[0]))
        xyz.append([float(v) for v in parts[1:4]])
    xyz = np.asarray(xyz)
    node_index = {n: i for i, n in enumerate(ids)}
    elems = section("Elements")
    if elems is None:
        raise MeshError(f"{path}: missing $Elements")
    by_type: dict[int, list] = {1: [], 2: [], 4: []}
    for ln in elems[1:int(elems[0]) + 1]:
        parts = [int(v) for v in ln.split()]
        etype, ntags = parts[1], parts[2]
        if etype not in _MSH_NODES:
            raise MeshError(f"{path}: unsupported element type {etype}")
        if etype == 15:
            continue
        phys = parts[3] if ntags > 0 else None
        conn = [node_index[n] for n in parts[3 + ntags:]]
        by_type[etype].append((phys, conn))
    if by_type[4]:
        d, cell_t, bnd_t = 3, 4, 2
    elif by_type[2]:
        d, cell_t, bnd_t = 2, 2, 1
    else:
        raise MeshError(f"{path}: no triangle or tetrahedron cells")
    if d == 2:
        if np.any(np.abs(xyz[:, 2]) > 0):
            raise MeshError(f"{path}: 2D mesh with non-zero z coordinates")
        xyz = xyz[:, :2]
    used = sorted({v for _, conn in by_type[cell_t] for v in conn})
    remap = {v: i for i, v in enumerate(used)}
    verts = xyz[used]
    facet_id: dict[tuple, int] = {}
    facets, cells = [], []
    local = [(0, 1), (1, 2), (2, 0)] if d == 2 else [(0, 2, 1), (0, 1, 3), (1, 2, 3), (0, 3, 2)]
    for _, conn in by_type[cell_t]:
        conn = [remap[v] for v in conn]
        cf = []
        for loc in local:
            fv = [conn[i] for i in loc]
            key = tuple(sorted(fv))
            if key not in facet_id:
                facet_id[key] = len(facets)
                facets.append(fv)
            cf.append(facet_id[key])
        cells.append(cf)
    boundary: dict[str, list[int]] = {}
    for phys, conn in by_type[bnd_t]:
        if phys is None:
            continue
        key = tuple(sorted(remap[v] for v in conn))
        if key not in facet_id:
            raise MeshError(f"{path}: boundary element does not match a cell facet")
        boundary.setdefault(names.get((d - 1, phys), str(phys)), []).append(facet_id[key])
    return PolyMesh.from_lists(verts, facets, cells, boundary)


def load_mesh(path, format: str | None = None) -> PolyMesh:
    """Load a mesh file; the format defaults to the file extension."""
    path = Path(path)
    if not path.exists():
        raise MeshError(f"{path}: no such file")
    fmt = format or ("msh2" if path.suffix == ".msh" else "native-json")
    if fmt == "native-json":
        return read_json_mesh(path)
    if fmt == "msh2":
        return read_msh2(path)
    raise MeshError(f"unknown mesh format {fmt!r}")
