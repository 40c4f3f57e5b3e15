"""Structured mesh builders for the benchmark geometries.

These are not a general mesher: they produce the handful of domains the
test cases need (square, box, circular beam, quarter annulus), with named
boundary tags, as :class:`~polydem.mesh.PolyMesh` objects.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.spatial import Delaunay

from .mesh import PolyMesh

__all__ = [
    "from_polygons",
    "from_polyhedra",
    "rectangle_mesh",
    "polygonal_mesh",
    "box_tet_mesh",
    "box_poly_mesh",
    "cylinder_tet_mesh",
    "quarter_annulus_mesh",
    "build",
]


def from_polygons(vertices, polygons, tagger) -> PolyMesh:
    """2D mesh from cells given as vertex loops; ``tagger(x_F)`` names boundary facets."""
    vertices = np.asarray(vertices, dtype=float)
    key_id: dict[tuple, int] = {}
    facets, cells, count = [], [], []
    for poly in polygons:
        cf = []
        for a, b in zip(poly, poly[1:] + poly[:1]):
            key = (min(a, b), max(a, b))
            if key not in key_id:
                key_id[key] = len(facets)
                facets.append([a, b])
                count.append(0)
            count[key_id[key]] += 1
            cf.append(key_id[key])
        cells.append(cf)
    return _finish(vertices, facets, cells, count, tagger)


def from_polyhedra(vertices, polyhedra, tagger) -> PolyMesh:
    """3D mesh from cells given as lists of face vertex loops."""
    vertices = np.asarray(vertices, dtype=float)
    key_id: dict[tuple, int] = {}
    facets, cells, count = [], [], []
    for faces in polyhedra:
        cf = []
        for face in faces:
            key = tuple(sorted(face))
            if key not in key_id:
                key_id[key] = len(facets)
                facets.append(list(face))
                count.append(0)
            count[key_id[key]] += 1
            cf.append(key_id[key])
        cells.append(cf)
    return _finish(vertices, facets, cells, count, tagger)


def _finish(vertices, facets, cells, count, tagger):
    boundary: dict[str, list[int]] = {}
    for f, n in enumerate(count):
        if n == 1:
            xf = vertices[facets[f]].mean(axis=0)
            boundary.setdefault(tagger(xf), []).append(f)
    return PolyMesh.from_lists(vertices, facets, cells, boundary)


def _box_tagger(lo, hi, names):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    tol = 1e-9 * float(np.max(hi - lo))

    def tag(x):
        for k in range(len(lo)):
            if abs(x[k] - lo[k]) < tol:
                return names[2 * k]
            if abs(x[k] - hi[k]) < tol:
                return names[2 * k + 1]
        raise ValueError(f"boundary facet at {x} is not on the box")
    return tag


_BOX_NAMES = ["x0", "x1", "y0", "y1", "z0", "z1"]


def _grid(n, lo, hi, perturb, rng):
    axes = [np.linspace(lo[k], hi[k], n[k] + 1) for k in range(len(n))]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(n))
    if perturb:
        h = (np.asarray(hi) - np.asarray(lo)) / np.asarray(n)
        idx = np.stack(np.meshgrid(*[np.arange(m + 1) for m in n], indexing="ij"), -1).reshape(-1, len(n))
        inner = np.all((idx > 0) & (idx < np.asarray(n)), axis=1)
        pts[inner] += perturb * h * rng.uniform(-1, 1, size=(inner.sum(), len(n)))
    return pts


def rectangle_mesh(nx, ny, lo=(0.0, 0.0), hi=(1.0, 1.0), kind="quad", perturb=0.0, seed=0) -> PolyMesh:
    """Rectangle split into ``nx * ny`` quads, or triangles when ``kind='tri'``.

    Interior vertices are moved by up to ``perturb`` times the cell size.
    Tags are ``x0, x1, y0, y1``.
    """
    rng = np.random.default_rng(seed)
    pts = _grid((nx, ny), lo, hi, perturb, rng)

    def v(i, j):
        return i * (ny + 1) + j

    polys = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)
            if kind == "quad":
                polys.append([a, b, c, d])
            elif kind == "tri":
                if (i + j) % 2 == 0:
                    polys += [[a, b, c], [a, c, d]]
                else:
                    polys += [[a, b, d], [b, c, d]]
            else:
                raise ValueError(f"unknown kind {kind!r}")
    return from_polygons(pts, polys, _box_tagger(lo, hi, _BOX_NAMES))


def polygonal_mesh(nx, ny, lo=(0.0, 0.0), hi=(1.0, 1.0), perturb=0.25, seed=0) -> PolyMesh:
    """Distorted mixed mesh of triangles, quadrilaterals and hexagons."""
    rng = np.random.default_rng(seed)
    pts = _grid((nx, ny), lo, hi, perturb, rng)

    def v(i, j):
        return i * (ny + 1) + j

    polys = []
    for j in range(ny):
        i = 0
        while i < nx:
            a, b, c, d = v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)
            r = (i + 2 * j) % 3
            if r == 0 and i + 1 < nx:
                polys.append([a, b, v(i + 2, j), v(i + 2, j + 1), c, d])
                i += 2
                continue
            if r == 1:
                polys += [[a, b, c], [a, c, d]]
            else:
                polys.append([a, b, c, d])
            i += 1
    return from_polygons(pts, polys, _box_tagger(lo, hi, _BOX_NAMES))


_KUHN = list(itertools.permutations(range(3)))


def box_tet_mesh(nx, ny, nz, lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0), perturb=0.0, seed=0) -> PolyMesh:
    """Box split into hexahedra, each cut into six Kuhn tetrahedra."""
    rng = np.random.default_rng(seed)
    n = (nx, ny, nz)
    pts = _grid(n, lo, hi, perturb, rng)

    def v(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    cells = []
    for i, j, k in itertools.product(range(nx), range(ny), range(nz)):
        base = np.array([i, j, k])
        for perm in _KUHN:
            p = [base.copy()]
            for ax in perm:
                q = p[-1].copy()
                q[ax] += 1
                p.append(q)
            ids = [v(*q) for q in p]
            cells.append(_tet_faces(ids))
    return from_polyhedra(pts, cells, _box_tagger(lo, hi, _BOX_NAMES))


def _tet_faces(t):
    a, b, c, d = t
    return [[a, b, c], [a, b, d], [b, c, d], [a, c, d]]


def box_poly_mesh(nx, ny, nz, lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> PolyMesh:
    """Box of hexahedral cells; boundary quads are split in two triangles.

    Cells touching the boundary thus become general polyhedra with up to
    nine planar facets.
    """
    pts = _grid((nx, ny, nz), lo, hi, 0.0, None)
    n = (nx, ny, nz)

    def v(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    cells = []
    for i, j, k in itertools.product(range(nx), range(ny), range(nz)):
        c = np.array([i, j, k])
        faces = []
        for ax in range(3):
            o1, o2 = [a for a in range(3) if a != ax]
            for side in (0, 1):
                q = []
                for (s1, s2) in ((0, 0), (1, 0), (1, 1), (0, 1)):
                    p = c.copy()
                    p[ax] += side
                    p[o1] += s1
                    p[o2] += s2
                    q.append(v(*p))
                on_bnd = c[ax] + side in (0, n[ax])
                if on_bnd:
                    faces += [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
                else:
                    faces.append(q)
        cells.append(faces)
    return from_polyhedra(pts, cells, _box_tagger(lo, hi, _BOX_NAMES))


def _disk_points(radius, nr):
    pts = [np.zeros(2)]
    for k in range(1, nr + 1):
        m = 6 * k
        th = 2 * np.pi * (np.arange(m) + 0.5 * (k % 2)) / m
        pts += list(radius * k / nr * np.column_stack([np.cos(th), np.sin(th)]))
    return np.array(pts)


def cylinder_tet_mesh(radius, length, nr, nz) -> PolyMesh:
    """Circular beam along z, ``z in [0, length]``; tags ``z0, z1, lateral``.

    The section is a Delaunay triangulation of concentric rings of points,
    extruded in ``nz`` layers; each prism is cut into three tetrahedra with
    the global-index rule, which keeps the cut conforming.
    """
    disk = _disk_points(radius, nr)
    tris = Delaunay(disk).simplices
    nd = len(disk)
    zs = np.linspace(0.0, length, nz + 1)
    pts = np.column_stack([np.tile(disk, (nz + 1, 1)), np.repeat(zs, nd)])
    cells = []
    for layer in range(nz):
        for tri in tris:
            a, b, c = sorted(int(t) for t in tri)
            lo = layer * nd
            up = lo + nd
            for tet in ([a + lo, b + lo, c + lo, c + up],
                        [a + lo, b + lo, b + up, c + up],
                        [a + lo, a + up, b + up, c + up]):
                cells.append(_tet_faces(tet))
    tol = 1e-9 * length

    def tag(x):
        if abs(x[2]) < tol:
            return "z0"
        if abs(x[2] - length) < tol:
            return "z1"
        return "lateral"
    return from_polyhedra(pts, cells, tag)


def quarter_annulus_mesh(r_in, r_out, nr, nt, kind="quad", grading=1.0) -> PolyMesh:
    """Quarter of an annulus in the first quadrant.

    Tags: ``inner``, ``outer``, ``bottom`` (y = 0) and ``left`` (x = 0).
    """
    s = np.linspace(0.0, 1.0, nr + 1) ** grading
    rs = r_in + (r_out - r_in) * s
    ts = np.linspace(0.0, 0.5 * np.pi, nt + 1)
    R, T = np.meshgrid(rs, ts, indexing="ij")
    pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
    pts[np.abs(pts) < 1e-14] = 0.0

    def v(i, j):
        return i * (nt + 1) + j

    polys = []
    for i in range(nr):
        for j in range(nt):
            a, b, c, d = v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)
            if kind == "quad":
                polys.append([a, b, c, d])
            elif (i + j) % 2 == 0:
                polys += [[a, b, c], [a, c, d]]
            else:
                polys += [[a, b, d], [b, c, d]]
    tol = 1e-9 * r_out
    rmid = 0.5 * (r_in + r_out)

    def tag(x):
        if abs(x[1]) < tol:
            return "bottom"
        if abs(x[0]) < tol:
            return "left"
        return "inner" if np.hypot(*x) < rmid else "outer"
    return from_polygons(pts, polys, tag)


_BUILDERS = {
    "rectangle": rectangle_mesh,
    "polygonal": polygonal_mesh,
    "box_tet": box_tet_mesh,
    "box_poly": box_poly_mesh,
    "cylinder_tet": cylinder_tet_mesh,
    "quarter_annulus": quarter_annulus_mesh,
}


def build(generator: str, **params) -> PolyMesh:
    """Dispatch by name, e.g. ``build("rectangle", nx=8, ny=8)``."""
    try:
        fn = _BUILDERS[generator]
    except KeyError:
        raise ValueError(f"unknown mesh generator {generator!r}; known: {sorted(_BUILDERS)}") from None
    for key in ("lo", "hi"):
        if key in params:
            params[key] = tuple(params[key])
    return fn(**params)
