"""Facet reconstruction, discrete gradients and cellwise P1 reconstructions.

Displacement dofs live at "points": the cell barycentres (point ``c`` for
cell ``c``) followed by the boundary vertices (point ``n_cells + k`` for the
k-th boundary vertex).  A facet value is a barycentric combination of d+1
points around the facet barycentre; on boundary facets only the facet's own
vertices are used.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .mesh import PolyMesh

__all__ = [
    "StencilError",
    "Stencil",
    "ReconstructionMap",
    "GradientMap",
    "default_candidates",
    "point_positions",
    "solve_barycentric",
    "select_stencil",
    "build_reconstruction",
    "gradient_map",
    "cell_gradient",
    "strain",
    "cell_p1_eval",
    "boundary_facet_eval",
]

BARY_TOL = 1e-12
DEGENERATE_TOL = 1e-12


class StencilError(RuntimeError):
    """No usable simplex could be formed for a facet."""


@dataclass(frozen=True)
class Stencil:
    facet: int
    points: np.ndarray
    coeffs: np.ndarray
    is_extrapolation: bool = False


def default_candidates(dim: int) -> int:
    return 10 if dim == 2 else 25


def point_positions(mesh: PolyMesh) -> tuple[np.ndarray, np.ndarray]:
    """Positions of all dof points and the vertex -> point index map (-1 off boundary)."""
    vmap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    vmap[mesh.boundary_vertices] = mesh.n_cells + np.arange(len(mesh.boundary_vertices))
    pos = np.vstack([mesh.cell_centroid, mesh.vertices[mesh.boundary_vertices]])
    return pos, vmap


def _simplex_volume(P):
    d = P.shape[-1]
    Q = P[..., 1:, :] - P[..., :1, :]
    return np.abs(np.linalg.det(Q)) / np.prod(np.arange(1, d + 1))


def _max_edge(P):
    diff = P[..., :, None, :] - P[..., None, :, :]
    return np.sqrt((diff ** 2).sum(-1).max(axis=(-1, -2)))


def _nondegenerate(P):
    d = P.shape[-1]
    return _simplex_volume(P) >= DEGENERATE_TOL * _max_edge(P) ** d


def _bary_batch(P, x):
    """Barycentric coordinates of x in each simplex P[k] (assumed non-degenerate)."""
    n, m, d = P.shape
    A = np.ones((n, m, m))
    A[:, 1:, :] = np.transpose(P, (0, 2, 1))
    b = np.concatenate([[1.0], x])
    return np.linalg.solve(A, np.broadcast_to(b, (n, m))[..., None])[..., 0]


def _circumradius(P):
    Q = P[:, 1:, :] - P[:, :1, :]
    rhs = 0.5 * (Q ** 2).sum(-1)
    o = np.linalg.solve(Q, rhs[..., None])[..., 0]
    return np.linalg.norm(o, axis=1)


def solve_barycentric(points, target) -> np.ndarray:
    """Coefficients a with sum(a) = 1 and sum(a_i p_i) = target.

    ``points`` holds d+1 points of R^d forming a non-degenerate simplex.
    """
    P = np.asarray(points, dtype=float)
    x = np.asarray(target, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] + 1:
        raise ValueError("need d+1 points in dimension d")
    if not _nondegenerate(P):
        raise StencilError("degenerate simplex")
    return _bary_batch(P[None], x)[0]


@lru_cache(maxsize=None)
def _subsets(I: int, d: int) -> np.ndarray:
    """All (d+1)-subsets of range(I) in lexicographic order."""
    return np.array(list(itertools.combinations(range(I), d + 1)), dtype=np.int64)


def _minor_table(q):
    """T[i, j(, k)] = det(q_i, q_j(, q_k)) for all index tuples."""
    if q.shape[1] == 2:
        return q[:, None, 0] * q[None, :, 1] - q[:, None, 1] * q[None, :, 0]
    cr = np.cross(q[:, None, :], q[None, :, :])
    return np.einsum("ia,jka->ijk", q, cr)


def _search(cand_pos, dist, x):
    """Best stencil among candidate points sorted by distance to x.

    A containing simplex of circumradius R lies in its circumball, which
    contains x, so none of its points is farther than 2R from x.  A first
    pass over the nearest few candidates therefore bounds the set worth
    enumerating.
    """
    I, d = cand_pos.shape
    n0 = min(I, 3 * d + 3)
    if n0 < I:
        found = _search_all(cand_pos[:n0], x)
        if not found[2]:
            n1 = max(n0, int(np.searchsorted(dist, 2.0 * found[3], side="right")))
            if n1 <= n0:
                return found[:3]
            return _search_all(cand_pos[:min(n1, I)], x)[:3]
    return _search_all(cand_pos, x)[:3]


def _search_all(cand_pos, x):
    """Exhaustive search over the given candidates.

    Among all non-degenerate (d+1)-subsets whose barycentric coordinates
    at x lie in [0, 1], the one of smallest circumradius is returned (ties
    by lexicographic order of distance ranks).  Without any containing
    simplex the subset with the smallest max |coefficient| is used.

    Barycentric coordinates come from minors of q_i = p_i - x:
    alpha_i = (-1)^i det(q without i) / sum_k (-1)^k det(q without k).

    Returns (local indices, coefficients, is_extrapolation, radius).
    """
    I, d = cand_pos.shape
    S = _subsets(I, d)
    T = _minor_table(cand_pos - x)
    minors = np.empty((len(S), d + 1))
    for i in range(d + 1):
        cols = [k for k in range(d + 1) if k != i]
        minors[:, i] = (-1) ** i * T[tuple(S[:, c] for c in cols)]
    det = minors.sum(axis=1)
    D = np.sqrt(((cand_pos[:, None, :] - cand_pos[None, :, :]) ** 2).sum(-1))
    hmax = np.max([D[S[:, a], S[:, b]] for a, b in itertools.combinations(range(d + 1), 2)], axis=0)
    fact = float(np.prod(np.arange(1, d + 1)))
    ok = np.abs(det) / fact >= DEGENERATE_TOL * hmax ** d
    if not ok.any():
        raise StencilError("no non-degenerate simplex among the candidates; increase the candidate count")
    S, minors, det = S[ok], minors[ok], det[ok]
    alpha = minors / det[:, None]
    inside = np.all((alpha >= -BARY_TOL) & (alpha <= 1.0 + BARY_TOL), axis=1)
    if inside.any():
        Si = S[inside]
        r = _circumradius(cand_pos[Si])
        k = int(np.argmin(r))
        # re-solve the chosen simplex directly for best accuracy
        coeffs = _bary_batch(cand_pos[Si[k]][None], x)[0]
        return Si[k], coeffs, False, float(r[k])
    k = int(np.argmin(np.abs(alpha).max(axis=1)))
    return S[k], _bary_batch(cand_pos[S[k]][None], x)[0], True, np.inf


def _nearest(tree, x, I, n_points):
    k = min(n_points, I + 8)
    dist, idx = tree.query(x, k=k)
    dist, idx = np.atleast_1d(dist), np.atleast_1d(idx)
    order = np.lexsort((idx, dist))[:I]
    return dist[order], idx[order]


def select_stencil(mesh: PolyMesh, facet: int, I: int | None = None, *, tree=None, positions=None) -> Stencil:
    """Interpolation stencil of an interior facet from its I nearest dof points."""
    d = mesh.dim
    I = default_candidates(d) if I is None else int(I)
    if I < d + 1:
        raise ValueError(f"candidate count must be at least {d + 1}")
    if mesh.facet_cells[facet, 1] < 0:
        raise ValueError("select_stencil is for interior facets")
    if positions is None:
        positions, _ = point_positions(mesh)
    if tree is None:
        tree = cKDTree(positions)
    x = mesh.facet_centroid[facet]
    dist, idx = _nearest(tree, x, I, len(positions))
    loc, coeffs, extrap = _search(positions[idx], dist, x)
    return Stencil(facet, idx[loc], coeffs, extrap)


def _boundary_stencil(mesh, facet, vmap):
    vs = mesh.facet_vertices(facet)
    P = mesh.vertices[vs]
    x = mesh.facet_centroid[facet]
    d = mesh.dim
    if d == 2:
        coeffs = np.array([0.5, 0.5])
    else:
        # P1 coordinates within the facet plane
        n = mesh.facet_normal[facet]
        t1 = P[1] - P[0]
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        loc = np.column_stack([(P - x) @ t1, (P - x) @ t2])
        coeffs = solve_barycentric(loc, np.zeros(2))
    return Stencil(facet, vmap[vs], coeffs, False)


@dataclass
class ReconstructionMap:
    """Stencils for all facets and the scalar operator R (facets x points)."""

    mesh: PolyMesh
    candidates: int
    stencils: list
    R: sp.csr_matrix
    positions: np.ndarray
    vertex_point: np.ndarray

    @property
    def n_points(self) -> int:
        return self.positions.shape[0]

    @property
    def n_interior(self) -> int:
        return len(self.mesh.interior_facets)

    @property
    def n_extrapolated(self) -> int:
        return sum(1 for s in self.stencils if s.is_extrapolation)

    @property
    def extrapolation_percent(self) -> float:
        n = self.n_interior
        return 100.0 * self.n_extrapolated / n if n else 0.0

    def stats(self) -> dict:
        return {
            "candidates": self.candidates,
            "interior_facets": self.n_interior,
            "extrapolated": self.n_extrapolated,
            "extrapolation_percent": self.extrapolation_percent,
        }

    def apply(self, u_points: np.ndarray) -> np.ndarray:
        """Facet values R(u) for point values of shape (n_points, d)."""
        return self.R @ u_points


def build_reconstruction(mesh: PolyMesh, I: int | None = None) -> ReconstructionMap:
    d = mesh.dim
    I = default_candidates(d) if I is None else int(I)
    pos, vmap = point_positions(mesh)
    tree = cKDTree(pos)
    stencils = []
    for f in range(mesh.n_facets):
        if mesh.facet_cells[f, 1] >= 0:
            stencils.append(select_stencil(mesh, f, I, tree=tree, positions=pos))
        else:
            stencils.append(_boundary_stencil(mesh, f, vmap))
    rows = np.concatenate([np.full(len(s.points), s.facet) for s in stencils])
    cols = np.concatenate([s.points for s in stencils])
    vals = np.concatenate([s.coeffs for s in stencils])
    R = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_facets, len(pos)))
    return ReconstructionMap(mesh, I, stencils, R, pos, vmap)


@dataclass
class GradientMap:
    """Scalar operator B with (B v)[c*d + j] = sum_F |F|/|c| v_F n_{F,c}[j]."""

    B: sp.csr_matrix
    dim: int

    def __call__(self, facet_values: np.ndarray) -> np.ndarray:
        d = self.dim
        g = self.B @ facet_values  # rows (c, j), columns i
        return g.reshape(-1, d, d).transpose(0, 2, 1)


def gradient_map(mesh: PolyMesh) -> GradientMap:
    d = mesh.dim
    cells = mesh.cell_of_incidence
    f = mesh.cell_fac
    w = mesh.cell_facet_sign * mesh.facet_area[f] / mesh.cell_volume[cells]
    vals = (w[:, None] * mesh.facet_normal[f]).ravel()
    rows = (cells[:, None] * d + np.arange(d)).ravel()
    cols = np.repeat(f, d)
    B = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_cells * d, mesh.n_facets))
    return GradientMap(B, d)


def cell_gradient(mesh: PolyMesh, gmap: GradientMap, facet_values) -> np.ndarray:
    """Cellwise constant gradients, shape (n_cells, d, d), G[c, i, j] = d u_i / d x_j."""
    return gmap(np.asarray(facet_values, dtype=float))


def strain(G: np.ndarray) -> np.ndarray:
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def cell_p1_eval(recon: ReconstructionMap, u_points, cell: int, x, gmap: GradientMap | None = None):
    """Value at x of the affine reconstruction attached to ``cell``."""
    mesh = recon.mesh
    u_points = np.asarray(u_points, dtype=float)
    gmap = gmap or gradient_map(mesh)
    G = gmap(recon.apply(u_points))[cell]
    return u_points[cell] + G @ (np.asarray(x, float) - mesh.cell_centroid[cell])


def boundary_facet_eval(recon: ReconstructionMap, u_points, facet: int, x):
    """P1 interpolation of the boundary vertex values of a boundary facet at x."""
    mesh = recon.mesh
    if mesh.facet_cells[facet, 1] >= 0:
        raise ValueError("not a boundary facet")
    vs = mesh.facet_vertices(facet)
    P = mesh.vertices[vs]
    x = np.asarray(x, dtype=float)
    if mesh.dim == 2:
        t = P[1] - P[0]
        s = float((x - P[0]) @ t / (t @ t))
        beta = np.array([1.0 - s, s])
    else:
        n = mesh.facet_normal[facet]
        t1 = (P[1] - P[0]) / np.linalg.norm(P[1] - P[0])
        t2 = np.cross(n, t1)
        loc = np.column_stack([(P - P[0]) @ t1, (P - P[0]) @ t2])
        beta = solve_barycentric(loc, np.array([(x - P[0]) @ t1, (x - P[0]) @ t2]))
    u = np.asarray(u_points, dtype=float)[recon.vertex_point[vs]]
    return beta @ u
