"""Error measures: L2 error of the cellwise P1 reconstruction, energy error,
convergence orders and self-convergence against a finer mesh."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import roots_jacobi

from .assembly import Operators
from .mesh import PolyMesh

__all__ = [
    "simplex_rule",
    "cell_quadrature",
    "l2_error",
    "energy_error",
    "convergence_order",
    "locate_points",
    "reconstruct_at",
    "l2_difference",
]


@lru_cache(maxsize=None)
def simplex_rule(d: int, n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss-Jacobi rule on the reference simplex.

    Returns barycentric coordinates (m, d+1) and weights summing to 1.
    With n points per direction the rule is exact for degree 2n - 1.
    """
    if d == 2:
        a, wa = roots_jacobi(n, 1.0, 0.0)
        b, wb = roots_jacobi(n, 0.0, 0.0)
        s, ws = (a + 1) / 2, wa / 4
        t, wt = (b + 1) / 2, wb / 2
        S, T = np.meshgrid(s, t, indexing="ij")
        W = np.outer(ws, wt)
        x = S
        y = (1 - S) * T
        lam = np.column_stack([1 - x.ravel() - y.ravel(), x.ravel(), y.ravel()])
    elif d == 3:
        a, wa = roots_jacobi(n, 2.0, 0.0)
        b, wb = roots_jacobi(n, 1.0, 0.0)
        c, wc = roots_jacobi(n, 0.0, 0.0)
        s, ws = (a + 1) / 2, wa / 8
        t, wt = (b + 1) / 2, wb / 4
        r, wr = (c + 1) / 2, wc / 2
        S, T, Rr = np.meshgrid(s, t, r, indexing="ij")
        W = np.einsum("i,j,k->ijk", ws, wt, wr)
        x = S
        y = (1 - S) * T
        z = (1 - S) * (1 - T) * Rr
        lam = np.column_stack([1 - x.ravel() - y.ravel() - z.ravel(), x.ravel(), y.ravel(), z.ravel()])
    else:
        raise ValueError("dimension must be 2 or 3")
    w = W.ravel()
    return lam, w / w.sum()


def _cell_simplices(mesh: PolyMesh):
    """Subdivision of every cell into simplices; returns (vertices, owner)."""
    d = mesh.dim
    X = mesh.vertices
    simp, owner = [], []
    for c in range(mesh.n_cells):
        fs = mesh.cell_facets(c)
        xc = mesh.cell_centroid[c]
        if d == 2:
            if len(fs) == 3:
                simp.append(X[mesh.cell_vertices(c)])
                owner.append(c)
                continue
            for f in fs:
                a, b = mesh.facet_vertices(f)
                simp.append(np.array([xc, X[a], X[b]]))
                owner.append(c)
        else:
            if len(fs) == 4 and all(len(mesh.facet_vertices(f)) == 3 for f in fs):
                simp.append(X[mesh.cell_vertices(c)])
                owner.append(c)
                continue
            for f in fs:
                vs = mesh.facet_vertices(f)
                if len(vs) == 3:
                    simp.append(np.array([xc, X[vs[0]], X[vs[1]], X[vs[2]]]))
                    owner.append(c)
                    continue
                xf = mesh.facet_centroid[f]
                for a, b in zip(vs, np.roll(vs, -1)):
                    simp.append(np.array([xc, xf, X[a], X[b]]))
                    owner.append(c)
    return np.array(simp), np.array(owner, dtype=np.int64)


def cell_quadrature(mesh: PolyMesh, n: int = 3):
    """Quadrature points, weights (physical) and owning cell for all cells."""
    cache = getattr(mesh, "_quad_cache", None)
    if cache is not None and cache[0] == n:
        return cache[1]
    simp, owner = _cell_simplices(mesh)
    lam, w = simplex_rule(mesh.dim, n)
    d = mesh.dim
    vol = np.abs(np.linalg.det(simp[:, 1:] - simp[:, :1])) / (2.0 if d == 2 else 6.0)
    pts = np.einsum("qk,skd->sqd", lam, simp).reshape(-1, d)
    wts = (vol[:, None] * w[None, :]).ravel()
    own = np.repeat(owner, len(w))
    out = (pts, wts, own)
    object.__setattr__(mesh, "_quad_cache", (n, out))
    return out


def _p1_values(ops: Operators, u: np.ndarray, pts: np.ndarray, cells: np.ndarray) -> np.ndarray:
    d = ops.dim
    G = ops.gradients(u)
    U = u.reshape(-1, d)
    dx = pts - ops.mesh.cell_centroid[cells]
    return U[cells] + np.einsum("nij,nj->ni", G[cells], dx)


def l2_error(ops: Operators, u: np.ndarray, exact, n: int = 3) -> float:
    """|| u_exact - R(u_h) ||_{L2} with the cellwise affine reconstruction."""
    pts, wts, own = cell_quadrature(ops.mesh, n)
    diff = exact(pts) - _p1_values(ops, u, pts, own)
    return float(np.sqrt(np.sum(wts * np.sum(diff ** 2, axis=1))))


def energy_error(K, u_exact_dofs: np.ndarray, u: np.ndarray) -> float:
    """1/2 a_h(0; e, e) with e = u_I - u_h (no square root)."""
    e = u_exact_dofs - u
    return float(0.5 * e @ (K @ e))


def convergence_order(errors, dofs, d: int) -> list[float]:
    """Pairwise orders d log(e1/e2) / log(n2/n1)."""
    errors = np.asarray(errors, float)
    dofs = np.asarray(dofs, float)
    if len(errors) < 2 or len(errors) != len(dofs):
        raise ValueError("need at least two (error, dofs) pairs")
    if np.any(errors <= 0) or np.any(dofs <= 0):
        raise ValueError("errors and dof counts must be positive")
    return [float(d * np.log(errors[k] / errors[k + 1]) / np.log(dofs[k + 1] / dofs[k]))
            for k in range(len(errors) - 1)]


def locate_points(mesh: PolyMesh, pts: np.ndarray, k: int = 8) -> np.ndarray:
    """Cell containing each point, assuming convex cells; points outside the
    mesh fall back to the cell with the nearest barycentre."""
    tree = cKDTree(mesh.cell_centroid)
    k = min(k, mesh.n_cells)
    _, cand = tree.query(pts, k=k)
    cand = np.atleast_2d(cand).reshape(len(pts), k)
    result = cand[:, 0].copy()
    found = np.zeros(len(pts), dtype=bool)
    tol = 1e-10 * mesh.diameter
    for j in range(k):
        todo = np.flatnonzero(~found)
        if len(todo) == 0:
            break
        cj = cand[todo, j]
        inside = np.ones(len(todo), dtype=bool)
        for idx, (p, c) in enumerate(zip(pts[todo], cj)):
            fs = mesh.cell_facets(c)
            sg = mesh.cell_signs(c)
            dist = np.einsum("fd,fd->f", p - mesh.facet_centroid[fs], mesh.facet_normal[fs] * sg[:, None])
            inside[idx] = np.all(dist <= tol)
        hit = todo[inside]
        result[hit] = cj[inside]
        found[hit] = True
    return result


def reconstruct_at(ops: Operators, u: np.ndarray, pts: np.ndarray, cells: np.ndarray | None = None) -> np.ndarray:
    if cells is None:
        cells = locate_points(ops.mesh, pts)
    return _p1_values(ops, u, pts, cells)


def l2_difference(ops: Operators, u: np.ndarray, ops_ref: Operators, u_ref: np.ndarray, n: int = 3) -> float:
    """|| R(u_h) - R(u_ref) ||_{L2} over the coarse mesh."""
    pts, wts, own = cell_quadrature(ops.mesh, n)
    diff = _p1_values(ops, u, pts, own) - reconstruct_at(ops_ref, u_ref, pts)
    return float(np.sqrt(np.sum(wts * np.sum(diff ** 2, axis=1))))
