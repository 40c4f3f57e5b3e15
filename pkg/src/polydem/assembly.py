"""Dof layout, stiffness with penalty stabilization, lumped mass, loads and
Dirichlet elimination.

Vector dofs are numbered ``point * d + component`` where points are the
cells followed by the boundary vertices (see :mod:`polydem.reconstruct`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import MeshError, PolyMesh
from .reconstruct import GradientMap, ReconstructionMap, gradient_map
from .tensors import ElasticTensor, to_matrix

__all__ = [
    "BoundaryCondition",
    "DofMap",
    "Operators",
    "ConstrainedSystem",
    "ElasticTensor",
    "build_operators",
    "assemble_penalty_jumps",
    "assemble_stiffness",
    "lump_mass",
    "vertex_mass_fragments",
    "assemble_load",
    "apply_dirichlet",
]

BC_KINDS = ("dirichlet", "neumann", "pressure")


@dataclass(frozen=True)
class BoundaryCondition:
    """Condition on the facets carrying ``tag``.

    ``func(x, t)`` gets points of shape (n, d) and returns (n, d) values for
    ``dirichlet`` (displacement) and ``neumann`` (traction), or (n,) for
    ``pressure`` (traction ``-p n``).  ``components`` restricts a Dirichlet
    condition to some displacement components.
    """

    tag: str
    kind: str
    func: Callable
    components: tuple = ()

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ValueError(f"unknown boundary condition kind {self.kind!r}")


@dataclass
class DofMap:
    """Dof layout plus the strongly imposed Dirichlet set."""

    mesh: PolyMesh
    recon: ReconstructionMap
    bcs: list = field(default_factory=list)

    def __post_init__(self):
        mesh = self.mesh
        d = mesh.dim
        known = set(mesh.tag_names)
        for bc in self.bcs:
            if bc.tag not in known:
                raise ValueError(f"boundary tag {bc.tag!r} not present in mesh (known: {sorted(known)})")
        # (vertex, component) -> index of the bc that prescribes it; later entries win
        owner: dict[tuple[int, int], int] = {}
        for k, bc in enumerate(self.bcs):
            if bc.kind != "dirichlet":
                continue
            comps = bc.components or tuple(range(d))
            for z in mesh.vertices_with_tag(bc.tag):
                for i in comps:
                    if not 0 <= i < d:
                        raise ValueError(f"component {i} out of range")
                    owner[(int(z), int(i))] = k
        keys = sorted(owner)
        self._dir_vertex = np.array([z for z, _ in keys], dtype=np.int64)
        self._dir_comp = np.array([i for _, i in keys], dtype=np.int64)
        self._dir_bc = np.array([owner[k] for k in keys], dtype=np.int64)
        pts = self.recon.vertex_point[self._dir_vertex] if keys else np.zeros(0, dtype=np.int64)
        self.dirichlet_dofs = pts * d + self._dir_comp
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.dirichlet_dofs] = False
        self.free_dofs = np.flatnonzero(mask)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def n_points(self) -> int:
        return self.recon.n_points

    @property
    def n_dofs(self) -> int:
        return self.n_points * self.dim

    def neumann_bcs(self) -> list:
        return [bc for bc in self.bcs if bc.kind in ("neumann", "pressure")]

    def dirichlet_values(self, t: float) -> np.ndarray:
        """Prescribed values u_D(z, t) on ``dirichlet_dofs``."""
        out = np.zeros(len(self.dirichlet_dofs))
        x = self.mesh.vertices[self._dir_vertex]
        for k in np.unique(self._dir_bc):
            sel = self._dir_bc == k
            vals = np.asarray(self.bcs[k].func(x[sel], t), dtype=float).reshape(sel.sum(), self.dim)
            out[sel] = vals[np.arange(sel.sum()), self._dir_comp[sel]]
        return out

    def dirichlet_value(self, vertex: int, component: int, t: float) -> float:
        hit = np.flatnonzero((self._dir_vertex == vertex) & (self._dir_comp == component))
        if len(hit) == 0:
            raise KeyError(f"vertex {vertex} component {component} is not a Dirichlet dof")
        return float(self.dirichlet_values(t)[hit[0]])

    def point_values(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u).reshape(self.n_points, self.dim)


@dataclass
class Operators:
    """Linear operators of the discretization, independent of the material.

    ``Ds``   scalar cell gradients, (n_cells*d) x n_points
    ``Gfull`` vector gradients, row (c*d+i)*d+j, (n_cells*d*d) x n_dofs
    ``Js``   scalar facet jumps at facet barycentres, n_facets x n_points
    ``S0``   penalty matrix for eta = 1
    """

    mesh: PolyMesh
    recon: ReconstructionMap
    gmap: GradientMap
    Ds: sp.csr_matrix
    Gfull: sp.csr_matrix
    Js: sp.csr_matrix
    S0: sp.csr_matrix

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def n_dofs(self) -> int:
        return self.recon.n_points * self.dim

    def gradients(self, u: np.ndarray) -> np.ndarray:
        d = self.dim
        return (self.Gfull @ u).reshape(-1, d, d)

    def strains(self, u: np.ndarray) -> np.ndarray:
        G = self.gradients(u)
        return 0.5 * (G + np.swapaxes(G, 1, 2))

    def jumps(self, u: np.ndarray) -> np.ndarray:
        """Jump vectors (n_facets, d) at facet barycentres."""
        return self.Js @ u.reshape(-1, self.dim)

    def penalty(self, eta: float) -> sp.csr_matrix:
        if not eta > 0:
            raise ValueError("penalty eta must be positive")
        return (eta * self.S0).tocsr()

    def internal_force(self, sigma: np.ndarray, u: np.ndarray, eta: float) -> np.ndarray:
        """Gradient of the discrete energy: sum_c |c| sigma_c : G_c(.) + s_h(u, .)."""
        d = self.dim
        w = (self.mesh.cell_volume[:, None, None] * sigma[:, :d, :d]).reshape(-1)
        return self.Gfull.T @ w + eta * (self.S0 @ u)


def _vector_gradient(Ds: sp.csr_matrix, d: int) -> sp.csr_matrix:
    coo = Ds.tocoo()
    cj, p, v = coo.row, coo.col, coo.data
    c, j = np.divmod(cj, d)
    i = np.arange(d)
    rows = ((c[:, None] * d + i) * d + j[:, None]).ravel()
    cols = (p[:, None] * d + i).ravel()
    vals = np.repeat(v, d)
    n_cells = Ds.shape[0] // d
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_cells * d * d, Ds.shape[1] * d))


def assemble_penalty_jumps(mesh: PolyMesh, recon: ReconstructionMap, Ds: sp.csr_matrix | None = None) -> sp.csr_matrix:
    """Scalar jump operator J (n_facets x n_points).

    Interior facets: cell P1 value of c- minus that of c+ at x_F.  Boundary
    facets: P1 interpolant of the facet vertices minus the c- value.
    """
    d = mesh.dim
    if Ds is None:
        Ds = (gradient_map(mesh).B @ recon.R).tocsr()
    nf, nc = mesh.n_facets, mesh.n_cells
    rows, cols, sgn, arms = [], [], [], []
    for side, s in ((0, 1.0), (1, -1.0)):
        fs = np.flatnonzero(mesh.facet_cells[:, side] >= 0)
        cs = mesh.facet_cells[fs, side]
        bnd = mesh.facet_cells[fs, 1] < 0
        sign = np.where(bnd, -1.0, s)
        rows.append(fs)
        cols.append(cs)
        sgn.append(sign)
        arms.append(sign[:, None] * (mesh.facet_centroid[fs] - mesh.cell_centroid[cs]))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    sgn = np.concatenate(sgn)
    arms = np.concatenate(arms)
    npts = recon.n_points
    E0 = sp.csr_matrix((sgn, (rows, cols)), shape=(nf, npts))
    P = sp.csr_matrix(
        (arms.ravel(), (np.repeat(rows, d), (cols[:, None] * d + np.arange(d)).ravel())),
        shape=(nf, nc * d),
    )
    is_b = (mesh.facet_cells[:, 1] < 0).astype(float)
    Rb = sp.diags(is_b) @ recon.R
    J = (E0 + P @ Ds + Rb).tocsr()
    J.eliminate_zeros()
    return J


def build_operators(mesh: PolyMesh, recon: ReconstructionMap) -> Operators:
    d = mesh.dim
    gmap = gradient_map(mesh)
    Ds = (gmap.B @ recon.R).tocsr()
    Gfull = _vector_gradient(Ds, d)
    Js = assemble_penalty_jumps(mesh, recon, Ds)
    wf = mesh.facet_area / mesh.facet_diameter
    Ss = (Js.T @ sp.diags(wf) @ Js).tocsr()
    S0 = sp.kron(Ss, sp.identity(d), format="csr")
    return Operators(mesh, recon, gmap, Ds, Gfull, Js, S0)


def assemble_stiffness(ops: Operators, moduli, eta: float) -> sp.csr_matrix:
    """K = Gᵀ blockdiag(|c| C_c) G + eta S0.

    ``moduli`` is an :class:`ElasticTensor`, one 3x3x3x3 tensor, or per-cell
    tensors of shape (n_cells, 3, 3, 3, 3).
    """
    if not eta > 0:
        raise ValueError("penalty eta must be positive")
    d = ops.dim
    nc = ops.mesh.n_cells
    if isinstance(moduli, ElasticTensor):
        moduli = moduli.tensor()
    moduli = np.asarray(moduli, dtype=float)
    Cm = to_matrix(moduli, d)
    if Cm.ndim == 2:
        Cm = np.broadcast_to(Cm, (nc, d * d, d * d))
    blocks = ops.mesh.cell_volume[:, None, None] * Cm
    D = sp.bsr_matrix((blocks, np.arange(nc), np.arange(nc + 1)), shape=(nc * d * d, nc * d * d))
    K = ops.Gfull.T @ (D @ ops.Gfull) + eta * ops.S0
    K = 0.5 * (K + K.T)
    return K.tocsr()


def _simplex_vol(P: np.ndarray) -> float:
    d = P.shape[1]
    return abs(np.linalg.det(P[1:] - P[0])) / (2.0 if d == 2 else 6.0)


def vertex_mass_fragments(mesh: PolyMesh) -> tuple[np.ndarray, np.ndarray]:
    """Volumes kept by cells and received by boundary vertices.

    The barycentric dual fragment of vertex z in cell c is the union of the
    simplices (z, m_e, x_c) in 2D and (z, m_e, x_F, x_c) in 3D over facets F
    of c and edges e of F at z (m_e the edge midpoint).  A boundary vertex
    receives half of each fragment, i.e. the same simplices with x_c moved
    to the midpoint of z and x_c; the cell keeps the rest, so every cell
    keeps at least half of its volume.  Returns (cell_volumes,
    vertex_volumes), the latter indexed like ``mesh.boundary_vertices``.
    """
    X = mesh.vertices
    bindex = np.full(mesh.n_vertices, -1, dtype=np.int64)
    bindex[mesh.boundary_vertices] = np.arange(len(mesh.boundary_vertices))
    cell_vol = mesh.cell_volume.copy()
    vert_vol = np.zeros(len(mesh.boundary_vertices))
    for c in np.unique(mesh.facet_cells[mesh.boundary_facets, 0]):
        xc = mesh.cell_centroid[c]
        for f in mesh.cell_facets(c):
            vs = mesh.facet_vertices(f)
            if mesh.dim == 2:
                segs = [(vs[0], vs[1])]
            else:
                segs = list(zip(vs, np.roll(vs, -1)))
            for a, b in segs:
                me = 0.5 * (X[a] + X[b])
                for z in (a, b):
                    k = bindex[z]
                    if k < 0:
                        continue
                    apex = 0.5 * (X[z] + xc)
                    P = [X[z], me, apex] if mesh.dim == 2 else [X[z], me, mesh.facet_centroid[f], apex]
                    vol = _simplex_vol(np.array(P))
                    if not vol > 0:
                        raise MeshError(f"non-positive mass fragment at vertex {z} of cell {c}")
                    cell_vol[c] -= vol
                    vert_vol[k] += vol
    if np.any(cell_vol <= 0):
        raise MeshError(f"non-positive remaining cell mass in cell {int(np.argmin(cell_vol))}")
    return cell_vol, vert_vol


def lump_mass(mesh: PolyMesh, rho: float) -> np.ndarray:
    """Diagonal mass, one entry per vector dof."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    cv, vv = vertex_mass_fragments(mesh)
    point_mass = rho * np.concatenate([cv, vv])
    return np.repeat(point_mass, mesh.dim)


def _traction_scatter(dofmap: DofMap, k: int):
    """Facets of boundary condition ``k`` and the sparse map spreading facet
    forces on the stencil points (cached on the dof map)."""
    cache = dofmap.__dict__.setdefault("_scatter", {})
    if k not in cache:
        mesh, recon = dofmap.mesh, dofmap.recon
        fs = mesh.facets_with_tag(dofmap.bcs[k].tag)
        rows, cols, vals = [], [], []
        for j, F in enumerate(fs):
            st = recon.stencils[F]
            rows.append(st.points)
            cols.append(np.full(len(st.points), j))
            vals.append(st.coeffs)
        if len(fs):
            P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(dofmap.n_points, len(fs)))
        else:
            P = sp.csr_matrix((dofmap.n_points, 0))
        cache[k] = (fs, P)
    return cache[k]


def assemble_load(dofmap: DofMap, f: Callable | None, t: float) -> np.ndarray:
    """Load vector: f(x_c)|c| on cells, facet tractions g(x_F)|F| spread on
    the facet vertices with the boundary stencil weights.
    """
    mesh, recon = dofmap.mesh, dofmap.recon
    d = mesh.dim
    L = np.zeros((dofmap.n_points, d))
    if f is not None:
        fv = np.asarray(f(mesh.cell_centroid, t), dtype=float).reshape(mesh.n_cells, d)
        L[: mesh.n_cells] += fv * mesh.cell_volume[:, None]
    for k, bc in enumerate(dofmap.bcs):
        if bc.kind not in ("neumann", "pressure"):
            continue
        fs, P = _traction_scatter(dofmap, k)
        if len(fs) == 0:
            continue
        xF = mesh.facet_centroid[fs]
        if bc.kind == "pressure":
            p = np.asarray(bc.func(xF, t), dtype=float).reshape(len(fs))
            g = -p[:, None] * mesh.facet_normal[fs]
        else:
            g = np.asarray(bc.func(xF, t), dtype=float).reshape(len(fs), d)
        L += P @ (g * mesh.facet_area[fs][:, None])
    return L.reshape(-1)


@dataclass
class ConstrainedSystem:
    """Reduced system on the free dofs after eliminating Dirichlet dofs."""

    K: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n_dofs: int

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        u = np.zeros(self.n_dofs)
        u[self.free] = x_free
        u[self.fixed] = self.fixed_values
        return u


def apply_dirichlet(K: sp.spmatrix, rhs: np.ndarray, dofmap: DofMap, t: float | None = None,
                    values: np.ndarray | None = None) -> ConstrainedSystem:
    """Eliminate Dirichlet dofs: K_ff x = rhs_f - K_fd u_D."""
    K = sp.csr_matrix(K)
    free, fixed = dofmap.free_dofs, dofmap.dirichlet_dofs
    if values is None:
        values = dofmap.dirichlet_values(0.0 if t is None else t)
    Kff = K[free][:, free].tocsr()
    Kfd = K[free][:, fixed]
    r = rhs[free] - (Kfd @ values if len(fixed) else 0.0)
    return ConstrainedSystem(Kff, r, free, fixed, values, dofmap.n_dofs)
