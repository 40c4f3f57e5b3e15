"""Particle-force reading of the discrete equations.

Cells and boundary vertices act as particles.  The internal virtual work
-a_h(eps_p; u, v) is split into elasto-plastic facet fluxes, two families of
penalty forces and a correction that collects the stress-jump term

    sum_{F interior} |F| ([Sigma]_F n_F) . ({v}_F - R(v)_F),

which a purely particle-based reading drops.  With the correction the
decomposition is an exact algebraic identity; without it the defect is of
higher order for smooth fields.

Jumps use the convention [w]_F = w_{c-} - w_{c+} on interior facets and
trace minus facet reconstruction, w_{c-}(x_F) - R(w)_F, on boundary facets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import Operators
from .problem import Problem

__all__ = [
    "ParticleSet",
    "ForceBreakdown",
    "particle_set",
    "incidence_sign",
    "elastic_flux",
    "elastic_forces",
    "penalty_forces",
    "force_breakdown",
    "force_balance_check",
]


@dataclass
class ParticleSet:
    """Cells plus boundary vertices carrying at least one free component.

    ``points`` index the dof points (cells first, then boundary vertices);
    ``mass`` and ``force`` are per particle, shape (n, d).
    """

    points: np.ndarray
    mass: np.ndarray
    force: np.ndarray

    def __len__(self) -> int:
        return len(self.points)


def particle_set(problem: Problem, t: float = 0.0) -> ParticleSet:
    d = problem.dim
    nc = problem.mesh.n_cells
    npts = problem.recon.n_points
    free = np.zeros(problem.n_dofs, dtype=bool)
    free[problem.dofmap.free_dofs] = True
    keep = free.reshape(npts, d).any(axis=1)
    keep[:nc] = True
    pts = np.flatnonzero(keep)
    M = problem.mass().reshape(npts, d)
    F = problem.load(t).reshape(npts, d)
    return ParticleSet(pts, M[pts], F[pts])


@dataclass
class ForceBreakdown:
    """Per-point forces (n_points, d)."""

    ep: np.ndarray
    pen1: np.ndarray
    pen2: np.ndarray
    corr: np.ndarray

    @property
    def pen(self) -> np.ndarray:
        return self.pen1 + self.pen2

    def total(self, correction: bool = True) -> np.ndarray:
        out = self.ep + self.pen1 + self.pen2
        return out + self.corr if correction else out

    def pairing(self, v: np.ndarray, correction: bool = True) -> float:
        """sum_p Phi_p . v_p for a dof vector ``v``."""
        return float(np.sum(self.total(correction) * np.asarray(v).reshape(self.ep.shape)))


def incidence_sign(mesh) -> np.ndarray:
    """iota_{c,F} per facet side, shape (n_facets, 2): +1 for c-, -1 for c+."""
    out = np.zeros((mesh.n_facets, 2))
    out[:, 0] = 1.0
    out[:, 1] = np.where(mesh.facet_cells[:, 1] >= 0, -1.0, 0.0)
    return out


def elastic_flux(mesh, sigma: np.ndarray) -> np.ndarray:
    """Phi^ep_{c-,F} for every facet, shape (n_facets, d).

    Interior facets carry |F| {Sigma}_F n_F, boundary facets |F| Sigma_{c-} n_F.
    The flux on c+ is the opposite one.
    """
    d = mesh.dim
    S = np.asarray(sigma)[:, :d, :d]
    cm, cp = mesh.facet_cells[:, 0], mesh.facet_cells[:, 1]
    interior = cp >= 0
    avg = S[cm].copy()
    avg[interior] = 0.5 * (S[cm[interior]] + S[cp[interior]])
    return mesh.facet_area[:, None] * np.einsum("fij,fj->fi", avg, mesh.facet_normal)


def _scatter_cells(mesh, per_facet: np.ndarray, n_points: int) -> np.ndarray:
    """Add iota_{c,F} * per_facet[F] to both cells of every facet."""
    out = np.zeros((n_points, per_facet.shape[1]))
    iota = incidence_sign(mesh)
    for side in (0, 1):
        fs = np.flatnonzero(mesh.facet_cells[:, side] >= 0)
        np.add.at(out, mesh.facet_cells[fs, side], iota[fs, side, None] * per_facet[fs])
    return out


def _boundary_R(ops: Operators) -> sp.csr_matrix:
    is_b = (ops.mesh.facet_cells[:, 1] < 0).astype(float)
    return (sp.diags(is_b) @ ops.recon.R).tocsr()


def elastic_forces(ops: Operators, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elasto-plastic particle forces and the stress-jump correction."""
    mesh = ops.mesh
    d = mesh.dim
    npts = ops.recon.n_points
    flux = elastic_flux(mesh, sigma)
    ep = _scatter_cells(mesh, flux, npts)
    # boundary vertices: -sum_F alpha_F^z Phi_{c-,F}
    ep -= _boundary_R(ops).T @ flux

    S = np.asarray(sigma)[:, :d, :d]
    cm, cp = mesh.facet_cells[:, 0], mesh.facet_cells[:, 1]
    fi = np.flatnonzero(cp >= 0)
    g = np.zeros((mesh.n_facets, d))
    g[fi] = mesh.facet_area[fi, None] * np.einsum("fij,fj->fi", S[cm[fi]] - S[cp[fi]], mesh.facet_normal[fi])
    corr = np.zeros((npts, d))
    np.add.at(corr, cm[fi], 0.5 * g[fi])
    np.add.at(corr, cp[fi], 0.5 * g[fi])
    Ri = (sp.diags((cp >= 0).astype(float)) @ ops.recon.R).tocsr()
    corr -= Ri.T @ g
    return ep, corr


def _paper_jumps(ops: Operators, u: np.ndarray) -> np.ndarray:
    j = ops.jumps(u)
    bnd = ops.mesh.facet_cells[:, 1] < 0
    j[bnd] *= -1.0
    return j


def penalty_forces(ops: Operators, u: np.ndarray, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Penalty forces: direct facet term and the stencil-mediated term."""
    mesh = ops.mesh
    d = mesh.dim
    npts = ops.recon.n_points
    w = eta * mesh.facet_area / mesh.facet_diameter
    wj = w[:, None] * _paper_jumps(ops, u)

    pen1 = -_scatter_cells(mesh, wj, npts)
    pen1 += _boundary_R(ops).T @ wj

    # A_c = sum_{F in c} iota_{c,F} w_F [r(u)]_F (x_F - x_c)^T
    iota = incidence_sign(mesh)
    A = np.zeros((mesh.n_cells, d, d))
    for side in (0, 1):
        fs = np.flatnonzero(mesh.facet_cells[:, side] >= 0)
        cs = mesh.facet_cells[fs, side]
        arm = mesh.facet_centroid[fs] - mesh.cell_centroid[cs]
        np.add.at(A, cs, iota[fs, side, None, None] * np.einsum("fi,fj->fij", wj[fs], arm))
    # b_{F'} = sum_{c adjacent to F'} |F'|/|c| A_c n_{F',c}
    b = np.zeros((mesh.n_facets, d))
    for side in (0, 1):
        fs = np.flatnonzero(mesh.facet_cells[:, side] >= 0)
        cs = mesh.facet_cells[fs, side]
        n = iota[fs, side, None] * mesh.facet_normal[fs]
        b[fs] += (mesh.facet_area[fs] / mesh.cell_volume[cs])[:, None] * np.einsum("fij,fj->fi", A[cs], n)
    pen2 = -(ops.recon.R.T @ b)
    return pen1, pen2


def force_breakdown(ops: Operators, u: np.ndarray, sigma: np.ndarray, eta: float) -> ForceBreakdown:
    ep, corr = elastic_forces(ops, sigma)
    pen1, pen2 = penalty_forces(ops, u, eta)
    return ForceBreakdown(ep, pen1, pen2, corr)


def force_balance_check(ops: Operators, u: np.ndarray, sigma: np.ndarray, eta: float,
                        tests: np.ndarray) -> dict:
    """Largest defect between the particle-force pairing and -a_h.

    ``tests`` holds test dof vectors as rows.  Each defect is divided by
    the largest |a_h(u, v)| over the tests.  Returns a dict with keys
    ``with_correction`` and ``without_correction``.
    """
    tests = np.atleast_2d(tests)
    br = force_breakdown(ops, u, sigma, eta)
    f_int = ops.internal_force(sigma, u, eta)
    ref = -(tests @ f_int)
    scale = max(np.max(np.abs(ref)), np.finfo(float).tiny)
    out = {}
    for key, corr in (("with_correction", True), ("without_correction", False)):
        pair = tests @ br.total(corr).reshape(-1)
        out[key] = float(np.max(np.abs(pair - ref)) / scale)
    return out
