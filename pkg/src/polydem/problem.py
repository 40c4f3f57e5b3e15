"""Bundle of everything a solver needs: mesh, operators, dofs, material, loads."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .assembly import DofMap, Operators, assemble_load, assemble_stiffness, build_operators, lump_mass
from .mesh import PolyMesh
from .plasticity import Material
from .reconstruct import ReconstructionMap, build_reconstruction

__all__ = ["Problem", "build_problem"]


@dataclass
class Problem:
    mesh: PolyMesh
    recon: ReconstructionMap
    ops: Operators
    dofmap: DofMap
    material: Material
    beta: float = 1.0
    body_force: Callable | None = None

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs

    @property
    def eta(self) -> float:
        return self.beta * self.material.mu

    def load(self, t: float) -> np.ndarray:
        return assemble_load(self.dofmap, self.body_force, t)

    def elastic_stiffness(self):
        return assemble_stiffness(self.ops, self.material.elastic, self.eta)

    def mass(self) -> np.ndarray:
        return lump_mass(self.mesh, self.material.rho)

    def dirichlet_vector(self, t: float, u: np.ndarray | None = None) -> np.ndarray:
        """Copy of ``u`` (or zeros) with Dirichlet dofs set to u_D(t)."""
        out = np.zeros(self.n_dofs) if u is None else np.array(u, dtype=float)
        out[self.dofmap.dirichlet_dofs] = self.dofmap.dirichlet_values(t)
        return out


def build_problem(mesh: PolyMesh, material: Material, bcs, *, beta: float = 1.0, candidates: int | None = None,
                  body_force: Callable | None = None, recon: ReconstructionMap | None = None) -> Problem:
    if not beta > 0:
        raise ValueError("penalty beta must be positive")
    recon = recon or build_reconstruction(mesh, candidates)
    ops = build_operators(mesh, recon)
    dofmap = DofMap(mesh, recon, list(bcs))
    return Problem(mesh, recon, ops, dofmap, material, beta, body_force)
