"""Linear solvers for the symmetric positive definite reduced systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
import pyamg

__all__ = ["LinearSolverError", "CGInfo", "pcg", "amg_cg", "linear_solve"]

DIRECT_LIMIT = 100000
# SuperLU fill-in grows quickly for the wide 3D stencils; above this many
# nonzeros per row multigrid is faster already at a few thousand dofs
DENSE_ROW = 60


class LinearSolverError(RuntimeError):
    pass


@dataclass
class CGInfo:
    iterations: int
    relative_residual: float


def pcg(A, b, tol: float = 1e-10, maxiter: int | None = None, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    Raises :class:`LinearSolverError` on negative curvature (indefinite A)
    or when the iteration cap is reached.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    maxiter = maxiter or 10 * n
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise LinearSolverError("non-positive diagonal entry: matrix is not SPD")
    Minv = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), CGInfo(0, 0.0)
    z = Minv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0:
            raise LinearSolverError(f"negative curvature p.Ap = {curv:.3e} at iteration {it}")
        a = rz / curv
        x += a * p
        r -= a * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, CGInfo(it, res)
        z = Minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise LinearSolverError(f"CG did not converge in {maxiter} iterations (relative residual {res:.3e})")


def amg_cg(A, b, tol: float = 1e-10, maxiter: int | None = None) -> np.ndarray:
    """CG preconditioned by smoothed-aggregation algebraic multigrid."""
    A = sp.csr_matrix(A)
    if np.linalg.norm(b) == 0:
        return np.zeros(A.shape[0])
    ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric")
    residuals = []
    x = ml.solve(b, tol=tol, accel="cg", maxiter=maxiter or 500, residuals=residuals)
    rel = np.linalg.norm(b - A @ x) / np.linalg.norm(b)
    if not np.isfinite(rel) or rel > max(1e3 * tol, 1e-8):
        raise LinearSolverError(f"AMG-CG stalled at relative residual {rel:.3e}")
    return x


def linear_solve(A, b, method: str = "auto", tol: float = 1e-10, maxiter: int | None = None) -> np.ndarray:
    """Solve A x = b for SPD A.

    ``method`` is ``direct`` (SuperLU), ``cg`` (Jacobi PCG), ``amg``
    (multigrid-preconditioned CG) or ``auto``, which picks ``direct`` for
    small or sparse systems and ``amg`` otherwise.
    """
    A = sp.csr_matrix(A)
    if method == "auto":
        n = A.shape[0]
        small = n <= 1000 or (A.nnz <= DENSE_ROW * n and n <= DIRECT_LIMIT)
        method = "direct" if small else "amg"
    if method == "amg":
        return amg_cg(A, b, tol=tol, maxiter=maxiter)
    if method == "direct":
        if A.shape[0] == 0:
            return np.zeros(0)
        x = sla.spsolve(A.tocsc(), b)
        if not np.all(np.isfinite(x)):
            raise LinearSolverError("direct solve produced non-finite values (singular matrix?)")
        return x
    if method == "cg":
        return pcg(A, b, tol=tol, maxiter=maxiter)[0]
    raise ValueError(f"unknown linear solver {method!r}")
