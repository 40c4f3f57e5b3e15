"""Load-stepped quasi-static elasto-plasticity with radial-return iterations."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_stiffness
from .linsolve import linear_solve
from .plasticity import CellState, plas_imp
from .problem import Problem

__all__ = ["LoadProgram", "SolveControls", "StepResult", "ConvergenceError", "residual", "quasistatic_solve", "static_solve"]

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class LoadProgram:
    """Pseudo-times t_1..t_N at which boundary data and loads are evaluated."""

    times: tuple

    def __post_init__(self):
        if len(self.times) < 1:
            raise ValueError("load program needs at least one step")
        if not np.all(np.isfinite(self.times)):
            raise ValueError("load program times must be finite")

    @classmethod
    def ramp(cls, n_steps: int, t_end: float = 1.0) -> "LoadProgram":
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        return cls(tuple(float(t) for t in np.linspace(0.0, t_end, n_steps + 1)[1:]))

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class SolveControls:
    tol: float = 1e-8
    max_iter: int = 50
    linear_solver: str = "auto"
    linear_tol: float = 1e-12

    def __post_init__(self):
        if not (self.tol > 0 and self.linear_tol > 0 and self.max_iter >= 1):
            raise ValueError("tolerances must be positive and max_iter >= 1")


@dataclass
class StepResult:
    t: float
    u: np.ndarray
    state: CellState
    strain: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)
    reaction: np.ndarray | None = None


def _residual_vector(problem: Problem, u, sigma, load):
    return load - problem.ops.internal_force(sigma, u, problem.eta)


def _scaled_norm(problem: Problem, r, load):
    dm = problem.dofmap
    scale = max(np.linalg.norm(load), np.linalg.norm(r[dm.dirichlet_dofs]))
    scale = scale if scale > 0 else 1.0
    return float(np.linalg.norm(r[dm.free_dofs]) / scale)


def residual(problem: Problem, u: np.ndarray, sigma: np.ndarray, load: np.ndarray) -> float:
    """Scaled Euclidean norm of l - a_h(u, .) on the free dofs.

    The scale is the larger of |l| and the Dirichlet reaction norm (1 if
    both vanish), so that purely displacement-driven steps are measured
    relative to the forces they induce.
    """
    return _scaled_norm(problem, _residual_vector(problem, u, sigma, load), load)


def quasistatic_solve(problem: Problem, program: LoadProgram, controls: SolveControls | None = None,
                      state0: CellState | None = None, u0: np.ndarray | None = None, callback=None) -> list:
    """Run the load program; returns one :class:`StepResult` per step."""
    controls = controls or SolveControls()
    mat = problem.material
    ops = problem.ops
    dm = problem.dofmap
    nc = problem.mesh.n_cells
    free = dm.free_dofs
    state = state0.copy() if state0 is not None else CellState.virgin(nc)
    u = np.zeros(problem.n_dofs) if u0 is None else np.array(u0, dtype=float)
    fixed = dm.dirichlet_dofs
    eps_prev = ops.strains(u)
    C_prev = plas_imp(state.eps_p, state.p, eps_prev, eps_prev, mat)[2]
    results = []
    for n, t in enumerate(program.times):
        load = problem.load(t)
        # predictor: previous converged tangent, increments of loads and Dirichlet data
        K = assemble_stiffness(ops, C_prev, problem.eta)
        u_D = dm.dirichlet_values(t)
        r_prev = load - ops.internal_force(state.sigma, u, problem.eta)
        rhs = r_prev[free] - K[free][:, fixed] @ (u_D - u[fixed])
        u[fixed] = u_D
        u[free] += linear_solve(K[free][:, free], rhs, controls.linear_solver, controls.linear_tol)
        solves = 1
        history = []
        while True:
            eps = ops.strains(u)
            eps_p, p, Cep, sigma = plas_imp(state.eps_p, state.p, eps_prev, eps, mat)
            r = _residual_vector(problem, u, sigma, load)
            res = _scaled_norm(problem, r, load)
            history.append(res)
            if len(history) > 1 and res > history[-2]:
                log.warning("step %d: residual increased at iteration %d (%.3e -> %.3e)",
                            n, solves, history[-2], res)
            if res < controls.tol:
                break
            if solves >= controls.max_iter:
                raise ConvergenceError(
                    f"step {n} (t={t:g}) did not converge in {controls.max_iter} iterations; residual {res:.3e}")
            K = assemble_stiffness(ops, Cep, problem.eta)
            u[free] += linear_solve(K[free][:, free], r[free], controls.linear_solver, controls.linear_tol)
            solves += 1
        k = solves
        state = CellState(eps_p, p, sigma)
        eps_prev = eps
        C_prev = Cep
        step = StepResult(t, u.copy(), state.copy(), eps, k, history, -r)
        results.append(step)
        log.info("step %d t=%g iterations=%d residual=%.3e max p=%.3e", n, t, k, res, p.max() if nc else 0.0)
        if callback is not None:
            callback(step)
    return results


def static_solve(problem: Problem, t: float = 1.0, controls: SolveControls | None = None) -> np.ndarray:
    """Single linear elastic solve at time ``t``."""
    controls = controls or SolveControls()
    K = problem.elastic_stiffness()
    load = problem.load(t)
    u = problem.dirichlet_vector(t)
    free = problem.dofmap.free_dofs
    rhs = load[free] - K[free][:, problem.dofmap.dirichlet_dofs] @ u[problem.dofmap.dirichlet_dofs]
    u[free] = linear_solve(K[free][:, free], rhs, controls.linear_solver, controls.linear_tol)
    return u
