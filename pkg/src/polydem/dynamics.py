"""Explicit two-step time integration of dynamic elasto-plasticity.

Displacements live on the time nodes t_n and velocities on the half nodes
t_{n+1/2}.  Each step predicts the displacement by free flight over
[t_n, t_{n+1}], integrates the forces with a symmetric quadrature while
chaining the explicit plastic update across the quadrature nodes, and
advances the velocity over the double interval

    1/2 M (v^{n+3/2} - v^{n-1/2}) = sum_k w_k (l(t_{n,k}) - a(u^{n,k})).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .plasticity import CellState, plas_exp, plastic_energy, stress
from .problem import Problem

__all__ = [
    "QuadratureRule",
    "DynState",
    "EnergyRow",
    "EnergyLedger",
    "InstabilityError",
    "estimate_lambda_max",
    "cfl_dt",
    "critical_dt",
    "stability_limit",
    "initial_state",
    "dynamic_step",
    "energy_report",
    "run_dynamics",
    "DynamicsResult",
]

log = logging.getLogger(__name__)

GUARD_FACTOR = 1e6


class InstabilityError(RuntimeError):
    """Raised when the explicit scheme blows up."""


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric rule on [t_n, t_n + dt] given by fractions of the step.

    ``nodes`` lie in [0, 1] and ``weights`` sum to one; :meth:`on` scales
    them to a concrete interval.
    """

    kind: str
    nodes: tuple
    weights: tuple

    @classmethod
    def from_name(cls, name: str) -> "QuadratureRule":
        if name == "midpoint":
            return cls("midpoint", (0.5,), (1.0,))
        if name in ("gauss5", "gauss-legendre-5"):
            x, w = np.polynomial.legendre.leggauss(3)
            return cls("gauss5", tuple((x + 1) / 2), tuple(w / 2))
        raise ValueError(f"unknown quadrature {name!r}; use 'midpoint' or 'gauss5'")

    def on(self, t0: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
        return t0 + dt * np.asarray(self.nodes), dt * np.asarray(self.weights)


@dataclass
class DynState:
    """u at t_n, v at t_{n-1/2} and t_{n+1/2}, plastic state at t_n."""

    u: np.ndarray
    v_prev: np.ndarray
    v_next: np.ndarray
    cells: CellState
    step: int = 0
    t: float = 0.0

    def copy(self) -> "DynState":
        return DynState(self.u.copy(), self.v_prev.copy(), self.v_next.copy(), self.cells.copy(), self.step, self.t)


@dataclass
class EnergyRow:
    t: float
    elastic: float
    kinetic: float
    plastic: float
    external: float
    imbalance: float


@dataclass
class EnergyLedger:
    """Energies per step; ``initial`` is E_elas^0 + E_kin^0."""

    initial: float = 0.0
    rows: list = field(default_factory=list)

    def append(self, row: EnergyRow) -> None:
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def relative_imbalance(self) -> float:
        """|imbalance| at the last row over the injected energy."""
        if not self.rows:
            return 0.0
        last = self.rows[-1]
        scale = max(abs(last.external), abs(self.initial), np.finfo(float).eps)
        return abs(last.imbalance) / scale

    def as_table(self) -> tuple[list[str], np.ndarray]:
        names = ["t", "elastic", "kinetic", "plastic", "external", "imbalance"]
        return names, np.array([[getattr(r, n) for n in names] for r in self.rows]).reshape(-1, len(names))


def estimate_lambda_max(K, tol: float = 1e-4, maxiter: int = 20000, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric positive semi-definite matrix by
    power iteration with Rayleigh quotients.

    Stops when two successive quotients agree to ``tol`` relative.
    """
    K = sp.csr_matrix(K) if sp.issparse(K) else np.asarray(K, float)
    n = K.shape[0]
    if n == 0:
        raise ValueError("empty operator")
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(maxiter):
        y = K @ x
        lam_new = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        x = y / ny
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
    raise RuntimeError(f"power iteration did not converge in {maxiter} iterations")


def cfl_dt(mass, lam_max: float, safety: float = 0.9) -> float:
    """safety * 2 sqrt(mu_min / lambda_max) with mu_min the smallest mass."""
    mass = np.asarray(mass, float)
    if not lam_max > 0:
        raise ValueError("lambda_max must be positive")
    if np.any(mass <= 0):
        raise ValueError("masses must be positive")
    return float(safety * 2.0 * np.sqrt(mass.min() / lam_max))


def critical_dt(problem: Problem, safety: float = 0.9, mass: np.ndarray | None = None) -> float:
    """CFL step from the elastic stiffness and lumped mass on the free dofs."""
    free = problem.dofmap.free_dofs
    K = problem.elastic_stiffness()[free][:, free]
    M = problem.mass() if mass is None else mass
    return cfl_dt(M[free], estimate_lambda_max(K), safety)


def stability_limit(problem: Problem, mass: np.ndarray | None = None) -> float:
    """Sharp linear stability limit 2 / sqrt(lambda_max(M^{-1} K)).

    With non-uniform lumped masses this exceeds the :func:`cfl_dt` bound,
    which only uses the smallest mass.
    """
    free = problem.dofmap.free_dofs
    M = (problem.mass() if mass is None else mass)[free]
    s = sp.diags(1.0 / np.sqrt(M))
    K = s @ problem.elastic_stiffness()[free][:, free] @ s
    return float(2.0 / np.sqrt(estimate_lambda_max(K)))


def _eval_dofs(problem: Problem, field_) -> np.ndarray:
    if field_ is None:
        return np.zeros(problem.n_dofs)
    if callable(field_):
        vals = np.asarray(field_(problem.recon.positions), dtype=float)
        return vals.reshape(-1)
    out = np.asarray(field_, dtype=float).reshape(-1)
    if out.shape != (problem.n_dofs,):
        raise ValueError(f"expected {problem.n_dofs} dof values, got {out.shape}")
    return out.copy()


def _dirichlet_velocity(problem: Problem, t: float, dt: float) -> np.ndarray:
    dm = problem.dofmap
    return (dm.dirichlet_values(t + dt) - dm.dirichlet_values(t)) / dt


def _forces(problem: Problem, u: np.ndarray, cells: CellState, t: float):
    """l(t) - a(eps_p; u, .) plus the load itself."""
    sigma = stress(problem.ops.strains(u), cells.eps_p, problem.material)
    load = problem.load(t)
    return load - problem.ops.internal_force(sigma, u, problem.eta), load


def initial_state(problem: Problem, dt: float, u0=None, v0=None, mass: np.ndarray | None = None) -> DynState:
    """Initial data sampled at cell barycentres and boundary vertices.

    The two starting velocities are v0 -+ dt/2 M^{-1} F(0) so that their
    difference matches one step of the scheme and v^{1/2} is second-order
    accurate.
    """
    dm = problem.dofmap
    M = problem.mass() if mass is None else mass
    u = _eval_dofs(problem, u0)
    u[dm.dirichlet_dofs] = dm.dirichlet_values(0.0)
    v = _eval_dofs(problem, v0)
    cells = CellState.virgin(problem.mesh.n_cells)
    F, _ = _forces(problem, u, cells, 0.0)
    a0 = F / M
    v_prev, v_next = v - 0.5 * dt * a0, v + 0.5 * dt * a0
    v_prev[dm.dirichlet_dofs] = _dirichlet_velocity(problem, -dt, dt)
    v_next[dm.dirichlet_dofs] = _dirichlet_velocity(problem, 0.0, dt)
    strain = problem.ops.strains(u)
    cells.sigma = stress(strain, cells.eps_p, problem.material)
    return DynState(u, v_prev, v_next, cells, 0, 0.0)


@dataclass
class StepWork:
    """Work of loads and Dirichlet reactions over one step (reaction is an impulse)."""

    external: float
    reaction: np.ndarray


def dynamic_step(problem: Problem, state: DynState, dt: float, rule: QuadratureRule,
                 mass: np.ndarray | None = None) -> tuple[DynState, StepWork]:
    """Advance (u^n, v^{n-1/2}, v^{n+1/2}) to (u^{n+1}, v^{n+1/2}, v^{n+3/2})."""
    dm = problem.dofmap
    mat = problem.material
    M = problem.mass() if mass is None else mass
    free, fixed = dm.free_dofs, dm.dirichlet_dofs
    times, weights = rule.on(state.t, dt)
    eps_p, p = state.cells.eps_p, state.cells.p
    Fbar = np.zeros(problem.n_dofs)
    Lbar = np.zeros(problem.n_dofs)
    for tk, wk in zip(times, weights):
        uk = state.u + (tk - state.t) * state.v_next
        eps = problem.ops.strains(uk)
        eps_p, p = plas_exp(eps_p, p, eps, mat)
        sigma = stress(eps, eps_p, mat)
        load = problem.load(tk)
        Fbar += wk * (load - problem.ops.internal_force(sigma, uk, problem.eta))
        Lbar += wk * load
    v_new = np.empty_like(state.v_prev)
    v_new[free] = state.v_prev[free] + 2.0 * Fbar[free] / M[free]
    v_new[fixed] = _dirichlet_velocity(problem, state.t + dt, dt)
    u_new = state.u + dt * state.v_next
    u_new[fixed] = dm.dirichlet_values(state.t + dt)
    # impulse needed on the Dirichlet dofs to realise the prescribed velocity
    reaction = 0.5 * M[fixed] * (v_new[fixed] - state.v_prev[fixed]) - Fbar[fixed]
    work = float(Lbar @ state.v_next + reaction @ state.v_next[fixed])
    sigma_new = stress(problem.ops.strains(u_new), eps_p, mat)
    new = DynState(u_new, state.v_next, v_new, CellState(eps_p, p, sigma_new), state.step + 1, state.t + dt)
    limit = GUARD_FACTOR * problem.mesh.diameter
    umax = np.max(np.abs(u_new)) if len(u_new) else 0.0
    if not np.isfinite(umax) or not np.all(np.isfinite(v_new)) or umax > limit:
        raise InstabilityError(
            f"instability at step {new.step} (t={new.t:.6g}): max|u| = {umax:.3e} exceeds {limit:.3e}")
    return new, StepWork(work, reaction)


def _elastic_energy(problem: Problem, state: DynState) -> float:
    ops = problem.ops
    eps = ops.strains(state.u)
    sigma = stress(eps, state.cells.eps_p, problem.material)
    d = problem.dim
    e = np.zeros_like(sigma)
    e[:, :d, :d] = eps
    e = e - state.cells.eps_p
    bulk = 0.5 * np.sum(problem.mesh.cell_volume * np.einsum("cij,cij->c", sigma, e))
    pen = 0.5 * problem.eta * float(state.u @ (ops.S0 @ state.u))
    return float(bulk + pen)


def energy_report(problem: Problem, state: DynState, ledger: EnergyLedger, external: float,
                  mass: np.ndarray | None = None) -> EnergyRow:
    """Append the energies at t_n (state after the step) to ``ledger``.

    ``external`` is the cumulated work of loads and reactions up to t_n.
    The elastic energy includes the penalty term.
    """
    M = problem.mass() if mass is None else mass
    el = _elastic_energy(problem, state)
    kin = 0.5 * float(state.v_next @ (M * state.v_prev))
    pl = plastic_energy(state.cells.p, problem.mesh.cell_volume, problem.material)
    imb = (el + kin + pl) - (external + ledger.initial)
    row = EnergyRow(state.t, el, kin, pl, external, imb)
    ledger.append(row)
    return row


@dataclass
class DynamicsResult:
    state: DynState
    ledger: EnergyLedger
    dt: float
    n_steps: int
    snapshots: list = field(default_factory=list)


def run_dynamics(problem: Problem, T: float, dt: float | None = None, rule: QuadratureRule | str = "midpoint",
                 u0=None, v0=None, cfl_safety: float = 0.9, output_every: int = 1, callback=None,
                 snapshot_every: int = 0) -> DynamicsResult:
    """Integrate on [0, T] with constant step ``dt`` (CFL-based if None).

    ``dt`` is shrunk to T / ceil(T / dt) so that the last step lands on T.

    ``callback(state)`` is called after every step.  Energies are recorded
    every ``output_every`` steps and at the final step.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if isinstance(rule, str):
        rule = QuadratureRule.from_name(rule)
    M = problem.mass()
    if dt is None:
        dt = critical_dt(problem, cfl_safety, M)
    if not dt > 0:
        raise ValueError("dt must be positive")
    n_steps = int(np.ceil(T / dt - 1e-9))
    dt = T / n_steps  # never larger than requested; the run ends exactly at T
    state = initial_state(problem, dt, u0, v0, M)
    ledger = EnergyLedger()
    ledger.initial = _elastic_energy(problem, state) + 0.5 * float(state.v_next @ (M * state.v_prev))
    external = 0.0
    snaps = []
    log.info("dynamics: %d steps of dt=%.4g", n_steps, dt)
    for n in range(n_steps):
        state, work = dynamic_step(problem, state, dt, rule, M)
        external += work.external
        if (n + 1) % output_every == 0 or n + 1 == n_steps:
            energy_report(problem, state, ledger, external, M)
        if snapshot_every and (n + 1) % snapshot_every == 0:
            snaps.append((state.t, state.u.copy()))
        if callback is not None:
            callback(state)
    return DynamicsResult(state, ledger, dt, n_steps, snaps)
