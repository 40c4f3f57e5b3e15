"""Pipelines behind the command line: build a problem from a configuration,
run it in the requested regime and write CSV, VTK and figure artifacts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import meshgen
from .analytic import get_case
from .assembly import BoundaryCondition
from .config import CaseConfig, ConfigError, Expression, VectorExpression
from .demforces import force_balance_check, force_breakdown
from .dynamics import QuadratureRule, run_dynamics
from .errors import convergence_order, energy_error, l2_error, reconstruct_at
from .io import write_csv, write_vtk
from .mesh import MeshError, PolyMesh, load_mesh
from .plasticity import Material, stress, von_mises
from .problem import Problem, build_problem
from .quasistatic import LoadProgram, SolveControls, quasistatic_solve, static_solve

__all__ = ["CaseResult", "build_mesh", "build_case_problem", "run_case", "run_convergence", "run_forces"]

log = logging.getLogger(__name__)


@dataclass
class CaseResult:
    status: int
    artifacts: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def build_mesh(cfg: CaseConfig, overrides: dict | None = None) -> PolyMesh:
    spec = cfg.mesh
    try:
        if "path" in spec:
            p = Path(spec["path"])
            return load_mesh(p if p.is_absolute() else cfg.base_dir / p, spec.get("format"))
        params = dict(spec.get("params", {}))
        params.update(overrides or {})
        return meshgen.build(spec["generator"], **params)
    except (MeshError, TypeError, ValueError) as exc:
        raise ConfigError(f"{cfg.path}: [mesh] {exc}") from None


def _material(cfg: CaseConfig) -> Material:
    try:
        return Material(**cfg.material)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cfg.path}: [material] {exc}") from None


def _bcs(cfg: CaseConfig, dim: int) -> list:
    out = []
    for spec in cfg.bcs:
        if spec.kind == "pressure":
            func = Expression(spec.value, cfg.params)
        else:
            vals = spec.value if isinstance(spec.value, list) else [spec.value] * dim
            func = VectorExpression(vals, dim, cfg.params)
        out.append(BoundaryCondition(spec.tag, spec.kind, func, spec.components))
    return out


def build_case_problem(cfg: CaseConfig, overrides: dict | None = None) -> Problem:
    mesh = build_mesh(cfg, overrides)
    body = VectorExpression(cfg.body_force, mesh.dim, cfg.params) if cfg.body_force else None
    try:
        return build_problem(mesh, _material(cfg), _bcs(cfg, mesh.dim), beta=cfg.beta,
                             candidates=cfg.candidates, body_force=body)
    except ValueError as exc:
        raise ConfigError(f"{cfg.path}: {exc}") from None


def _cell_fields(problem: Problem, u: np.ndarray, eps_p=None, p=None) -> dict:
    d = problem.dim
    nc = problem.mesh.n_cells
    eps = problem.ops.strains(u)
    eps_p = np.zeros((nc, 3, 3)) if eps_p is None else eps_p
    sig = stress(eps, eps_p, problem.material)
    return {
        "u": u.reshape(-1, d)[:nc],
        "p": np.zeros(nc) if p is None else p,
        "tr_sigma": np.trace(sig, axis1=1, axis2=2),
        "von_mises": von_mises(sig),
    }


def _points_table(problem: Problem, u: np.ndarray):
    d = problem.dim
    names = ["x", "y", "z"][:d] + ["ux", "uy", "uz"][:d]
    return names, np.hstack([problem.recon.positions, u.reshape(-1, d)])


def _mean_tensor(problem: Problem, T: np.ndarray) -> np.ndarray:
    v = problem.mesh.cell_volume
    return np.einsum("c,cij->ij", v, T) / v.sum()


def _torque_z(problem: Problem, sigma: np.ndarray, length: float) -> float:
    m = problem.mesh
    x = m.cell_centroid
    return float(np.sum(m.cell_volume * (x[:, 0] * sigma[:, 1, 2] - x[:, 1] * sigma[:, 0, 2])) / length)


def _run_static(cfg: CaseConfig, problem: Problem, out: Path, res: CaseResult):
    u = static_solve(problem, float(cfg.quasistatic.get("t", 1.0)), _controls(cfg))
    names, table = _points_table(problem, u)
    res.artifacts["displacement"] = write_csv(out / "displacement.csv", names, table)
    row = {"h": problem.mesh.h, "dofs": problem.n_dofs}
    if cfg.name == "manufactured2d":
        case = get_case("manufactured2d")
        row["l2_error"] = l2_error(problem.ops, u, case.displacement)
        uI = case.displacement(problem.recon.positions).ravel()
        row["energy_error"] = energy_error(problem.elastic_stiffness(), uI, u)
    res.summary.update(row)
    res.artifacts["summary"] = write_csv(out / "summary.csv", list(row), [list(row.values())])
    return u, None


def _controls(cfg: CaseConfig) -> SolveControls:
    q = cfg.quasistatic
    return SolveControls(tol=float(q.get("tol", 1e-8)), max_iter=int(q.get("max_iter", 50)),
                         linear_solver=q.get("linear_solver", "auto"), linear_tol=float(q.get("linear_tol", 1e-12)))


def _run_quasistatic(cfg: CaseConfig, problem: Problem, out: Path, res: CaseResult):
    q = cfg.quasistatic
    program = LoadProgram.ramp(int(q.get("steps", 10)), float(q.get("t_end", 1.0)))
    length = float(q.get("length", problem.mesh.diameter))
    rows = []

    def monitor(step):
        e = _mean_tensor(problem, np.pad(step.strain, ((0, 0), (0, 3 - problem.dim), (0, 3 - problem.dim))))
        s = _mean_tensor(problem, step.state.sigma)
        row = [step.t, step.iterations, step.residuals[-1], float(step.state.p.max()),
               int(np.sum(step.state.p > 0)), e[0, 0], s[0, 0]]
        if problem.dim == 3:
            row.append(_torque_z(problem, step.state.sigma, length))
        rows.append(row)

    steps = quasistatic_solve(problem, program, _controls(cfg), callback=monitor)
    header = ["t", "iterations", "residual", "max_p", "plastic_cells", "mean_exx", "mean_sxx"]
    if problem.dim == 3:
        header.append("torque_z")
    res.artifacts["history"] = write_csv(out / "history.csv", header, rows)
    last = steps[-1]
    names, table = _points_table(problem, last.u)
    res.artifacts["displacement"] = write_csv(out / "displacement.csv", names, table)
    res.summary.update(steps=len(steps), max_p=float(last.state.p.max()))
    if cfg.output.get("figures", True):
        from . import plotting

        hist = np.asarray(rows, dtype=float)
        ref = None
        if cfg.name == "traction":
            bar = get_case("traction")
            ref = bar.stress
        res.artifacts["figure_stress_strain"] = plotting.stress_strain(
            out / "stress_strain.png", hist[:, 5], hist[:, 6], reference=ref)
        if problem.dim == 3 and "alpha_max" in cfg.params:
            angle = float(cfg.params["alpha_max"]) * hist[:, 0]
            ref = get_case("torsion").torque if cfg.name == "torsion" else None
            res.artifacts["figure_torque"] = plotting.torque_angle(out / "torque_angle.png", angle, hist[:, 7], ref)
    return last.u, last.state


def _run_dynamic(cfg: CaseConfig, problem: Problem, out: Path, res: CaseResult):
    dyn = cfg.dynamic
    d = problem.dim
    rule = QuadratureRule.from_name(dyn.get("quadrature", "midpoint"))
    every = int(dyn.get("output_every", 1))
    probes = np.asarray(cfg.output.get("probes", []), dtype=float).reshape(-1, d)
    u0 = VectorExpression(dyn["initial_displacement"], d, cfg.params) if "initial_displacement" in dyn else None
    v0 = VectorExpression(dyn["initial_velocity"], d, cfg.params) if "initial_velocity" in dyn else None
    probe_rows = []

    def cb(state):
        if len(probes) and state.step % every == 0:
            vals = reconstruct_at(problem.ops, state.u, probes)
            probe_rows.append([state.t, *vals.ravel()])

    result = run_dynamics(problem, float(_require_key(dyn, "T", cfg)), dt=dyn.get("dt"), rule=rule, u0=u0, v0=v0,
                          cfl_safety=float(dyn.get("cfl_safety", 0.9)), output_every=every, callback=cb)
    names, table = result.ledger.as_table()
    res.artifacts["energy"] = write_csv(out / "energy.csv", names, table)
    if len(probes):
        header = ["t"] + [f"p{k}_u{c}" for k in range(len(probes)) for c in "xyz"[:d]]
        res.artifacts["probes"] = write_csv(out / "probes.csv", header, probe_rows)
    res.summary.update(dt=result.dt, steps=result.n_steps, relative_imbalance=result.ledger.relative_imbalance())
    if cfg.output.get("figures", True):
        from . import plotting

        res.artifacts["figure_energy"] = plotting.energy_history(out / "energy.png", result.ledger)
    st = result.state
    return st.u, st.cells


def _require_key(d: dict, key: str, cfg: CaseConfig):
    if key not in d:
        raise ConfigError(f"{cfg.path}: [{cfg.regime}] missing key {key!r}")
    return d[key]


_PIPELINES = {"static": _run_static, "quasistatic": _run_quasistatic, "dynamic": _run_dynamic}


def run_case(cfg: CaseConfig) -> CaseResult:
    """Run the configured regime and write its artifacts."""
    if cfg.regime not in _PIPELINES:
        raise ConfigError(f"{cfg.path}: unknown regime {cfg.regime!r}")
    problem = build_case_problem(cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    res = CaseResult(0)
    u, state = _PIPELINES[cfg.regime](cfg, problem, out, res)
    if cfg.output.get("vtk", True):
        fields = _cell_fields(problem, u, None if state is None else state.eps_p, None if state is None else state.p)
        res.artifacts["vtk"] = write_vtk(out / "solution.vtk", problem.mesh, fields, title=cfg.name or cfg.regime)
    summary = {k: float(v) for k, v in res.summary.items()}
    res.artifacts["run_summary"] = write_csv(out / "run_summary.csv", list(summary), [list(summary.values())])
    return res


def run_convergence(cfg: CaseConfig) -> CaseResult:
    """Static manufactured-solution study over the mesh levels in [convergence]."""
    levels = cfg.convergence.get("levels")
    if not levels or len(levels) < 2:
        raise ConfigError(f"{cfg.path}: [convergence] needs at least two 'levels'")
    if cfg.name != "manufactured2d":
        raise ConfigError(f"{cfg.path}: convergence studies need an analytic static case (manufactured2d)")
    case = get_case("manufactured2d")
    rows = []
    for lev in levels:
        problem = build_case_problem(cfg, lev)
        u = static_solve(problem, 1.0, _controls(cfg))
        uI = case.displacement(problem.recon.positions).ravel()
        rows.append([problem.mesh.h, problem.n_dofs, l2_error(problem.ops, u, case.displacement),
                     energy_error(problem.elastic_stiffness(), uI, u)])
    rows = np.array(rows)
    d = 2
    l2o = [np.nan] + convergence_order(rows[:, 2], rows[:, 1], d)
    eno = [np.nan] + convergence_order(rows[:, 3], rows[:, 1], d)
    table = np.column_stack([rows, l2o, eno])
    out = cfg.output_dir
    res = CaseResult(0)
    res.artifacts["convergence"] = write_csv(out / "convergence.csv",
                                             ["h", "dofs", "l2_error", "energy_error", "l2_order", "energy_order"], table)
    if cfg.output.get("figures", True):
        from . import plotting

        res.artifacts["figure_convergence"] = plotting.convergence(out / "convergence.png", rows[:, 1], rows[:, 2],
                                                                   rows[:, 3], d)
    res.summary.update(l2_orders=l2o[1:], energy_orders=eno[1:])
    return res


def run_forces(cfg: CaseConfig, tol: float = 1e-9) -> CaseResult:
    """Particle-force breakdown at the static solution and the defect report."""
    problem = build_case_problem(cfg)
    fc = cfg.forces
    rng = np.random.default_rng(int(fc.get("seed", 0)))
    if fc.get("state", "static") == "random":
        u = rng.standard_normal(problem.n_dofs)
    else:
        u = static_solve(problem, 1.0, _controls(cfg))
    sigma = stress(problem.ops.strains(u), np.zeros((problem.mesh.n_cells, 3, 3)), problem.material)
    tests = rng.standard_normal((int(fc.get("n_tests", 20)), problem.n_dofs))
    check = force_balance_check(problem.ops, u, sigma, problem.eta, tests)
    br = force_breakdown(problem.ops, u, sigma, problem.eta)
    d = problem.dim
    comps = "xyz"[:d]
    header = [f"{n}_{c}" for n in ("ep", "pen1", "pen2", "corr") for c in comps]
    table = np.hstack([br.ep, br.pen1, br.pen2, br.corr])
    out = cfg.output_dir
    res = CaseResult(0 if check["with_correction"] <= tol else 1)
    res.artifacts["particle_forces"] = write_csv(out / "particle_forces.csv", header, table)
    res.artifacts["defect"] = write_csv(out / "force_defect.csv", ["with_correction", "without_correction"],
                                        [[check["with_correction"], check["without_correction"]]])
    res.summary.update(check)
    return res
