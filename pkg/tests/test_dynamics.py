import numpy as np
import pytest
import scipy.sparse as sp

from polydem import meshgen as mg
from polydem.assembly import BoundaryCondition
from polydem.dynamics import (EnergyLedger, InstabilityError, QuadratureRule, cfl_dt, critical_dt, dynamic_step,
                              energy_report, estimate_lambda_max, initial_state, run_dynamics, stability_limit)
from polydem.mesh import mesh_from_dict
from polydem.plasticity import Material
from polydem.problem import build_problem

from conftest import clamp_all, zero_field
from test_mesh import UNIT_SQUARE

BEAM = dict(lo=(0.0, 0.0, 0.0), hi=(0.04, 0.1, 1.0))


def clamped_beam(material, nz=6, extra=()):
    m = mg.box_tet_mesh(1, 1, nz, **BEAM)
    return build_problem(m, material, [BoundaryCondition("z0", "dirichlet", zero_field(3)), *extra])


def bent(x):
    x = np.asarray(x)
    return np.column_stack([0.01 * x[:, 2] ** 2, 0 * x[:, 0], 0 * x[:, 0]])


class TestQuadratureRule:
    @pytest.mark.parametrize("name", ["midpoint", "gauss5"])
    def test_weights_and_symmetry(self, name):
        q = QuadratureRule.from_name(name)
        assert sum(q.weights) == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(np.sort(q.nodes), np.sort(1.0 - np.asarray(q.nodes)), atol=1e-15)

    @pytest.mark.parametrize("name, degree", [("midpoint", 1), ("gauss5", 5)])
    def test_exact_degree(self, name, degree):
        q = QuadratureRule.from_name(name)
        x, w = np.asarray(q.nodes), np.asarray(q.weights)
        for k in range(degree + 1):
            assert w @ x ** k == pytest.approx(1.0 / (k + 1), rel=1e-14)

    def test_scaled_interval(self):
        t, w = QuadratureRule.from_name("gauss5").on(2.0, 0.5)
        assert w.sum() == pytest.approx(0.5)
        assert np.all((t > 2.0) & (t < 2.5))

    def test_unknown(self):
        with pytest.raises(ValueError):
            QuadratureRule.from_name("simpson")


class TestLambdaMax:
    def test_diagonal(self):
        assert estimate_lambda_max(sp.diags([1.0, 2.0, 3.0])) == pytest.approx(3.0, rel=1e-3)

    def test_dense_oracle(self):
        m = mg.polygonal_mesh(4, 4, seed=2)
        pb = build_problem(m, Material(1e3, 0.3), clamp_all(m, zero_field(2)))
        free = pb.dofmap.free_dofs
        K = pb.elastic_stiffness()[free][:, free]
        assert K.shape[0] <= 200
        exact = np.linalg.eigvalsh(K.toarray())[-1]
        assert estimate_lambda_max(K) == pytest.approx(exact, rel=1e-2)

    def test_homogeneous_in_modulus(self):
        lam = [estimate_lambda_max(clamped_beam(Material(E, 0.3), nz=3).elastic_stiffness()) for E in (1e3, 2e3)]
        assert lam[1] / lam[0] == pytest.approx(2.0, rel=1e-2)


class TestCflDt:
    def test_examples(self):
        assert cfl_dt([1.0, 3.0], 4.0, 1.0) == pytest.approx(1.0)
        assert cfl_dt([1.0, 3.0], 4.0, 0.9) == pytest.approx(0.9)

    def test_invalid(self):
        with pytest.raises(ValueError):
            cfl_dt([1.0], 0.0)
        with pytest.raises(ValueError):
            cfl_dt([0.0, 1.0], 1.0)

    def test_bound_below_sharp_limit(self):
        pb = clamped_beam(Material(1e3, 0.3), nz=3)
        assert critical_dt(pb, 1.0) <= stability_limit(pb) * (1 + 1e-3)

    @pytest.mark.xfail(strict=True, reason="coarse beam meshes here are far coarser than the published ones; "
                                           "see decisions ledger")
    def test_flexion_band(self):
        mat = Material(1e3, 0.3, 25.0, rho=1.0, hardening="linear", Et=10.0)
        pb = build_problem(mg.box_tet_mesh(1, 2, 10, **BEAM), mat,
                           [BoundaryCondition("z0", "dirichlet", zero_field(3))], beta=0.5)
        ratio = critical_dt(pb) / np.sqrt(mat.rho / mat.E)
        assert 4.4e-7 <= ratio <= 8.0e-6


class TestOscillator:
    """One square cell with clamped vertices: the cell dof is a harmonic oscillator."""

    @pytest.fixture
    def problem(self):
        m = mesh_from_dict(UNIT_SQUARE)
        return build_problem(m, Material(1e3, 0.3), clamp_all(m, zero_field(2)))

    @staticmethod
    def recurrence(x0, w2, dt, n):
        a0 = -w2 * x0
        x, vp, vn = x0, -0.5 * dt * a0, 0.5 * dt * a0
        for _ in range(n):
            vp, vn, x = vn, vp + 2 * dt * (-w2 * (x + 0.5 * dt * vn)), x + dt * vn
        return x

    def run(self, problem, dt, n, rule="midpoint"):
        u0 = np.zeros(problem.n_dofs)
        u0[0] = 0.01
        return run_dynamics(problem, n * dt, dt, rule, u0=u0).state.u[0]

    def test_cell_dof_decoupled(self, problem):
        K = problem.elastic_stiffness().toarray()
        assert K[0, 1] == 0.0 and K[0, 0] == K[1, 1] > 0

    def test_matches_recurrence(self, problem):
        w2 = problem.elastic_stiffness()[0, 0] / problem.mass()[0]
        dt = 0.5 / np.sqrt(w2)
        assert self.run(problem, dt, 37) == pytest.approx(self.recurrence(0.01, w2, dt, 37), rel=1e-12, abs=1e-16)

    @pytest.mark.parametrize("rule", ["midpoint", "gauss5"])
    def test_second_order(self, problem, rule):
        w = np.sqrt(problem.elastic_stiffness()[0, 0] / problem.mass()[0])
        T = 2.0 / w
        x = [self.run(problem, T / n, n, rule) for n in (20, 40, 80)]
        order = np.log2(abs(x[0] - x[1]) / abs(x[1] - x[2]))
        assert order >= 1.9
        assert x[2] == pytest.approx(0.01 * np.cos(w * T), rel=1e-3)


class TestDynamicStep:
    def test_zero_stays_zero(self):
        pb = clamped_beam(Material(1e3, 0.3, 25.0))
        res = run_dynamics(pb, 20 * 1e-3, 1e-3)
        assert not np.any(res.state.u) and not np.any(res.state.v_next)
        assert not np.any(res.ledger.as_table()[1][:, 1:])

    def test_guard(self):
        pb = clamped_beam(Material(1e3, 0.3))
        dt = 10 * stability_limit(pb)
        with pytest.raises(InstabilityError, match="instability"):
            run_dynamics(pb, 1e4 * dt, dt, u0=bent)

    def test_time_dependent_dirichlet(self):
        m = mg.box_tet_mesh(1, 1, 2, **BEAM)
        pull = lambda x, t: np.tile([1e-3 * t, 0.0, 0.0], (len(x), 1))
        pb = build_problem(m, Material(1e3, 0.3), [BoundaryCondition("z0", "dirichlet", pull)])
        dt = critical_dt(pb)
        fixed = pb.dofmap.dirichlet_dofs
        st = initial_state(pb, dt)
        rule = QuadratureRule.from_name("midpoint")
        for _ in range(5):
            st, _ = dynamic_step(pb, st, dt, rule)
            np.testing.assert_allclose(st.u[fixed], pb.dofmap.dirichlet_values(st.t), rtol=1e-12)
            np.testing.assert_allclose(st.v_next[fixed], pb.dofmap.dirichlet_values(1.0) - pb.dofmap.dirichlet_values(0.0),
                                       rtol=1e-10)

    def test_invalid_arguments(self):
        pb = clamped_beam(Material(1e3, 0.3), nz=2)
        with pytest.raises(ValueError):
            run_dynamics(pb, 0.0)
        with pytest.raises(ValueError):
            run_dynamics(pb, 1.0, -1e-3)

    def test_snapshots_and_decimation(self):
        pb = clamped_beam(Material(1e3, 0.3), nz=2)
        dt = critical_dt(pb)
        res = run_dynamics(pb, 10 * dt, dt, u0=bent, output_every=4, snapshot_every=5)
        assert res.n_steps == 10
        assert [round(t / dt) for t, _ in res.snapshots] == [5, 10]
        assert len(res.ledger.rows) == 3


class TestEnergies:
    def test_virgin_state(self):
        pb = clamped_beam(Material(1e3, 0.3, 25.0))
        led = EnergyLedger()
        row = energy_report(pb, initial_state(pb, 1e-3), led, 0.0)
        assert (row.elastic, row.kinetic, row.plastic, row.imbalance) == (0.0, 0.0, 0.0, 0.0)

    @pytest.mark.parametrize("rule", ["midpoint", "gauss5"])
    def test_elastic_free_vibration_balance(self, rule):
        pb = clamped_beam(Material(1e3, 0.3))
        dt = critical_dt(pb)
        for h in (dt, dt / 2):
            res = run_dynamics(pb, 400 * dt, h, rule, u0=bent, output_every=50)
            assert res.ledger.relative_imbalance() < 1e-9
            assert np.all(res.ledger.column("plastic") == 0.0)
            amp = np.abs(res.ledger.column("kinetic")).max()
            assert amp <= 1.01 * res.ledger.initial

    def test_elastic_loading_has_no_plastic_energy(self):
        load = BoundaryCondition("z1", "neumann", lambda x, t: np.tile([-0.1 * t, 0.0, 0.0], (len(x), 1)))
        pb = clamped_beam(Material(1e3, 0.3), extra=(load,))
        res = run_dynamics(pb, 0.05, output_every=10)
        assert res.ledger.column("external")[-1] > 0
        assert np.all(res.ledger.column("plastic") == 0.0)

    def test_flexion_dissipation(self):
        """Published flexion setup on a coarse mesh: plastic dissipation is a
        sizeable share of the external work (soft check at 20 %)."""
        mat = Material(1e3, 0.3, 25.0, rho=1.0, hardening="linear", Et=10.0)
        g = lambda x, t: np.tile([-1.25 * t if t <= 0.8 else 0.0, 0.0, 0.0], (len(x), 1))
        m = mg.box_tet_mesh(1, 2, 10, **BEAM)
        pb = build_problem(m, mat, [BoundaryCondition("z0", "dirichlet", zero_field(3)),
                                    BoundaryCondition("z1", "neumann", g)], beta=0.5)
        res = run_dynamics(pb, 2.5, output_every=100)
        led = res.ledger
        assert np.all(np.diff(led.column("plastic")) >= 0)
        assert led.column("plastic")[-1] > 0.2 * led.column("external")[-1]
        assert led.relative_imbalance() < 1e-3
