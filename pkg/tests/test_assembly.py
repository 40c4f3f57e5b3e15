import numpy as np
import pytest
import scipy.sparse as sp

from polydem import meshgen as mg
from polydem.assembly import (BoundaryCondition, DofMap, apply_dirichlet, assemble_load, assemble_penalty_jumps,
                              assemble_stiffness, build_operators, lump_mass, vertex_mass_fragments)
from polydem.mesh import mesh_from_dict
from polydem.plasticity import Material, elastic_moduli
from polydem.problem import build_problem
from polydem.quasistatic import static_solve
from polydem.reconstruct import build_reconstruction, cell_p1_eval

from conftest import affine_field, clamp_all, zero_field
from test_mesh import UNIT_SQUARE

TWO_TRIANGLES = {
    "dimension": 2,
    "vertices": [[0, 0], [1, 0], [1, 1], [0, 1]],
    "facets": [[0, 2], [0, 1], [1, 2], [2, 3], [3, 0]],
    "cells": [[0, 1, 2], [0, 3, 4]],
    "boundary": {"outer": [1, 2, 3, 4]},
}


def rigid_modes(positions, d):
    X = positions
    n = len(X)
    modes = []
    for i in range(d):
        e = np.zeros((n, d))
        e[:, i] = 1.0
        modes.append(e.ravel())
    pairs = [(0, 1)] if d == 2 else [(0, 1), (1, 2), (0, 2)]
    for i, j in pairs:
        w = np.zeros((n, d))
        w[:, i], w[:, j] = -X[:, j], X[:, i]
        modes.append(w.ravel())
    return np.array(modes)


class TestStiffness:
    @pytest.fixture(params=["polygonal", "tet"])
    def problem(self, request):
        mesh = mg.polygonal_mesh(4, 4, seed=2) if request.param == "polygonal" else \
            mg.box_tet_mesh(2, 2, 1, perturb=0.2, seed=1)
        return build_problem(mesh, Material(70e3, 0.3), [])

    def test_symmetric(self, problem):
        K = problem.elastic_stiffness()
        assert abs(K - K.T).max() <= 1e-10 * abs(K).max()

    def test_rigid_modes_in_kernel(self, problem):
        K = problem.elastic_stiffness()
        for w in rigid_modes(problem.recon.positions, problem.dim):
            assert np.linalg.norm(K @ w) <= 1e-8 * abs(K).max() * np.linalg.norm(w)

    def test_kernel_dimension(self, problem):
        assert problem.n_dofs <= 200
        ev = np.linalg.eigvalsh(problem.elastic_stiffness().toarray())
        d = problem.dim
        assert np.sum(ev < 1e-9 * ev.max()) == d * (d + 1) // 2
        assert ev.min() > -1e-9 * ev.max()

    def test_linear_in_moduli(self, problem):
        ops, eta = problem.ops, problem.eta
        S = ops.penalty(eta)
        K1 = assemble_stiffness(ops, Material(70e3, 0.3).elastic, eta)
        K2 = assemble_stiffness(ops, Material(140e3, 0.3).elastic, eta)
        assert abs((K2 - S) - 2 * (K1 - S)).max() <= 1e-10 * abs(K2).max()

    def test_per_cell_moduli_match_uniform(self, problem):
        mat = problem.material
        K1 = assemble_stiffness(problem.ops, mat.elastic, problem.eta)
        K2 = assemble_stiffness(problem.ops, elastic_moduli(mat, problem.mesh.n_cells), problem.eta)
        assert abs(K1 - K2).max() <= 1e-12 * abs(K1).max()

    def test_rejects_non_positive_penalty(self, problem):
        with pytest.raises(ValueError):
            assemble_stiffness(problem.ops, problem.material.elastic, 0.0)

    def test_constrained_spd(self):
        m = mg.rectangle_mesh(2, 2)
        pb = build_problem(m, Material(70e3, 0.3), [BoundaryCondition("x0", "dirichlet", zero_field(2))])
        K = pb.elastic_stiffness().toarray()
        free = pb.dofmap.free_dofs
        assert np.linalg.eigvalsh(K[np.ix_(free, free)]).min() > 0


class TestJumps:
    def test_affine_zero(self, rng):
        m = mg.polygonal_mesh(5, 5, seed=8)
        r = build_reconstruction(m)
        J = assemble_penalty_jumps(m, r)
        U = affine_field(rng.standard_normal((2, 2)), rng.standard_normal(2))(r.positions)
        assert np.abs(J @ U).max() < 1e-10

    def test_equal_constants(self):
        m = mesh_from_dict(TWO_TRIANGLES)
        r = build_reconstruction(m)
        U = np.tile([0.3, -0.7], (r.n_points, 1))
        assert np.abs(assemble_penalty_jumps(m, r) @ U).max() < 1e-14

    def test_two_triangles_direct_evaluation(self):
        m = mesh_from_dict(TWO_TRIANGLES)
        r = build_reconstruction(m)
        U = np.zeros((r.n_points, 2))
        U[0], U[1] = [1.0, 2.0], [-0.5, 0.25]
        J = assemble_penalty_jumps(m, r) @ U
        f = int(m.interior_facets[0])
        cm, cp = m.facet_cells[f]
        xF = m.facet_centroid[f]
        expected = cell_p1_eval(r, U, cm, xF) - cell_p1_eval(r, U, cp, xF)
        np.testing.assert_allclose(J[f], expected, atol=1e-14)
        # both cells see the interior facet only through the interpolated value
        for g in m.boundary_facets:
            c = m.facet_cells[g, 0]
            np.testing.assert_allclose(J[g], -cell_p1_eval(r, U, c, m.facet_centroid[g]), atol=1e-14)

    def test_penalty_energy_non_negative(self, rng):
        m = mg.box_tet_mesh(2, 2, 1, perturb=0.2)
        ops = build_operators(m, build_reconstruction(m))
        for _ in range(5):
            u = rng.standard_normal(ops.n_dofs)
            assert u @ (ops.S0 @ u) >= 0
        U = affine_field(rng.standard_normal((3, 3)), rng.standard_normal(3))(ops.recon.positions)
        assert abs(U.ravel() @ (ops.S0 @ U.ravel())) < 1e-12 * np.sum(U ** 2) * abs(ops.S0).max()


class TestLumpedMass:
    def test_interior_cell(self):
        m = mg.rectangle_mesh(3, 3)
        M = lump_mass(m, 1.0).reshape(-1, 2)
        centre = int(np.argmin(np.linalg.norm(m.cell_centroid - 0.5, axis=1)))
        assert M[centre, 0] == pytest.approx(1.0 / 9.0, rel=1e-14)

    def test_single_square(self):
        m = mesh_from_dict(UNIT_SQUARE)
        cell, verts = vertex_mass_fragments(m)
        np.testing.assert_allclose(verts, verts[0])
        assert cell[0] == pytest.approx(1.0 - 4 * verts[0])
        assert verts[0] == pytest.approx(0.125)

    @pytest.mark.parametrize("mesh", [
        mg.polygonal_mesh(6, 6, seed=1),
        mg.box_tet_mesh(2, 3, 2, perturb=0.2),
        mg.box_poly_mesh(2, 2, 2),
        mg.quarter_annulus_mesh(1.0, 2.0, 3, 9),
    ], ids=["polygonal", "tet", "poly3d", "annulus"])
    def test_positive_and_total(self, mesh):
        rho = 7.8
        M = lump_mass(mesh, rho)
        d = mesh.dim
        assert np.all(M > 0)
        assert M.sum() / d == pytest.approx(rho * mesh.volume, rel=1e-10)
        np.testing.assert_array_equal(M.reshape(-1, d), np.repeat(M.reshape(-1, d)[:, :1], d, axis=1))

    def test_rejects_bad_density(self):
        with pytest.raises(ValueError):
            lump_mass(mg.rectangle_mesh(2, 2), 0.0)


class TestLoad:
    def test_zero(self):
        m = mg.rectangle_mesh(3, 3)
        dm = DofMap(m, build_reconstruction(m), [BoundaryCondition("x1", "neumann", zero_field(2))])
        assert not np.any(assemble_load(dm, zero_field(2), 0.0))

    def test_edge_traction(self):
        m = mg.rectangle_mesh(1, 1, hi=(2.0, 1.0))
        r = build_reconstruction(m)
        g = np.array([3.0, -1.0])
        dm = DofMap(m, r, [BoundaryCondition("x1", "neumann", lambda x, t: np.tile(g, (len(x), 1)))])
        L = assemble_load(dm, None, 0.0).reshape(-1, 2)
        vs = m.vertices_with_tag("x1")
        for z in vs:
            np.testing.assert_allclose(L[r.vertex_point[z]], g * 1.0 / 2)
        assert np.abs(L).sum() == pytest.approx(np.abs(g).sum() * 1.0)

    def test_body_force_total(self):
        m = mg.polygonal_mesh(5, 4, hi=(2.0, 1.0), seed=2)
        dm = DofMap(m, build_reconstruction(m), [])
        b = np.array([0.5, -2.0])
        L = assemble_load(dm, lambda x, t: np.tile(b, (len(x), 1)), 0.0).reshape(-1, 2)
        np.testing.assert_allclose(L[: m.n_cells].sum(axis=0), b * 2.0, rtol=1e-12)
        assert not np.any(L[m.n_cells:])

    def test_pressure_is_normal_traction(self):
        m = mg.rectangle_mesh(2, 2)
        r = build_reconstruction(m)
        dm = DofMap(m, r, [BoundaryCondition("y1", "pressure", lambda x, t: np.full(len(x), 4.0))])
        L = assemble_load(dm, None, 0.0).reshape(-1, 2)
        np.testing.assert_allclose(L.sum(axis=0), [0.0, -4.0])

    def test_unknown_tag(self):
        m = mg.rectangle_mesh(2, 2)
        with pytest.raises(ValueError, match="not present"):
            DofMap(m, build_reconstruction(m), [BoundaryCondition("top", "neumann", zero_field(2))])


class TestDirichlet:
    @pytest.fixture
    def problem(self):
        m = mg.polygonal_mesh(4, 4, seed=5)
        return build_problem(m, Material(70e3, 0.3), [BoundaryCondition("x0", "dirichlet", zero_field(2)),
                                                      BoundaryCondition("x1", "dirichlet",
                                                                        lambda x, t: np.tile([t, 0.0], (len(x), 1)))])

    def test_zero_data_keeps_rhs(self):
        m = mg.polygonal_mesh(4, 4, seed=5)
        pb = build_problem(m, Material(70e3, 0.3), [BoundaryCondition("x0", "dirichlet", zero_field(2))])
        rhs = np.arange(pb.n_dofs, dtype=float)
        sysd = apply_dirichlet(pb.elastic_stiffness(), rhs, pb.dofmap, 0.0)
        np.testing.assert_array_equal(sysd.rhs, rhs[pb.dofmap.free_dofs])
        assert sysd.K.shape == (len(pb.dofmap.free_dofs),) * 2
        assert abs(sysd.K - sysd.K.T).max() <= 1e-10 * abs(sysd.K).max()

    def test_linear_in_time(self, problem):
        v1 = problem.dofmap.dirichlet_values(1.0)
        np.testing.assert_allclose(problem.dofmap.dirichlet_values(0.5), 0.5 * v1)
        u1, u2 = static_solve(problem, 1.0), static_solve(problem, 0.5)
        np.testing.assert_allclose(u2, 0.5 * u1, atol=1e-12 * np.abs(u1).max())

    def test_dirichlet_value_lookup(self, problem):
        dm = problem.dofmap
        z = int(problem.mesh.vertices_with_tag("x1")[0])
        assert dm.dirichlet_value(z, 0, 0.25) == pytest.approx(0.25)
        interior_free = [v for v in problem.mesh.boundary_vertices
                         if v not in set(problem.mesh.vertices_with_tag("x0")) | set(problem.mesh.vertices_with_tag("x1"))]
        with pytest.raises(KeyError):
            dm.dirichlet_value(int(interior_free[0]), 0, 0.0)

    def test_expand(self, problem):
        sysd = apply_dirichlet(problem.elastic_stiffness(), np.zeros(problem.n_dofs), problem.dofmap, 1.0)
        u = sysd.expand(np.zeros(len(sysd.free)))
        np.testing.assert_array_equal(u[problem.dofmap.dirichlet_dofs], problem.dofmap.dirichlet_values(1.0))


class TestPatch:
    @pytest.mark.parametrize("mesh", [
        mg.polygonal_mesh(6, 6, perturb=0.3, seed=11),
        mg.box_tet_mesh(3, 3, 3, perturb=0.25, seed=5),
        mg.box_poly_mesh(2, 2, 2),
    ], ids=["polygonal", "tet", "poly3d"])
    def test_affine_reproduced(self, mesh, rng):
        d = mesh.dim
        exact = affine_field(rng.standard_normal((d, d)) * 1e-3, rng.standard_normal(d) * 1e-3)
        pb = build_problem(mesh, Material(70e3, 0.3), clamp_all(mesh, exact))
        u = static_solve(pb)
        ref = exact(pb.recon.positions).ravel()
        assert np.abs(u - ref).max() <= 1e-8 * np.abs(ref).max()

    def test_operators_sparse(self):
        m = mg.rectangle_mesh(3, 3)
        ops = build_operators(m, build_reconstruction(m))
        assert sp.issparse(ops.S0) and sp.issparse(ops.Gfull)
