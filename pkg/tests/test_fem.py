"""Assembly of the mixed finite element matrices.

The single-cell cases have small enough matrices to freeze entry by entry;
the rest of the file checks structural identities that hold on any mesh.
"""

import dataclasses

import numpy as np
import pytest
from numpy.linalg import lstsq, matrix_rank, norm

from pipewave.fem import Mesh, assemble, check_A0, project_initial
from pipewave.network import builtin_scenario


def assemble_uniform(name, cells, d0=1.0):
    net = builtin_scenario(name, d0=d0)
    return assemble(net, Mesh.uniform(net, cells))


class TestMesh:
    def test_uniform_widths(self):
        net = builtin_scenario("net7")
        mesh = Mesh.uniform(net, 8)
        assert mesh.cells == (8,) * 7
        for e, h in zip(net.edges, mesh.widths):
            assert h * 8 == pytest.approx(e.length)

    def test_positive_cell_count_required(self):
        net = builtin_scenario("tp1")
        with pytest.raises(ValueError):
            Mesh.uniform(net, 0)
        with pytest.raises(ValueError):
            Mesh((0,), (1.0,))


class TestSingleCellMatrices:
    """One cell on each pipe, so every local matrix appears verbatim."""

    def test_tp1_frozen_blocks(self):
        sys = assemble_uniform("tp1", 1)
        assert (sys.k1, sys.k2, sys.k3) == (1, 2, 0)
        np.testing.assert_allclose(sys.M1, [[1.0]])
        np.testing.assert_allclose(sys.M2, np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0)
        np.testing.assert_allclose(sys.D, sys.M2)  # d = b = 1 on tp1
        np.testing.assert_allclose(sys.G, [[-1.0, 1.0]])
        assert sys.N.shape == (0, 2)
        np.testing.assert_allclose(sys.B2, [[1.0, 0.0], [0.0, -1.0]])
        np.testing.assert_allclose(sys.o1, [1.0])
        np.testing.assert_allclose(sys.nullG, [[1.0], [1.0]])

    def test_tp2_junction_row(self):
        sys = assemble_uniform("tp2", 1)
        assert (sys.k1, sys.k2, sys.k3) == (2, 4, 1)
        # flux dofs: (pipe0 left, pipe0 right, pipe1 left, pipe1 right);
        # the junction balances outflow of pipe0 against inflow of pipe1
        np.testing.assert_allclose(sys.N, [[0.0, 1.0, -1.0, 0.0]])
        np.testing.assert_allclose(sys.G, [[-1.0, 1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 1.0]])
        np.testing.assert_allclose(sys.B2[:, 0], [1.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(sys.B2[:, 1], [0.0, 0.0, 0.0, -1.0])

    def test_flux_space_is_broken_at_the_junction(self):
        # two pipes, one cell each: four flux dofs, not three
        sys = assemble_uniform("tp2", 1)
        assert sys.k2 == 4


class TestStructuralIdentities:
    @pytest.mark.parametrize("name,cells", [("tp1", 7), ("tp2", 5), ("net7", 3)])
    def test_nullG_spans_kernel_of_G(self, name, cells):
        sys = assemble_uniform(name, cells)
        assert norm(sys.G @ sys.nullG, np.inf) < 1e-14
        assert sys.nullG.shape[1] == len(sys.network.edges)
        assert matrix_rank(sys.nullG) == sys.nullG.shape[1]

    @pytest.mark.parametrize("name,cells", [("tp1", 6), ("net7", 4)])
    def test_G_rows_sum_to_zero(self, name, cells):
        sys = assemble_uniform(name, cells)
        np.testing.assert_allclose(sys.G.sum(axis=1), 0.0, atol=1e-14)

    def test_M1_diagonal_cell_measures(self):
        sys = assemble_uniform("net7", 5)
        expected = []
        for e, n_cells, h in zip(sys.network.edges, sys.mesh.cells, sys.mesh.widths):
            expected.extend([e.a * h] * n_cells)
        np.testing.assert_allclose(np.diag(sys.M1), expected)
        assert np.count_nonzero(sys.M1 - np.diag(np.diag(sys.M1))) == 0

    def test_M2_row_sums(self):
        # row sums of a P1 mass matrix integrate the hat functions:
        # b*h at interior nodes of a pipe, b*h/2 at its two end nodes
        sys = assemble_uniform("tp1", 4)
        h = sys.mesh.widths[0]
        sums = sys.M2.sum(axis=1)
        expected = np.full(5, h)
        expected[0] = expected[-1] = h / 2
        np.testing.assert_allclose(sums, expected)

    def test_total_mass_functional(self):
        for name in ("tp1", "tp2", "net7"):
            sys = assemble_uniform(name, 6)
            total = sum(e.a * e.length for e in sys.network.edges)
            assert sys.o1 @ sys.M1 @ sys.o1 == pytest.approx(total)

    def test_damping_scales_with_d(self):
        base = assemble_uniform("tp1", 3)
        scaled = assemble_uniform("tp1", 3, d0=4.0)
        np.testing.assert_allclose(scaled.D, 4.0 * base.D)
        np.testing.assert_allclose(scaled.M2, base.M2)

    def test_port_output_signs(self):
        # column v of B2 carries -n^e(v): +1 where the pipe leaves, -1 where it ends
        sys = assemble_uniform("tp2", 3)
        col0 = sys.B2[:, 0]
        col1 = sys.B2[:, 1]
        assert col0[0] == 1.0 and np.count_nonzero(col0) == 1
        assert col1[-1] == -1.0 and np.count_nonzero(col1) == 1


class TestConditionChecks:
    @pytest.mark.parametrize("name", ["tp1", "net7"])
    def test_well_posed_on_builtin_networks(self, name):
        report = check_A0(assemble_uniform(name, 20))
        assert report["pass"]
        assert report["M1"]["min_eigenvalue"] > 0
        assert report["M2"]["min_eigenvalue"] > 0
        assert report["stacked_map"]["sigma_min"] > 0

    def test_detects_rank_deficient_constraint(self):
        sys = assemble_uniform("tp1", 6)
        G = sys.G.copy()
        G[1, :] = G[0, :]  # duplicated pressure row kills surjectivity
        broken = dataclasses.replace(sys, G=G)
        report = check_A0(broken)
        assert not report["stacked_map"]["pass"]
        assert not report["pass"]

    def test_surjectivity_residual(self):
        # (A2'): every pressure functional is reachable through G
        sys = assemble_uniform("tp2", 4)
        stacked = np.vstack([sys.G, sys.N])
        for i in range(sys.k1):
            rhs = np.zeros(sys.k1 + sys.k3)
            rhs[i] = sys.M1[i, i]
            sol, *_ = lstsq(stacked, rhs, rcond=None)
            assert norm(stacked @ sol - rhs) < 1e-10


class TestInitialProjection:
    def test_constant_pressure_hits_o1(self, tp1_fem):
        x1, x2 = project_initial(tp1_fem, 1.0, 0.0)
        np.testing.assert_allclose(x1, tp1_fem.o1)
        np.testing.assert_allclose(x2, 0.0)

    def test_zero_data(self, tp2_fem):
        x1, x2 = project_initial(tp2_fem, 0.0, 0.0)
        assert norm(x1) == 0.0
        assert norm(x2) == 0.0

    def test_linear_pressure_cell_averages(self):
        sys = assemble_uniform("tp1", 2)
        x1, _ = project_initial(sys, lambda s: s, 0.0)
        np.testing.assert_allclose(x1, [0.25, 0.75])

    def test_linear_flux_is_reproduced(self):
        # q0(s) = s lies in the P1 space, so its projection is nodal
        sys = assemble_uniform("tp1", 4)
        _, x2 = project_initial(sys, 0.0, lambda s: s)
        np.testing.assert_allclose(x2, np.linspace(0.0, 1.0, 5), atol=1e-12)

    def test_array_data_accepted(self, tp1_fem):
        p0 = np.full(tp1_fem.k1, 2.0)
        q0 = np.zeros(tp1_fem.k2)
        x1, x2 = project_initial(tp1_fem, p0, q0)
        np.testing.assert_allclose(x1, 2.0 * tp1_fem.o1)
        np.testing.assert_allclose(x2, 0.0)

    def test_wrong_length_array_rejected(self, tp1_fem):
        with pytest.raises(ValueError):
            project_initial(tp1_fem, np.zeros(tp1_fem.k1 + 1), 0.0)
