import math

import numpy as np
import pytest

from memodiff.errors import UnsupportedKernelError
from memodiff.internal_variables import (
    advance_internal,
    refined_energy_report,
    solve_diffusive,
    structural_identity_residual,
)
from memodiff.kernel import (
    Atom,
    BernsteinQuadrature,
    bernstein_quadrature,
    delay,
    exponential,
    fractional,
    mixed,
    mollify_delay,
    zero_kernel,
)
from memodiff.mesh_fem import seminorm_v
from memodiff.stepper import ProblemSpec, solve


def l2v_gap(a, b, fem):
    dt = a.grid.dt
    return math.sqrt(sum(dt * seminorm_v(a.value(n) - b.value(n), fem) ** 2 for n in range(1, a.grid.n_steps + 1)))


class TestAdvanceInternal:
    def test_zero_stays_zero(self):
        np.testing.assert_allclose(advance_internal(np.zeros(4), np.zeros(4), 2.0, 0.1), 0.0)

    def test_rate_zero_accumulates(self):
        z = np.array([1.0, -1.0])
        u = np.array([3.0, 3.0])
        np.testing.assert_allclose(advance_internal(z, u, 0.0, 0.25), z + 0.25 * u)

    def test_constant_input_fixed_point(self):
        z = np.zeros(3)
        u = np.full(3, 2.0)
        for _ in range(4000):
            z = advance_internal(z, u, 4.0, 0.01)
        np.testing.assert_allclose(z, 0.5, rtol=1e-10)  # steady state u/lam

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            advance_internal(np.zeros(2), np.zeros(2), -1.0, 0.1)
        with pytest.raises(ValueError):
            advance_internal(np.zeros(2), np.zeros(2), 1.0, 0.0)


class TestSolveDiffusive:
    def test_exponential_single_node_matches_direct_path(self, fem32, eigenmode32):
        for dt in (4e-3, 2e-3):
            p = ProblemSpec(fem=fem32, kernel=exponential(1.0, 1.0, 1.0), u0=eigenmode32, horizon=1.0, dt=dt)
            direct, _ = solve(p)
            quad = bernstein_quadrature(p.kernel, 8, dt)
            diff, _, _ = solve_diffusive(p, quad)
            # single-mode weights coincide with the exact cell integrals
            assert l2v_gap(direct, diff, fem32) <= 1e-12

    def test_fractional_gap_tracks_quadrature(self, fem32, eigenmode32):
        dt = 1e-3
        p = ProblemSpec(fem=fem32, kernel=fractional(0.5, 1.0), u0=eigenmode32, horizon=1.0, dt=dt)
        direct, _ = solve(p)
        gaps = []
        for n_nodes in (32, 64, 128):
            quad = bernstein_quadrature(p.kernel, n_nodes, dt)
            diff, _, _ = solve_diffusive(p, quad)
            gaps.append(l2v_gap(direct, diff, fem32))
        assert gaps[1] <= 1e-4
        assert gaps[0] > gaps[1] > gaps[2]

    def test_no_memory_form_reduces_to_heat(self, fem32_nomem):
        u0 = np.sin(np.pi * fem32_nomem.mesh.interior_nodes)
        kernel = exponential(1.0, 1.0, 1.0)
        p = ProblemSpec(fem=fem32_nomem, kernel=kernel, u0=u0, horizon=1.0, dt=4e-3)
        quad = bernstein_quadrature(kernel, 8, 4e-3)
        diff, _, split = solve_diffusive(p, quad)
        p0 = ProblemSpec(fem=fem32_nomem, kernel=zero_kernel(), u0=u0, horizon=1.0, dt=4e-3)
        heat, _ = solve(p0)
        assert l2v_gap(diff, heat, fem32_nomem) == 0.0
        np.testing.assert_allclose(split.e_mem, 0.0)
        np.testing.assert_allclose(split.d_mem, 0.0)

    def test_energies_nonnegative_and_start_at_zero(self, fem32, eigenmode32):
        p = ProblemSpec(fem=fem32, kernel=fractional(0.5, 1.0), u0=eigenmode32, horizon=1.0, dt=2e-3)
        _, state, split = solve_diffusive(p, bernstein_quadrature(p.kernel, 32, 2e-3))
        assert split.e_mem[0] == 0.0 and split.d_mem[0] == 0.0
        assert np.all(split.e_mem >= 0.0) and np.all(split.d_mem >= 0.0)
        assert state.time_index == p.grid().n_steps

    def test_atoms_rejected(self, fem32, eigenmode32):
        kernel = mixed(None, (Atom(0.25, 1.0),), 0.25)
        p = ProblemSpec(fem=fem32, kernel=kernel, u0=eigenmode32, horizon=1.0, dt=2e-3)
        with pytest.raises(UnsupportedKernelError):
            solve_diffusive(p, BernsteinQuadrature(np.array([1.0]), np.array([1.0]), 0.0, 1e-3, 1.0))

    def test_mollified_density_rejected(self, fem32, eigenmode32):
        p = ProblemSpec(fem=fem32, kernel=mollify_delay(1.0, 0.5, 0.1), u0=eigenmode32, horizon=1.0, dt=2e-3)
        with pytest.raises(UnsupportedKernelError):
            solve_diffusive(p, BernsteinQuadrature(np.array([1.0]), np.array([1.0]), 0.0, 1e-3, 1.0))


class TestStructuralIdentity:
    def test_no_memory_form_zero_residual(self, fem32_nomem):
        u0 = np.sin(np.pi * fem32_nomem.mesh.interior_nodes)
        kernel = exponential(1.0, 1.0, 1.0)
        p = ProblemSpec(fem=fem32_nomem, kernel=kernel, u0=u0, horizon=1.0, dt=4e-3)
        traj, state, split = solve_diffusive(p, bernstein_quadrature(kernel, 8, 4e-3))
        res = structural_identity_residual(traj, state, split, fem32_nomem)
        np.testing.assert_allclose(res, 0.0)

    def test_exponential_residual_halves(self, fem32, eigenmode32):
        maxima = []
        for dt in (4e-3, 2e-3):
            p = ProblemSpec(fem=fem32, kernel=exponential(1.0, 1.0, 1.0), u0=eigenmode32, horizon=1.0, dt=dt)
            traj, state, split = solve_diffusive(p, bernstein_quadrature(p.kernel, 8, dt))
            res = structural_identity_residual(traj, state, split, fem32)
            maxima.append(float(np.max(np.abs(res))))
        assert maxima[1] / maxima[0] < 0.6

    def test_rate_zero_quadrature_has_no_dissipation(self, fem32, eigenmode32):
        kernel = exponential(1.0, 1.0, 0.5)
        p = ProblemSpec(fem=fem32, kernel=kernel, u0=eigenmode32, horizon=0.5, dt=5e-3)
        quad = BernsteinQuadrature(nodes=np.array([0.0]), weights=np.array([1.0]), error_bound=np.inf, t_lo=5e-3, t_hi=0.5)
        traj, state, split = solve_diffusive(p, quad)
        np.testing.assert_allclose(split.d_mem, 0.0)
        assert np.all(split.e_mem >= 0.0)
        # with no dissipation channel the identity carries only the energy rate
        res = structural_identity_residual(traj, state, split, fem32)
        assert float(np.max(np.abs(res))) < 0.2  # O(dt) defect at dt = 5e-3 scale


class TestRefinedEnergy:
    def test_unforced_balance_nonincreasing(self, fem32, eigenmode32):
        p = ProblemSpec(fem=fem32, kernel=exponential(1.0, 1.0, 1.0), u0=eigenmode32, horizon=1.0, dt=2e-3)
        traj, state, split = solve_diffusive(p, bernstein_quadrature(p.kernel, 8, 2e-3))
        rep = refined_energy_report(traj, state, split, p)
        assert rep.passed
        assert rep.worst_slack <= 1e-10

    def test_zero_data_is_identically_zero(self, fem32):
        p = ProblemSpec(fem=fem32, kernel=exponential(1.0, 1.0, 0.5), u0=np.zeros(fem32.n_dofs), horizon=0.5, dt=5e-3)
        traj, state, split = solve_diffusive(p, bernstein_quadrature(p.kernel, 8, 5e-3))
        rep = refined_energy_report(traj, state, split, p)
        np.testing.assert_allclose(rep.slack, 0.0, atol=1e-14)
        np.testing.assert_allclose(split.e_mem, 0.0)

    def test_consistent_with_plain_energy_inequality(self, fem32, eigenmode32):
        from memodiff.diagnostics import energy_inequality_report

        p = ProblemSpec(fem=fem32, kernel=exponential(1.0, 1.0, 1.0), u0=eigenmode32, horizon=1.0, dt=2e-3)
        traj, state, split = solve_diffusive(p, bernstein_quadrature(p.kernel, 8, 2e-3))
        refined = refined_energy_report(traj, state, split, p)
        plain = energy_inequality_report(traj, p.kernel, fem32, p, energy_split=split)
        assert refined.passed and plain.passed
