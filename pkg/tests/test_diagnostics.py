import math

import numpy as np
import pytest

from memodiff.convolution import make_grid
from memodiff.diagnostics import (
    apriori_bound_check,
    contraction_factor,
    cumulative_dissipation,
    energy_inequality_report,
    energy_report_csv,
    positive_type_test,
)
from memodiff.kernel import Atom, ExponentialDensity, delay, exponential, fractional, mixed, scale_kernel, zero_kernel
from memodiff.mesh_fem import norm_h, seminorm_v, dual_norm, form_constants
from memodiff.stepper import ProblemSpec, Trajectory, solve, _forcing_load


class TestCumulativeDissipation:
    def test_zero_kernel_gives_zero(self, fem32, eigenmode32):
        p = ProblemSpec(fem=fem32, kernel=zero_kernel(), u0=eigenmode32, horizon=0.5, dt=5e-3)
        traj, _ = solve(p)
        np.testing.assert_allclose(cumulative_dissipation(traj, p.kernel, fem32), 0.0)

    def test_power_kernel_dissipation_nonnegative(self, fem32, eigenmode32):
        p = ProblemSpec(fem=fem32, kernel=fractional(0.5, 1.0), u0=eigenmode32, horizon=1.0, dt=2e-3)
        traj, _ = solve(p)
        d = cumulative_dissipation(traj, p.kernel, fem32)
        assert float(np.min(d)) >= -1e-12

    def test_alternating_signal_under_delay_goes_negative(self, fem32, eigenmode32):
        kernel = delay(0.25, 1.0)
        grid = make_grid(0.05, 1.0, kernel.tau_max)
        states = np.zeros((grid.n_nodes, fem32.n_dofs))
        lag = 5
        for n in range(1, grid.n_steps + 1):
            states[n + grid.n_history] = (-1.0) ** ((n - 1) // lag) * eigenmode32
        traj = Trajectory(grid=grid, states=states)
        d = cumulative_dissipation(traj, kernel, fem32)
        assert float(np.min(d)) < 0.0


class TestEnergyInequality:
    def test_heat_slack_nonpositive(self, fem32, eigenmode32):
        p = ProblemSpec(fem=fem32, kernel=zero_kernel(), u0=eigenmode32, horizon=0.5, dt=5e-3)
        traj, _ = solve(p)
        rep = energy_inequality_report(traj, p.kernel, fem32, p)
        assert rep.passed and rep.violations == 0
        assert rep.worst_slack <= 1e-12

    def test_exponential_kernel_holds_and_slack_shrinks(self, fem32, eigenmode32):
        worst = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            p = ProblemSpec(fem=fem32, kernel=exponential(1.0, 1.0, 1.0), u0=eigenmode32, horizon=1.0, dt=dt)
            traj, _ = solve(p)
            rep = energy_inequality_report(traj, p.kernel, fem32, p)
            assert rep.passed
            worst.append(abs(float(np.min(rep.slack))))
        assert worst[1] / worst[0] < 0.65
        assert worst[2] / worst[1] < 0.65

    def test_atom_kernel_in_audit_mode_never_fails(self, fem32, eigenmode32):
        p = ProblemSpec(fem=fem32, kernel=delay(0.25, 2.0), u0=eigenmode32, horizon=1.0, dt=2.5e-3)
        traj, _ = solve(p)
        rep = energy_inequality_report(traj, p.kernel, fem32, p, audit=True)
        assert rep.passed and rep.audit

    def test_csv_layout(self, fem32, eigenmode32):
        p = ProblemSpec(fem=fem32, kernel=zero_kernel(), u0=eigenmode32, horizon=0.1, dt=1e-2)
        traj, _ = solve(p)
        rep = energy_inequality_report(traj, p.kernel, fem32, p)
        lines = energy_report_csv(rep).strip().split("\n")
        assert lines[0] == "t,half_uH2,cum_a0,D_mu,cum_fu,E_mem,D_mem_cum,slack"
        assert len(lines) == traj.grid.n_steps + 2


class TestPositiveType:
    def test_power_and_exponential_kernels_nonnegative(self, fem32):
        grid = make_grid(0.02, 1.0, 0.5)
        for kernel in (fractional(0.5, 0.5), exponential(1.0, 1.0, 0.5)):
            rep = positive_type_test(kernel, fem32, grid, ensemble_size=100, rng=np.random.default_rng(0))
            assert rep.passed
            assert rep.min_ratio >= -1e-10

    def test_atom_admits_negative_witness(self, fem32):
        grid = make_grid(0.02, 1.0, 0.26)
        rep = positive_type_test(delay(0.26, 1.0), fem32, grid, ensemble_size=50, rng=np.random.default_rng(0))
        assert rep.min_ratio <= -1e-3
        assert "alternating" in rep.argmin

    def test_no_memory_form_reports_zero(self, fem32_nomem):
        grid = make_grid(0.05, 0.5, 0.25)
        rep = positive_type_test(delay(0.25, 1.0), fem32_nomem, grid, ensemble_size=10)
        assert rep.min_ratio == 0.0


class TestAprioriBound:
    def test_memoryless_case_reduces_to_parabolic_estimate(self, fem32, eigenmode32):
        forcing = lambda t, xs: np.sin(np.pi * xs) * math.cos(t)
        p = ProblemSpec(fem=fem32, kernel=zero_kernel(), u0=eigenmode32, horizon=1.0, dt=5e-3, forcing=forcing)
        traj, _ = solve(p)
        rep = apriori_bound_check(traj, p)
        assert rep.passed
        # sharper memoryless inequality: the running energy stays below the data
        fc = form_constants(fem32)
        dt = p.dt
        f_sq = sum(dt * dual_norm(_forcing_load(p, n * dt), fem32) ** 2 for n in range(1, traj.grid.n_steps + 1))
        u0_sq = norm_h(eigenmode32, fem32) ** 2
        running = 0.0
        for n in range(traj.grid.n_steps + 1):
            if n >= 1:
                running += dt * seminorm_v(traj.value(n), fem32) ** 2
            assert norm_h(traj.value(n), fem32) ** 2 + fc.alpha0 * running <= u0_sq + f_sq / fc.alpha0 + 1e-12

    def test_heavy_delay_still_bounded(self, fem32, eigenmode32):
        p = ProblemSpec(fem=fem32, kernel=delay(0.1, 5.0), u0=eigenmode32, horizon=1.0, dt=2.5e-3)
        traj, _ = solve(p)
        rep = apriori_bound_check(traj, p)
        assert rep.passed
        assert rep.ratio < 1.0

    def test_small_sweep(self, fem32, eigenmode32):
        for kernel in (fractional(0.5, 1.0), exponential(2.0, 0.5, 1.0), delay(0.25, 1.0)):
            for factor in (0.5, 1.0):
                p = ProblemSpec(fem=fem32, kernel=scale_kernel(kernel, factor), u0=eigenmode32, horizon=1.0, dt=5e-3)
                traj, _ = solve(p)
                rep = apriori_bound_check(traj, p)
                assert rep.passed, (kernel, factor)

    def test_recursion_dominates_observed_energies(self, fem32, eigenmode32):
        p = ProblemSpec(fem=fem32, kernel=exponential(1.0, 1.0, 1.0), u0=eigenmode32, horizon=1.0, dt=5e-3)
        traj, _ = solve(p)
        rep = apriori_bound_check(traj, p)
        assert np.all(rep.e_observed <= rep.e_bound * (1.0 + 1e-12))


class TestContractionFactor:
    def test_zero_kernel(self, fem32):
        assert contraction_factor(zero_kernel(), fem32, 0.5) == 0.0

    def test_exponential_closed_form(self, fem32):
        got = contraction_factor(exponential(1.0, 1.0, 1.0), fem32, 0.1)
        assert got == pytest.approx(1.0 - math.exp(-0.1), rel=1e-9)

    def test_atom_outside_window(self, fem32):
        assert contraction_factor(delay(0.5, 3.0), fem32, 0.25) == 0.0

    def test_monotone_and_vanishing(self, fem32):
        k = fractional(0.5, 1.0)
        deltas = np.array([1e-6, 1e-4, 1e-2, 0.1, 0.5])
        qs = [contraction_factor(k, fem32, d) for d in deltas]
        assert all(b >= a for a, b in zip(qs, qs[1:]))
        assert qs[0] < 1e-2
