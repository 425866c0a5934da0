"""Error metrics, sections, averages, and the averaged-matrix identity."""
import math

import numpy as np
import pytest

import sympext as sx
from sympext.analysis import CHAOS_THRESHOLD, REGULAR_THRESHOLD, drift_is_bounded
from sympext.checks import _rotation_average_quadrature


class TestPolarErrors:
    def test_identical_series_zero_error(self):
        t = np.linspace(0, 10, 200)
        q = 2.0 * np.cos(t)
        p = 2.0 * np.sin(t)
        err = sx.polar_errors(t, q, p, q, p)
        assert err.max_amplitude_error == 0.0
        assert err.max_phase_error == 0.0

    def test_shifted_by_full_period_zero_error(self):
        T2 = 2.0 * sx.half_period(-3.0)
        t = np.linspace(0, 20, 3000)
        Q1, P1 = sx.exact_solution(-3.0, t)
        Q2, P2 = sx.exact_solution(-3.0, t + T2)
        err = sx.polar_errors(t, Q1, P1, Q2, P2)
        assert err.max_amplitude_error <= 1e-10
        assert err.max_phase_error <= 1e-10

    def test_phase_error_can_exceed_two_pi(self):
        t = np.linspace(0, 20, 5000)
        q1, p1 = np.cos(t), np.sin(t)
        rate = 1.5
        q2, p2 = np.cos(rate * t), np.sin(rate * t)
        err = sx.polar_errors(t, q2, p2, q1, p1)
        assert err.max_phase_error == pytest.approx(0.5 * 20.0, rel=1e-3)
        assert err.max_phase_error > 2.0 * math.pi

    def test_origin_guard(self):
        t = np.linspace(0, 1, 10)
        z = np.zeros(10)
        with pytest.raises(sx.PhaseUndefinedError, match="origin"):
            sx.polar_errors(t, z, z, np.ones(10), z)

    def test_undersampled_guard(self):
        t = np.linspace(0, 10, 11)           # one sample per ~3.2 rad turn
        q, p = np.cos(3.2 * t), np.sin(3.2 * t)
        with pytest.raises(ValueError, match="unwrap"):
            sx.polar_errors(t, q, p, q.copy(), p.copy())

    def test_grid_mismatch_rejected(self):
        with pytest.raises(ValueError):
            sx.polar_errors(np.arange(4.0), np.ones(4), np.ones(4), np.ones(3), np.ones(3))


class TestScaledRunningMax:
    def test_self_comparison_zero(self):
        a = np.random.default_rng(0).normal(size=(50, 3))
        out = sx.scaled_running_max_errors(a, a, np.ones(3))
        assert not out.any()

    def test_monotone_by_construction(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(100, 4))
        b = rng.normal(size=(100, 4))
        out = sx.scaled_running_max_errors(a, b, np.array([1.0, 2.0, math.pi, 0.5]))
        assert np.all(np.diff(out, axis=0) >= 0)

    def test_zero_scaling_rejected(self):
        a = np.zeros((5, 2))
        with pytest.raises(ValueError, match="nonzero"):
            sx.scaled_running_max_errors(a, a, np.array([1.0, 0.0]))

    def test_schwarzschild_scalings(self):
        s = sx.schwarzschild_scalings()
        assert s[0] == pytest.approx(2.0 * math.pi * math.sqrt(800.0))
        assert s[1] == pytest.approx(20.0)
        assert s[2] == pytest.approx(2.0 * math.pi)


class TestEnergyDrift:
    def test_oracle_trajectory_has_negligible_drift(self):
        # Build a trajectory container holding the exact solution doubled.
        t = np.linspace(0, 10, 500)
        Q, P = sx.exact_solution(-3.0, t)
        states = np.stack([Q[:, None], P[:, None], Q[:, None], P[:, None]], axis=1)
        traj = sx.Trajectory(t, states)
        drift = sx.energy_drift(traj, sx.product_hamiltonian(), 20.0)
        assert np.max(np.abs(drift.original)) <= 1e-11
        assert np.max(np.abs(drift.extended)) <= 1e-10

    def test_trend_detector(self):
        t = np.arange(2000, dtype=float)
        assert drift_is_bounded(1e-6 * np.sin(0.1 * t))
        assert not drift_is_bounded(1e-9 * t)


class TestErgodicAverages:
    def test_constant_masses_constant_gap(self):
        t = np.linspace(0, 10, 101)
        masses = np.tile([2.0, 0.5], (101, 1))
        avg = sx.ergodic_averages(t, masses)
        np.testing.assert_allclose(avg.averages[:, 0], 2.0, rtol=1e-14)
        np.testing.assert_allclose(avg.gap, 1.5, rtol=1e-14)

    def test_linear_mass_average(self):
        # I(t) = t integrates to <I>(T) = T/2 exactly under the trapezoid rule.
        t = np.linspace(0, 4, 41)
        masses = np.column_stack([t, np.zeros_like(t)])
        avg = sx.ergodic_averages(t, masses)
        np.testing.assert_allclose(avg.averages[:, 0], 0.5 * avg.times, rtol=1e-13)

    def test_zero_horizon_rejected(self):
        with pytest.raises(ValueError, match="two samples"):
            sx.ergodic_averages(np.array([0.0]), np.array([[1.0, 2.0]]))

    def test_gap_at(self):
        t = np.linspace(0, 1, 11)
        masses = np.tile([3.0, 1.0], (11, 1))
        avg = sx.ergodic_averages(t, masses)
        assert avg.gap_at(0.5) == pytest.approx(2.0)


class TestRotationAveragedMatrix:
    def test_identity_input_gives_structure_matrix(self):
        out = sx.rotation_averaged_matrix(np.eye(4))
        J = np.zeros((4, 4))
        J[:2, 2:] = np.eye(2)
        J[2:, :2] = -np.eye(2)
        np.testing.assert_array_equal(out, J)

    def test_matches_quadrature(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            G = rng.normal(size=(4, 4))
            S = 0.5 * (G + G.T)
            closed = sx.rotation_averaged_matrix(S)
            quad = _rotation_average_quadrature(S)
            assert np.max(np.abs(closed - quad)) <= 1e-10

    def test_exactly_skew(self):
        rng = np.random.default_rng(18)
        G = rng.normal(size=(6, 6))
        S = 0.5 * (G + G.T)
        out = sx.rotation_averaged_matrix(S)
        assert np.array_equal(out, -out.T)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            sx.rotation_averaged_matrix(np.arange(16.0).reshape(4, 4))

    def test_rejects_odd_dimension(self):
        with pytest.raises(ValueError):
            sx.rotation_averaged_matrix(np.eye(3))

    def test_fundamental_matrix_stays_orthogonal(self):
        # Phi' = Omega(s) Phi with smoothly varying symmetric input.
        rng = np.random.default_rng(19)
        G0 = rng.normal(size=(4, 4))
        G1 = rng.normal(size=(4, 4))
        S0 = 0.5 * (G0 + G0.T)
        S1 = 0.5 * (G1 + G1.T)

        def omega_of(s):
            return sx.rotation_averaged_matrix(S0 + math.sin(s) * S1)

        phi = np.eye(4)
        h = 1e-3
        s = 0.0
        for _ in range(10_000):
            k1 = omega_of(s) @ phi
            k2 = omega_of(s + 0.5 * h) @ (phi + 0.5 * h * k1)
            k3 = omega_of(s + 0.5 * h) @ (phi + 0.5 * h * k2)
            k4 = omega_of(s + h) @ (phi + h * k3)
            phi = phi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            s += h
        assert np.max(np.abs(phi.T @ phi - np.eye(4))) <= 1e-8


class TestPoincare:
    @pytest.fixture(scope="class")
    def small_section(self):
        model = sx.product_hamiltonian()
        grid = [(q, p) for q in np.linspace(-1.2, 1.2, 3) for p in np.linspace(-1.5, 1.5, 3)]
        return sx.poincare_section(
            model, grid, 2.0, 10.0, max_crossings=40, max_steps=40_000
        )

    def test_start_points_recorded_once(self, small_section):
        starts = small_section.crossing_index == 0
        assert np.sum(starts) == small_section.n_trajectories

    def test_shell_and_surface_invariants(self, small_section):
        model = sx.product_hamiltonian()
        # Recorded points sit on the shell within the stated tolerance when
        # re-embedded with their stored y and x on the surface.
        for i in range(len(small_section.points)):
            q, p = small_section.points[i]
            y = small_section.y_values[i]
            s = sx.ExtendedState(
                np.array([q]), np.array([p]), np.array([0.0]), np.array([y])
            )
            hbar = float(sx.extended_energy(model, small_section.omega, s))
            assert abs(hbar - small_section.shell) <= 1e-3 * (1.0 + abs(small_section.shell))

    def test_crossing_counts_positive(self, small_section):
        counts = np.bincount(small_section.trajectory_id,
                             minlength=small_section.n_trajectories)
        assert counts.min() >= 20

    def test_unreachable_shell_rejected(self):
        model = sx.product_hamiltonian()
        with pytest.raises(sx.AdmissibilityError, match="admissible"):
            sx.poincare_section(model, [(0.0, 0.0)], 1.0, 0.2)

    def test_skip_reasons_recorded(self):
        model = sx.product_hamiltonian()
        # q = 5 puts the binding energy alone above the shell: inadmissible.
        section = sx.poincare_section(
            model, [(0.0, 0.0), (5.0, 0.0)], 10.0, 10.0,
            max_crossings=8, max_steps=5_000,
        )
        assert len(section.skipped) == 1
        assert section.skipped[0][2].startswith("no real momentum root")

    def test_requires_one_dof_model(self):
        with pytest.raises(ValueError, match="1-dof"):
            sx.poincare_section(sx.nls_hamiltonian(2), [(0.0, 0.0)], 1.0, 10.0)

    def test_classification_thresholds(self):
        assert REGULAR_THRESHOLD < CHAOS_THRESHOLD
        assert sx.classify_section(CHAOS_THRESHOLD + 0.1) == "chaotic"
        assert sx.classify_section(REGULAR_THRESHOLD - 0.1) == "regular"
        assert sx.classify_section(0.5 * (CHAOS_THRESHOLD + REGULAR_THRESHOLD)) == "mixed"


class TestSlopeFit:
    def test_exact_power_law(self):
        x = np.array([1.0, 2.0, 4.0, 8.0])
        assert sx.fit_loglog_slope(x, x**3) == pytest.approx(3.0, abs=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            sx.fit_loglog_slope([1.0, 2.0], [0.0, 1.0])
