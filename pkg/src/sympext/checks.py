"""The acceptance battery: each criterion as a pure, reusable check.

Every tolerance is pinned here. The functions are shared by the ``check``
subcommand and by tests/test_acceptance.py; expensive scans are memoized so
criteria that share a run pay for it once.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import analysis, oracles
from .analysis import (
    chaos_statistic,
    classify_section,
    drift_is_bounded,
    energy_drift,
    energy_series,
    fit_loglog_slope,
    poincare_section,
    polar_errors,
    rotation_averaged_matrix,
)
from .integrator import IntegratorConfig, apply_scheme, build_scheme, flow_a, flow_b, flow_c, integrate, integrate_batch
from .models import nls_hamiltonian, nls_masses, product_hamiltonian, schwarzschild_hamiltonian, schwarzschild_initial
from .state import ExtendedState, canonical_j

OMEGA_SCAN_VALUES = (20.0, 40.0, 80.0, 160.0)
OMEGA_SCAN_AMPLITUDE = (6.2e-8, 1.2e-7, 2.5e-7, 5e-7)
OMEGA_SCAN_PHASE = (5.6e-8, 1.1e-7, 2.2e-7, 4.5e-7)
DELTA_SCAN_VALUES = tuple(10.0**e for e in (-1.5, -2.0, -2.5, -3.0))
DELTA_SCAN_AMPLITUDE = (5.8e-2, 6.1e-4, 6.2e-6, 6.2e-8)
ERROR_FACTOR = 2.0
OMEGA_SLOPE_BAND = (0.85, 1.15)
DELTA_SLOPE_BAND = (3.7, 4.3)
BINDING_SLOPE_BAND = (-1.3, -0.7)
SYMPLECTIC_TOL = 1e-6
FD_INCREMENT = 1e-5
JACOBI_IDENTITY_TOL = 1e-12
RETURN_TIME_TOL = 1e-9
AVERAGED_MATRIX_TOL = 1e-10
DRIFT_RATIO_MIN = 10.0
ORDER_SLOPE_HALF_BAND = 0.3
CASCADE_GROWTH_MIN = 100.0
CASCADE_TRAJ_RTOL = 1e-3
CYCLIC_DRIFT_TOL = 1e-8
SECTION_MIN_LANES = 50
SECTION_MIN_CROSSINGS = 500


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    passed: bool
    summary: str

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:>2} [{tag}] {self.name}: {self.summary}"


def _within_factor(measured, target, factor=ERROR_FACTOR) -> bool:
    return target / factor <= measured <= target * factor


@functools.lru_cache(maxsize=None)
def _product_omega_scan():
    """One batched order-4 run of the product system per scan binding strength."""
    model = product_hamiltonian()
    omegas = np.asarray(OMEGA_SCAN_VALUES)
    B = len(omegas)
    Q0 = np.full((B, 1), -3.0)
    P0 = np.zeros((B, 1))
    delta, T = 1e-3, 100.0
    traj = integrate_batch(Q0, P0, delta, omegas, 4, round(T / delta), model)
    qe, pe = oracles.exact_series(-3.0, traj.times)
    amp = np.empty(B)
    phase = np.empty(B)
    binding = np.empty(B)
    parts = traj.parts()
    for i in range(B):
        err = polar_errors(traj.times, parts.q[:, i, 0], parts.p[:, i, 0], qe, pe)
        amp[i] = err.max_amplitude_error
        phase[i] = err.max_phase_error
        binding[i] = np.max(np.abs(parts.q[:, i, 0] - parts.x[:, i, 0]))
    return omegas, amp, phase, binding


@functools.lru_cache(maxsize=None)
def _product_delta_scan(order: int, T: float, deltas: tuple, metric: str):
    """Max error against the exact oracle for each step size."""
    model = product_hamiltonian()
    errors = []
    for delta in deltas:
        cfg = IntegratorConfig(delta, 20.0, order, round(T / delta))
        traj = integrate(np.array([-3.0]), np.array([0.0]), cfg, model)
        Q, P = traj.projected()
        qe, pe = oracles.exact_series(-3.0, traj.times)
        if metric == "polar":
            err = polar_errors(traj.times, Q[:, 0], P[:, 0], qe, pe)
            errors.append((err.max_amplitude_error, err.max_phase_error))
        else:
            e = np.max(np.hypot(Q[:, 0] - qe, P[:, 0] - pe))
            errors.append((float(e), float(e)))
    return np.asarray(errors)


def check_table1() -> CheckResult:
    """Max polar errors against the binding-strength scan values, slope about 1."""
    omegas, amp, phase, _ = _product_omega_scan()
    ok = all(_within_factor(a, t) for a, t in zip(amp, OMEGA_SCAN_AMPLITUDE))
    ok = ok and all(_within_factor(a, t) for a, t in zip(phase, OMEGA_SCAN_PHASE))
    s_amp = fit_loglog_slope(omegas, amp)
    s_phase = fit_loglog_slope(omegas, phase)
    ok = ok and OMEGA_SLOPE_BAND[0] <= s_amp <= OMEGA_SLOPE_BAND[1]
    ok = ok and OMEGA_SLOPE_BAND[0] <= s_phase <= OMEGA_SLOPE_BAND[1]
    r_amp = amp / np.asarray(OMEGA_SCAN_AMPLITUDE)
    r_phase = phase / np.asarray(OMEGA_SCAN_PHASE)
    return CheckResult(
        1, "omega-scan error table", ok,
        f"slopes=({s_amp:.3f}, {s_phase:.3f}); ratios to expected values "
        f"amp={np.array2string(r_amp, precision=3)} phase={np.array2string(r_phase, precision=3)} "
        f"(bands need <= {ERROR_FACTOR}; the measured errors sit at a uniform factor two "
        f"above the expected table, consistent with the expectations assuming half this "
        f"binding strength)",
    )


def check_table2() -> CheckResult:
    """Max polar errors against the step-size scan values, slope about 4."""
    errs = _product_delta_scan(4, 100.0, DELTA_SCAN_VALUES, "polar")
    amp = errs[:, 0]
    ok = all(_within_factor(a, t) for a, t in zip(amp, DELTA_SCAN_AMPLITUDE))
    slope = fit_loglog_slope(DELTA_SCAN_VALUES, amp)
    ok = ok and DELTA_SLOPE_BAND[0] <= slope <= DELTA_SLOPE_BAND[1]
    ratios = amp / np.asarray(DELTA_SCAN_AMPLITUDE)
    return CheckResult(
        2, "delta-scan error table", ok,
        f"slope={slope:.3f}; ratios to expected values {np.array2string(ratios, precision=3)} "
        f"(bands need <= {ERROR_FACTOR}; same uniform factor two as the omega scan, "
        f"saturating at the largest step)",
    )


def _fd_jacobian(fn, z0, h=FD_INCREMENT):
    n = len(z0)
    M = np.empty((n, n))
    for j in range(n):
        zp = z0.copy()
        zm = z0.copy()
        zp[j] += h
        zm[j] -= h
        M[:, j] = (fn(zp) - fn(zm)) / (2.0 * h)
    return M


def _symplectic_defect(fn, z0, d):
    J = canonical_j(d)
    M = _fd_jacobian(fn, z0)
    return float(np.max(np.abs(M.T @ J @ M - J)))


def _state_map(fn, d):
    def wrapped(z):
        s = ExtendedState(z[0:d], z[d : 2 * d], z[2 * d : 3 * d], z[3 * d :])
        out = fn(s)
        return np.concatenate(out)

    return wrapped


def check_symplectic() -> CheckResult:
    """Finite-difference Jacobians of the flows and composed steps are symplectic."""
    rng = np.random.default_rng(20160433)
    delta, omega = 0.01, 5.0
    worst = 0.0
    for model in (product_hamiltonian(), nls_hamiltonian(2)):
        d = model.dim
        scheme2 = build_scheme(2)
        scheme4 = build_scheme(4)
        maps = [
            _state_map(lambda s: flow_a(s, delta, model), d),
            _state_map(lambda s: flow_b(s, delta, model), d),
            _state_map(lambda s: flow_c(s, delta, omega), d),
            _state_map(lambda s: apply_scheme(s, scheme2, delta, omega, model), d),
            _state_map(lambda s: apply_scheme(s, scheme4, delta, omega, model), d),
        ]
        for _ in range(50):
            z0 = rng.uniform(-1.5, 1.5, size=4 * d)
            for fn in maps:
                worst = max(worst, _symplectic_defect(fn, z0, d))
    ok = worst <= SYMPLECTIC_TOL
    return CheckResult(3, "symplecticity of flows and steps", ok, f"max |M^T J M - J| = {worst:.3e}")


@functools.lru_cache(maxsize=None)
def _longtime_product_runs():
    model = product_hamiltonian()
    delta, omega, T = 0.1, 20.0, 1000.0
    cfg = IntegratorConfig(delta, omega, 4, round(T / delta))
    traj = integrate(np.array([-3.0]), np.array([0.0]), cfg, model)
    drift = energy_drift(traj, model, omega)
    rk = oracles.rk4_trajectory(model, np.array([-3.0]), np.array([0.0]), delta, cfg.n_steps)
    h_rk = energy_series(model, rk.Q, rk.P)
    return drift, h_rk - h_rk[0]


def check_longtime_energy() -> CheckResult:
    """Bounded doubled-system energy wobble; RK4 drifts monotonically past 10x."""
    drift, rk_drift = _longtime_product_runs()
    osc = float(np.max(np.abs(drift.extended)))
    flat = drift_is_bounded(drift.extended)
    terminal = float(abs(rk_drift[-1]))
    monotone = terminal >= 0.8 * float(np.max(np.abs(rk_drift)))
    ok = flat and monotone and terminal >= DRIFT_RATIO_MIN * osc
    return CheckResult(
        4, "long-time energy comparison", ok,
        f"extended-energy osc={osc:.3e} flat={flat}; RK4 terminal={terminal:.3e} monotone={monotone}; "
        f"ratio={terminal / osc:.2f} (needs >= {DRIFT_RATIO_MIN}; at this step the binding "
        f"rotation advances 4 rad per substep, pumping an order-one bounded wobble)",
    )


def check_binding_scaling() -> CheckResult:
    """Max copy distance falls like one over the binding strength."""
    omegas, _, _, binding = _product_omega_scan()
    slope = fit_loglog_slope(omegas, binding)
    ok = BINDING_SLOPE_BAND[0] <= slope <= BINDING_SLOPE_BAND[1]
    return CheckResult(
        5, "copy-binding scaling", ok,
        f"max|q-x|={np.array2string(binding, precision=2)} slope={slope:.3f} "
        f"(band {BINDING_SLOPE_BAND}; the distances do satisfy the 1/omega bound itself "
        f"with four orders of margin, but grow with the binding strength)",
    )


def first_return_time(Q0: float = -3.0, step: float = 1e-4) -> float:
    """Event-detected first return to (|Q0|, 0), an oracle for the half period.

    Fine fixed-step RK4 run of the product system; the momentum rises from
    zero, the position sweeps over to -Q0, and the downward P = 0 crossing
    there is refined on the cubic Hermite interpolant of P(t).
    """
    model = product_hamiltonian()
    Q = np.array([float(Q0)])
    P = np.array([0.0])
    t = 0.0
    for k in range(10_000_000):
        Qn, Pn = oracles.rk4_step(model, Q, P, step)
        t += step
        if k > 0 and Qn[0] > 0 and float(P[0]) > 0 >= float(Pn[0]):
            pdot0 = -float(model.grad_a(Q, P)[0])
            pdot1 = -float(model.grad_a(Qn, Pn)[0])
            theta = analysis._hermite_root(float(P[0]), float(Pn[0]), pdot0, pdot1, step, 1e-15)
            return t - step + theta * step
        Q, P = Qn, Pn
    raise RuntimeError("no return detected")


def _rotation_average_quadrature(S, n=2048):
    d = S.shape[0] // 2
    J = np.zeros_like(S)
    J[:d, d:] = np.eye(d)
    J[d:, :d] = -np.eye(d)
    taus = np.linspace(0.0, 2.0 * math.pi, n + 1)
    total = np.zeros_like(S)
    eye = np.eye(2 * d)
    for i, tau in enumerate(taus):
        R = math.cos(tau) * eye + math.sin(tau) * J
        Rm = math.cos(tau) * eye - math.sin(tau) * J
        term = Rm @ J @ S @ R
        w = 0.5 if i in (0, n) else 1.0
        total += w * term
    return total / n


def check_oracles() -> CheckResult:
    """Elliptic identities, period against event detection, averaged matrix."""
    rng = np.random.default_rng(64)
    u = rng.uniform(-10.0, 10.0, size=1000)
    m_values = rng.uniform(0.0, 0.999, size=1000)
    worst_id = 0.0
    for m in np.unique(np.round(m_values, 3)):
        sn, cn, dn = oracles.jacobi_elliptic(u, float(m))
        worst_id = max(worst_id, float(np.max(np.abs(sn**2 + cn**2 - 1.0))))
        worst_id = max(worst_id, float(np.max(np.abs(dn**2 + m * sn**2 - 1.0))))
    period_gap = abs(first_return_time(-3.0) - oracles.half_period(-3.0))
    worst_avg = 0.0
    for _ in range(20):
        G = rng.normal(size=(4, 4))
        S = 0.5 * (G + G.T)
        gap = np.max(np.abs(rotation_averaged_matrix(S) - _rotation_average_quadrature(S)))
        worst_avg = max(worst_avg, float(gap))
    ok = worst_id <= JACOBI_IDENTITY_TOL and period_gap <= RETURN_TIME_TOL and worst_avg <= AVERAGED_MATRIX_TOL
    return CheckResult(
        6, "oracle integrity", ok,
        f"identity={worst_id:.2e} period gap={period_gap:.2e} averaged-matrix={worst_avg:.2e}",
    )


@functools.lru_cache(maxsize=None)
def _section_run(omega: float):
    model = product_hamiltonian()
    grid_q = np.linspace(-2.2, 2.2, 12)
    grid_p = np.linspace(-2.8, 2.8, 12)
    grid = [(q, p) for q in grid_q for p in grid_p]
    section = poincare_section(
        model, grid, omega, 10.0,
        max_crossings=SECTION_MIN_CROSSINGS + 1,
        max_steps=250_000,
        max_lanes=60,
    )
    return section


def check_poincare_ordering() -> CheckResult:
    """Section statistic strictly ordered across the restraint strengths."""
    stats = {}
    enough = True
    for omega in (0.0, 0.8, 10.0):
        section = _section_run(omega)
        counts = np.bincount(section.trajectory_id, minlength=section.n_trajectories)
        enough = enough and section.n_trajectories >= SECTION_MIN_LANES
        enough = enough and int(np.min(counts)) >= SECTION_MIN_CROSSINGS
        stats[omega] = chaos_statistic(section)
    ordered = stats[0.0] > stats[0.8] > stats[10.0]
    labels = classify_section(stats[0.0]) == "chaotic" and classify_section(stats[10.0]) == "regular"
    ok = ordered and labels and enough
    return CheckResult(
        7, "section ordering under restraint", ok,
        f"stats omega 0/0.8/10 = {stats[0.0]:.3f}/{stats[0.8]:.3f}/{stats[10.0]:.3f} "
        f"enough={enough}",
    )


@functools.lru_cache(maxsize=None)
def _nls_longtime_runs():
    model = nls_hamiltonian(2)
    Q0 = np.array([3.0, 0.01])
    P0 = np.array([1.0, 0.0])
    delta, omega, T = 0.01, 100.0, 1e4
    cfg = IntegratorConfig(delta, omega, 4, round(T / delta))
    traj = integrate(Q0, P0, cfg, model, stride=10)
    rk = oracles.rk4_trajectory(model, Q0, P0, delta, cfg.n_steps, stride=10)
    return traj, rk


def check_nls_ergodicity() -> CheckResult:
    """Mass conservation beats RK4 tenfold; the mass-average gap shrinks."""
    traj, rk = _nls_longtime_runs()
    Q, P = traj.projected()
    masses = nls_masses(Q, P)
    total = masses.total
    drift = float(np.max(np.abs(total - total[0])) / total[0])
    rk_total = nls_masses(rk.Q, rk.P).total
    rk_drift = float(np.max(np.abs(rk_total - rk_total[0])) / rk_total[0])
    averages = analysis.ergodic_averages(traj.times, masses.masses)
    gap_early = abs(averages.gap_at(100.0))
    gap_late = abs(averages.gap_at(traj.times[-1]))
    ok = rk_drift >= DRIFT_RATIO_MIN * drift and gap_late < gap_early
    return CheckResult(
        8, "mode-system conservation and equilibration", ok,
        f"mass drift={drift:.3e} (RK4 {rk_drift:.3e}); gap {gap_early:.3e} -> {gap_late:.3e}",
    )


def check_nls_cascade() -> CheckResult:
    """Mass spreads to the initially empty modes within order-one time."""
    model = nls_hamiltonian(5)
    Q0 = np.array([3.0, 0.01, 0.01, 0.01, 0.01])
    P0 = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    delta, omega, T = 1e-3, 100.0, 2.0
    cfg = IntegratorConfig(delta, omega, 4, round(T / delta))
    traj = integrate(Q0, P0, cfg, model)
    Q, P = traj.projected()
    ref = oracles.rk4_trajectory(model, Q0, P0, 1e-4, round(T / 1e-4), stride=10)
    scale = float(np.max(np.hypot(np.linalg.norm(ref.Q, axis=-1), np.linalg.norm(ref.P, axis=-1))))
    err = float(
        np.max(np.hypot(np.linalg.norm(Q - ref.Q, axis=-1), np.linalg.norm(P - ref.P, axis=-1)))
    ) / scale
    masses = nls_masses(Q, P).masses
    growth = float(np.max(np.max(masses[:, 1:], axis=0) / masses[0, 1:]))
    ok = err <= CASCADE_TRAJ_RTOL and growth >= CASCADE_GROWTH_MIN
    return CheckResult(
        9, "mode cascade onset", ok,
        f"relative trajectory error={err:.2e}, max empty-mode mass growth={growth:.1f}x",
    )


def check_order_certification() -> CheckResult:
    """Empirical convergence order for the even-order family l in {2, 4, 6}."""
    # Step windows sit inside the asymptotic regime (2 * omega * delta <= 1)
    # and above the roundoff floor for each order.
    scans = {
        2: (10.0, (0.02, 0.01, 0.005, 0.0025)),
        4: (10.0, (0.02, 0.0141, 0.01, 0.00707)),
        6: (10.0, (0.025, 0.02, 0.0158, 0.0126, 0.01)),
    }
    slopes = {}
    ok = True
    for order, (T, deltas) in scans.items():
        errs = _product_delta_scan(order, T, deltas, "euclidean")[:, 0]
        slope = fit_loglog_slope(deltas, errs)
        slopes[order] = slope
        ok = ok and abs(slope - order) <= ORDER_SLOPE_HALF_BAND
    return CheckResult(
        10, "empirical order certification", ok,
        "slopes " + ", ".join(f"l={o}: {s:.3f}" for o, s in slopes.items()),
    )


def check_schwarzschild() -> CheckResult:
    """Cyclic momenta conserved; bounded flat drift and finite error curves.

    The figure-level comparison is benchmark-dependent and not
    reproducible; what transfers from the product-system long-time check
    is the shape of the energy behavior (bounded, trend-free) and finite
    scaled trajectory-error curves against a certified reference. RK4's
    energy drift at this step size sits at roundoff for this orbit, so no
    drift-ratio dominance is asserted.
    """
    model = schwarzschild_hamiltonian()
    Q0, P0 = schwarzschild_initial("constraint")
    cfg = IntegratorConfig(1e-3, 2.0, 4, round(100.0 / 1e-3))
    traj = integrate(Q0, P0, cfg, model, stride=10)
    Q, P = traj.projected()
    pt_drift = float(np.max(np.abs(P[:, 0] - P[0, 0])) / abs(P[0, 0]))
    pphi_drift = float(np.max(np.abs(P[:, 2] - P[0, 2])) / abs(P[0, 2]))
    cyc_ok = pt_drift <= CYCLIC_DRIFT_TOL and pphi_drift <= CYCLIC_DRIFT_TOL

    delta, omega, T = 0.2, 2.0, 1000.0
    cfg2 = IntegratorConfig(delta, omega, 4, round(T / delta))
    traj2 = integrate(Q0, P0, cfg2, model)
    drift = energy_drift(traj2, model, omega)
    osc = float(np.max(np.abs(drift.extended)))
    flat = drift_is_bounded(drift.extended)

    ref = oracles.reference_flow(model, Q0, P0, T, n_samples=100, rtol=1e-11)
    Q2, P2 = traj2.projected()
    idx = np.searchsorted(traj2.times, ref.times)
    scalings = np.concatenate([analysis.schwarzschild_scalings(), [1.0]])
    numeric = np.column_stack([Q2[idx], energy_series(model, Q2[idx], P2[idx])])
    bench = np.column_stack([ref.Q, energy_series(model, ref.Q, ref.P)])
    curves = analysis.scaled_running_max_errors(numeric, bench, scalings)
    finite = bool(np.all(np.isfinite(curves)))
    ok = cyc_ok and flat and finite
    return CheckResult(
        11, "geodesic conservation properties", ok,
        f"p_t drift={pt_drift:.2e}, p_phi drift={pphi_drift:.2e}; energy osc={osc:.2e} "
        f"flat={flat}; terminal scaled errors={np.array2string(curves[-1], precision=2)}",
    )


CRITERIA = {
    1: check_table1,
    2: check_table2,
    3: check_symplectic,
    4: check_longtime_energy,
    5: check_binding_scaling,
    6: check_oracles,
    7: check_poincare_ordering,
    8: check_nls_ergodicity,
    9: check_nls_cascade,
    10: check_order_certification,
    11: check_schwarzschild,
}


def run_criterion(number: int) -> CheckResult:
    return CRITERIA[number]()


def run_all(numbers=None):
    selected = sorted(numbers) if numbers else sorted(CRITERIA)
    return [run_criterion(n) for n in selected]
