"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records a one-line PASS/FAIL verdict (shown in the terminal
summary) before asserting.
"""

import math
import time

import numpy as np
from scipy.linalg import expm

from conftest import record
from kryloscope import analytic
from kryloscope.chain import complexity, complexity_rate, evolve_chain
from kryloscope.counting import counting_function, default_chi_grid, two_branch_counting
from kryloscope.fluctuations import (
    constant_matrix,
    lyapunov_covariance,
    monte_carlo_covariance,
    susceptibility_sweep,
)
from kryloscope.overlaps import overlap
from kryloscope.profiles import LanczosProfile, tridiagonal_matrix
from kryloscope.semiclassics import GROWING, growth_power, integrate_hamilton, linear_shift_trajectory, lyapunov_rate

T_GRID = np.linspace(0.0, 3.0, 61)


def test_criterion_1_poisson():
    start = time.perf_counter()
    model = analytic.ClosedFormModel.poisson(1.0)
    traj = evolve_chain(model.profile(), T_GRID)
    K = complexity(traj)
    exact = analytic.exact_K(model, T_GRID)
    k_err = float(np.max(np.abs(K[1:] - exact[1:]) / exact[1:]))
    p_err = max(float(np.max(np.abs(traj.probabilities[i] - analytic.exact_P(model, traj.sites, t))))
                for i, t in enumerate(T_GRID))
    elapsed = time.perf_counter() - start
    ok = k_err < 1e-6 and p_err < 1e-8 and elapsed < 5 and traj.valid
    record(1, ok, f"K rel err {k_err:.2e} (<1e-6), P abs err {p_err:.2e} (<1e-8), {elapsed:.2f}s (<5s)")
    assert ok


def test_criterion_2_su11():
    start = time.perf_counter()
    chi = default_chi_grid(64)
    k_err = z_err = 0.0
    valid = True
    for k in (0.25, 0.5, 1.0):
        model = analytic.ClosedFormModel.su11(1.0, k)
        traj = evolve_chain(model.profile(), T_GRID, N="auto")
        valid &= traj.valid
        K = complexity(traj)
        exact = analytic.exact_K(model, T_GRID)
        k_err = max(k_err, float(np.max(np.abs(K[1:] - exact[1:]) / exact[1:])))
        Z = counting_function(traj, chi, M=1).Z_values
        for i, t in enumerate(T_GRID):
            z_err = max(z_err, float(np.max(np.abs(Z[i] - analytic.exact_Z(model, chi, t)))))
    elapsed = time.perf_counter() - start
    ok = k_err < 1e-5 and z_err < 1e-6 and elapsed < 60 and valid
    record(2, ok, f"K rel err {k_err:.2e} (<1e-5), Z abs err {z_err:.2e} (<1e-6), {elapsed:.1f}s (<60s)")
    assert ok


def test_criterion_3_fcs_identity():
    chi = default_chi_grid(64)
    rng = np.random.default_rng(3)
    regression = [
        LanczosProfile.sqrt_hopping(1.0),
        LanczosProfile.su11(1.0, 0.25),
        LanczosProfile.su11(1.0, 1.0),
        LanczosProfile.crossover(1.0, 1.0, 10.0),
        LanczosProfile.power_law(1.0, 0.5),
        LanczosProfile.tabulated(rng.uniform(0.2, 2.0, 12)),
    ]
    worst = 0.0
    for prof in regression:
        traj = evolve_chain(prof, np.linspace(0, 2, 21))
        direct = counting_function(traj, chi, M=1).Z_values
        worst = max(worst, float(np.max(np.abs(direct - two_branch_counting(traj, chi)))))
    ok = worst < 1e-12
    record(3, ok, f"max |Z_sum - Z_branch| {worst:.2e} over {len(regression)} trajectories (<1e-12)")
    assert ok


def test_criterion_4_semiclassical_lyapunov():
    rate_err = 0.0
    for alpha in (0.5, 1.0, 2.0):
        traj = integrate_hamilton(LanczosProfile.linear_shift(alpha, 0.0), 1.0, GROWING,
                                  np.linspace(0, 6 / alpha, 301))
        rate, _ = lyapunov_rate(traj)
        rate_err = max(rate_err, abs(rate / (2 * alpha) - 1))
    drift = 0.0
    for n0, p0 in ((2.0, 0.0), (5.0, 1.0), (3.0, -2.5), (10.0, 2.0), (1.5, -1.0)):
        traj = integrate_hamilton(LanczosProfile.linear_shift(1.0, 0.0), n0, p0, np.linspace(0, 5, 501))
        inv = traj.n_path * np.cos(traj.p_unwrapped)
        drift = max(drift, float(np.max(np.abs(inv - inv[0]))))
    ok = rate_err < 0.01 and drift < 1e-8
    record(4, ok, f"rate rel err {rate_err:.2e} (<1%), n cos p drift {drift:.2e} (<1e-8)")
    assert ok


def test_criterion_5_growth_laws():
    eps_fit = {}
    for eps in (0.2, 0.3):
        traj = integrate_hamilton(LanczosProfile.marginal(1.0, eps), 1.0, GROWING, np.linspace(0, 15, 1501))
        eps_fit[eps] = growth_power(traj, (5.0, 15.0), rate=2.0)[0]
    eps_ok = all(abs(v / e - 1) < 0.10 for e, v in eps_fit.items())
    traj = integrate_hamilton(LanczosProfile.power_law(1.0, 0.5), 1.0, GROWING, np.linspace(0, 1000, 2001))
    exponent = growth_power(traj)[0]
    exp_ok = abs(exponent / 2 - 1) < 0.02
    shift_err = 0.0
    t = np.linspace(0, 5, 101)
    for c in (1.0, 5.0):
        traj = integrate_hamilton(LanczosProfile.linear_shift(1.0, c), 1.0, GROWING, t)
        shift_err = max(shift_err, float(np.max(np.abs(traj.n_path / linear_shift_trajectory(1.0, c, 1.0, t) - 1))))
    ok = eps_ok and exp_ok and shift_err < 1e-6
    fits = ", ".join(f"eps {e}->{v:.4f}" for e, v in eps_fit.items())
    record(5, ok, f"{fits} (10%), exponent {exponent:.4f} (2%), shift rel err {shift_err:.1e} (<1e-6)")
    assert ok


def test_criterion_6_fluctuation_oracle():
    start = time.perf_counter()
    A = constant_matrix([[2.0, 0.0], [0.0, -2.0]])
    oracle = (math.e**4 - 1) / 4
    ode = lyapunov_covariance(A, "identity", np.linspace(0, 1, 11)).variance_n[-1]
    mc = monte_carlo_covariance(A, "identity", [0.0, 1.0], samples=100_000, seed=20240601, check_halving=False)
    est, se = mc["covariance"][-1, 0, 0], mc["stderr"][-1, 0, 0]
    elapsed = time.perf_counter() - start
    ode_err = abs(ode - oracle)
    z = abs(est - oracle) / se
    ok = ode_err < 1e-8 and z < 3 and elapsed < 30
    record(6, ok, f"ODE err {ode_err:.1e} (<1e-8), MC {z:.2f} standard errors (<3), {elapsed:.1f}s (<30s)")
    assert ok


def test_criterion_7_crossover_trend():
    start = time.perf_counter()
    n_star = np.array([10.0, 1e2, 1e3, 1e4])
    res = susceptibility_sweep(1.0 / n_star, alpha=1.0)
    elapsed = time.perf_counter() - start
    rates = np.array([p.mean_rate for p in res.points])
    mean_ok = bool(np.all(np.abs(rates / 2 - 1) < 0.05))
    fit = res.trend["chi_hat_vs_ln_nstar"]
    trend_ok = fit["slope"] > 0 and fit["r2"] > 0.95
    ok = mean_ok and trend_ok and elapsed < 300
    record(7, ok, f"late rates {np.round(rates, 4).tolist()} (5% of 2): {'ok' if mean_ok else 'off'}; "
                  f"chi_hat vs ln n* slope {fit['slope']:.3g}, R2 {fit['r2']:.3f} (increasing, >0.95); "
                  f"{elapsed:.1f}s (<300s)")
    assert ok


def test_criterion_8_overlaps():
    prof = LanczosProfile.sqrt_hopping(1.0)
    exp_err = max(abs(overlap(prof, w) / math.exp(w) - 1) for w in np.linspace(0, 20, 201))
    rng = np.random.default_rng(8)
    dense_err = 0.0
    for _ in range(20):
        b = rng.uniform(0.1, 3.0, rng.integers(1, 10))
        z = complex(*rng.normal(size=2))
        Lp = np.tril(tridiagonal_matrix(b))
        e0 = np.eye(len(b) + 1)[0]
        ref = (expm(np.conj(z) * Lp.T) @ expm(z * Lp) @ e0)[0].real
        dense_err = max(dense_err, abs(overlap(LanczosProfile.tabulated(b), abs(z) ** 2) / ref - 1))
    ok = exp_err < 1e-10 and dense_err < 1e-12
    record(8, ok, f"e^w rel err {exp_err:.1e} (<1e-10), dense oracle rel err {dense_err:.1e} (<1e-12)")
    assert ok


def test_criterion_9_cross_pipeline():
    alpha = 1.0
    t = np.linspace(0.0, 3.5 / alpha, 71)
    late = t >= 3.0 / alpha
    worst = 0.0
    for k in (0.25, 0.5, 1.0):
        prof = LanczosProfile.su11(alpha, k)
        traj = evolve_chain(prof, t)
        quantum = complexity_rate(traj)[late] / complexity(traj)[late]
        saddle = integrate_hamilton(prof, 1.0, GROWING, t)
        classical, _ = lyapunov_rate(saddle, (3.0 / alpha, t[-1]))
        worst = max(worst, float(np.max(np.abs(quantum / classical - 1))))
    ok = worst < 0.02
    record(9, ok, f"max |dlnK/dt / lambda - 1| {worst:.2e} on t in [3, 3.5] (<2%)")
    assert ok
