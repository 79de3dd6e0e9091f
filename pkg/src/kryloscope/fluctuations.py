"""Linearized fluctuations around the semiclassical saddle.

Deviations eta = (dn, dp) obey d eta/dt = A(t) eta + xi(t) with
<xi(t) xi(t')^T> = D delta(t - t'), where A(t) is the Jacobian of the flow
along the saddle.  The covariance obeys the differential Lyapunov equation

    dCov/dt = A Cov + Cov A^T + D,   Cov(0) = 0,

which is the differential form of Cov(t) = int_0^t G(t,s) D G(t,s)^T ds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad_vec, solve_ivp

from .profiles import LanczosProfile
from .semiclassics import GROWING, PhaseTrajectory, hamilton_rhs, integrate_hamilton

OVERFLOW_GUARD = 1e200
PSD_TOL = 1e-12


def stability_matrix(profile: LanczosProfile, n: float, p: float) -> np.ndarray:
    """Jacobian of (dn/dt, dp/dt) = (-2 b sin p, -2 b' cos p) at (n, p)."""
    if n < 1:
        raise ValueError("stability matrix requested at n < 1")
    b, db, d2b = float(profile.b(n)), float(profile.db(n)), float(profile.d2b(n))
    s, c = math.sin(p), math.cos(p)
    return np.array([[-2 * db * s, -2 * b * c], [-2 * d2b * c, 2 * db * s]])


def noise_kernel(spec="identity") -> np.ndarray:
    """Constant PSD noise matrix: "identity", "zero", or any 2x2 array-like."""
    if isinstance(spec, str):
        if spec == "identity":
            return np.eye(2)
        if spec == "zero":
            return np.zeros((2, 2))
        raise ValueError(f"unknown noise kernel {spec!r}")
    D = np.asarray(spec, dtype=float)
    if D.shape != (2, 2) or not np.allclose(D, D.T):
        raise ValueError("noise kernel must be a symmetric 2x2 matrix")
    if np.linalg.eigvalsh(D).min() < -PSD_TOL:
        raise ValueError("noise kernel must be positive semidefinite")
    return D


def saddle_stability(profile: LanczosProfile, saddle: PhaseTrajectory, rtol: float = 1e-12):
    """A(t) along ``saddle`` as a callable, from a dense re-integration of its flow."""
    t0, t1 = saddle.times[0], saddle.times[-1]
    sol = solve_ivp(
        hamilton_rhs(profile), (t0, t1), [saddle.n0, saddle.p0],
        method="DOP853", dense_output=True, rtol=rtol, atol=1e-12,
    )
    dense = sol.sol

    def A(t):
        n, p = dense(min(max(t, t0), t1))
        return stability_matrix(profile, n, p)

    return A


@dataclass(eq=False)
class FluctuationReport:
    times: np.ndarray
    stability: np.ndarray  # (T, 2, 2)
    covariance: np.ndarray  # (T, 2, 2)
    noise_kernel: np.ndarray
    escape_time: Optional[float] = None
    projections: int = 0
    flags: list = field(default_factory=list)
    mc_check: Optional[dict] = None

    @property
    def variance_n(self) -> np.ndarray:
        return self.covariance[:, 0, 0]

    @property
    def valid(self) -> bool:
        return not self.flags


def _project_psd(C):
    w, V = np.linalg.eigh(C)
    if w.min() >= -PSD_TOL:
        return C, False
    w = np.clip(w, 0.0, None)
    return (V * w) @ V.T, True


def lyapunov_covariance(
    A: Callable[[float], np.ndarray],
    D,
    t_grid,
    rtol: float = 1e-12,
    atol: float = 1e-14,
) -> FluctuationReport:
    """Integrate dCov/dt = A Cov + Cov A^T + D from Cov(0) = 0."""
    D = noise_kernel(D)
    t = np.asarray(t_grid, dtype=float)

    def rhs(tt, y):
        C = y.reshape(2, 2)
        At = A(tt)
        return (At @ C + C @ At.T + D).ravel()

    blowup = lambda _t, y: np.max(np.abs(y)) - OVERFLOW_GUARD  # noqa: E731
    blowup.terminal = True
    sol = solve_ivp(rhs, (t[0], t[-1]), np.zeros(4), method="DOP853", t_eval=t,
                    rtol=rtol, atol=atol, events=blowup)
    flags = []
    if len(sol.t) < len(t):
        flags.append(f"covariance exceeded overflow guard at t={sol.t[-1]:.6g}")
    covs = sol.y.T.reshape(-1, 2, 2)
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    proj = 0
    for i in range(len(covs)):
        covs[i], hit = _project_psd(covs[i])
        proj += hit
    stab = np.array([A(tt) for tt in sol.t])
    return FluctuationReport(sol.t, stab, covs, D, projections=proj, flags=flags)


def covariance_evolution(profile: LanczosProfile, saddle: PhaseTrajectory, D="identity") -> FluctuationReport:
    """Lyapunov-equation covariance along a semiclassical saddle."""
    if not saddle.valid:
        raise ValueError(f"invalid saddle trajectory: {saddle.flags}")
    report = lyapunov_covariance(saddle_stability(profile, saddle), D, saddle.times)
    return report


def propagator(A: Callable[[float], np.ndarray], s: float, t: float, rtol: float = 1e-12) -> np.ndarray:
    """Retarded Green's function G(t, s) of (d/dt - A), zero for t < s."""
    if t < s:
        return np.zeros((2, 2))
    if t == s:
        return np.eye(2)
    sol = solve_ivp(lambda tt, y: (A(tt) @ y.reshape(2, 2)).ravel(), (s, t), np.eye(2).ravel(),
                    method="DOP853", rtol=rtol, atol=1e-14)
    return sol.y[:, -1].reshape(2, 2)


def covariance_quadrature(A: Callable[[float], np.ndarray], D, t: float, rtol: float = 1e-10) -> np.ndarray:
    """Cov(t) = int_0^t G(t,s) D G(t,s)^T ds by adaptive quadrature (slow; for checks)."""
    D = noise_kernel(D)

    def integrand(s):
        G = propagator(A, s, t)
        return G @ D @ G.T

    val, _ = quad_vec(integrand, 0.0, t, epsrel=rtol, epsabs=0.0)
    return val


def monte_carlo_covariance(
    A: Callable[[float], np.ndarray],
    D,
    t_grid,
    samples: int = 100_000,
    seed: int = 0,
    dt: float = 1e-3,
    batches: int = 10,
    check_halving: bool = True,
) -> dict:
    """Euler-Maruyama ensemble for d eta = A eta dt + chol(D) dW.

    Each batch draws from its own stream spawned from ``seed``.  Returns
    covariance and standard-error arrays on ``t_grid``; with
    ``check_halving`` the run is repeated at dt/2 and the difference reported.
    """
    if samples < 1000:
        raise ValueError("need at least 10^3 samples")
    D = noise_kernel(D)
    t_grid = np.asarray(t_grid, dtype=float)
    main = _em_ensemble(A, D, t_grid, samples, seed, dt, batches)
    if check_halving:
        half = _em_ensemble(A, D, t_grid, samples, seed, dt / 2, batches)
        main["halving_difference"] = np.abs(half["covariance"] - main["covariance"])
    return main


def _em_ensemble(A, D, t_grid, samples, seed, dt, batches):
    # cholesky fails on singular D; eigen-factor instead
    w, V = np.linalg.eigh(D)
    root = V * np.sqrt(np.clip(w, 0.0, None))
    streams = np.random.SeedSequence(seed).spawn(batches)
    sizes = np.full(batches, samples // batches)
    sizes[: samples % batches] += 1
    T = t_grid[-1]
    steps = int(math.ceil((T - t_grid[0]) / dt))
    h = (T - t_grid[0]) / steps
    step_times = t_grid[0] + h * np.arange(steps + 1)
    report_idx = np.searchsorted(step_times, t_grid - 1e-12 * max(1.0, T))
    report_idx = np.clip(report_idx, 0, steps)
    prods = np.zeros((len(t_grid), 2, 2))
    prods_sq = np.zeros((len(t_grid), 2, 2))
    sqh = math.sqrt(h)
    zero_noise = not np.any(root)
    for ss, m in zip(streams, sizes):
        rng = np.random.default_rng(ss)
        eta = np.zeros((m, 2))
        want = {int(k): [i for i, r in enumerate(report_idx) if r == k] for k in set(report_idx.tolist())}
        for k in range(steps + 1):
            if k in want:
                outer = eta[:, :, None] * eta[:, None, :]
                for i in want[k]:
                    prods[i] += outer.sum(axis=0)
                    prods_sq[i] += (outer**2).sum(axis=0)
            if k == steps:
                break
            Ak = A(step_times[k])
            drift = eta @ Ak.T
            if zero_noise:
                eta = eta + h * drift
            else:
                eta = eta + h * drift + sqh * rng.standard_normal((m, 2)) @ root.T
    mean = prods / samples
    var = np.maximum(prods_sq / samples - mean**2, 0.0)
    se = np.sqrt(var / samples)
    return {"times": t_grid, "covariance": mean, "stderr": se, "samples": samples, "dt": h}


def constant_matrix(A) -> Callable[[float], np.ndarray]:
    M = np.asarray(A, dtype=float)
    return lambda _t: M


# ---------------------------------------------------------------------------
# escape times and the crossover sweep
# ---------------------------------------------------------------------------

def escape_time(profile: LanczosProfile, alpha: Optional[float] = None) -> float:
    """Schematic escape time ln(n_star) / (2 alpha) of a crossover profile."""
    if profile.kind != "crossover":
        raise ValueError("escape time is defined for crossover profiles")
    a = profile.params["alpha"] if alpha is None else alpha
    return math.log(profile.params["n_star"]) / (2.0 * a)


def empirical_escape_time(saddle: PhaseTrajectory, n_star: float) -> Optional[float]:
    """First time the saddle reaches n_star (linear interpolation), or None."""
    n = saddle.n_path
    hit = np.flatnonzero(n >= n_star)
    if hit.size == 0:
        return None
    i = int(hit[0])
    if i == 0:
        return float(saddle.times[0])
    t0, t1 = saddle.times[i - 1], saddle.times[i]
    n0, n1 = np.log(n[i - 1]), np.log(n[i])
    return float(t0 + (math.log(n_star) - n0) * (t1 - t0) / (n1 - n0))


def saddle_escape_time(profile: LanczosProfile, n_star: float, n0: float = 1.0,
                       p0: float = GROWING, t_max: float = 1e5) -> Optional[float]:
    """First time the saddle from (n0, p0) reaches n_star, or None before t_max."""
    if n0 >= n_star:
        return 0.0
    hit = lambda _t, y: y[0] - n_star  # noqa: E731
    hit.terminal = True
    hit.direction = 1
    sol = solve_ivp(hamilton_rhs(profile), (0.0, t_max), [n0, p0], method="DOP853",
                    rtol=1e-12, atol=1e-12, events=hit)
    return float(sol.t_events[0][0]) if len(sol.t_events[0]) else None


@dataclass
class SweepPoint:
    h: float
    n_star: float
    t_star: float
    t_star_empirical: Optional[float]
    chi_hat: float
    relative_fluctuation: float
    mean_rate: float
    kappa2_ref: float
    n_ref: float
    quantum: Optional[dict] = None
    flags: list = field(default_factory=list)


@dataclass
class SweepResult:
    points: list
    t_ref: float
    alpha: float
    gamma: float
    c: float
    noise: np.ndarray
    trend: dict
    metadata: dict


def linear_fit(x, y) -> dict:
    """Least-squares line with coefficient of determination."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}


def susceptibility_sweep(
    h_grid: Sequence[float],
    alpha: float = 1.0,
    gamma: float = 1.0,
    c: float = 1.0,
    D="identity",
    t_ref: Optional[float] = None,
    n0: float = 1.0,
    settle: float = 5.0,
    rate_window: float = 1.0,
    samples_per_unit: int = 200,
    quantum_sites: int = 0,
    quantum_tmax: float = 6.0,
) -> SweepResult:
    """Crossover sweep: fluctuation proxy and mean growth rate per h.

    For each h the profile is crossover(alpha, gamma, n_star = c/h).  The
    saddle starts at (n0, -pi/2).  The reference time ``t_ref`` defaults to
    the largest empirical escape time plus ``settle / alpha``, so every
    point is past its escape.  Reported per point:

    * ``chi_hat`` = kappa_2(t_ref) / t_ref, kappa_2 = Cov_nn of the
      linearized theory (fixed-reference-time proxy);
    * ``relative_fluctuation`` = kappa_2(t_ref) / n(t_ref)^2;
    * ``mean_rate``: slope of ln n over the last ``rate_window`` time units
      ending ``settle / alpha`` after that point's own escape.

    With ``quantum_sites > 0`` the chain is also evolved on that many sites up
    to ``quantum_tmax``; the window is cut where boundary leakage appears.
    """
    h = np.asarray(h_grid, dtype=float)
    if np.any(h <= 0):
        raise ValueError("h values must be positive")
    if np.any(np.diff(h) >= 0):
        raise ValueError("h grid must be strictly decreasing")
    D = noise_kernel(D)
    profiles = [LanczosProfile.crossover(alpha, gamma, c / hh) for hh in h]

    escapes = [saddle_escape_time(prof, prof.params["n_star"], n0) for prof in profiles]
    if any(e is None for e in escapes):
        raise RuntimeError("saddle did not reach n_star for every h")
    if t_ref is None:
        t_ref = max(escapes) + settle / alpha

    points = []
    for hh, prof, te in zip(h, profiles, escapes):
        n_star = prof.params["n_star"]
        grid = np.linspace(0.0, t_ref, int(samples_per_unit * t_ref) + 1)
        saddle = integrate_hamilton(prof, n0, GROWING, grid)
        flags = list(saddle.flags)
        fr = covariance_evolution(prof, saddle, D)
        flags += fr.flags
        k2 = float(fr.variance_n[-1])
        n_ref = float(saddle.n_path[-1])
        t_end = min((te if te is not None else t_ref) + settle / alpha, t_ref)
        from .semiclassics import lyapunov_rate

        rate, _ = lyapunov_rate(saddle, (t_end - rate_window, t_end))
        q = None
        if quantum_sites:
            q = _quantum_mean_rate(prof, quantum_sites, quantum_tmax)
        points.append(SweepPoint(
            h=float(hh), n_star=n_star, t_star=escape_time(prof), t_star_empirical=te,
            chi_hat=k2 / t_ref, relative_fluctuation=k2 / n_ref**2, mean_rate=rate,
            kappa2_ref=k2, n_ref=n_ref, quantum=q, flags=flags,
        ))

    ln_nstar = np.log([p.n_star for p in points])
    trend = {
        "chi_hat_vs_ln_nstar": linear_fit(ln_nstar, [p.chi_hat for p in points]),
        "relative_vs_ln_nstar": linear_fit(ln_nstar, [p.relative_fluctuation for p in points]),
    }
    te_list = [p.t_star_empirical for p in points]
    if all(v is not None for v in te_list):
        trend["relative_vs_empirical_tstar"] = linear_fit(te_list, [p.relative_fluctuation for p in points])
    meta = {
        "chi_hat_estimator": "kappa2(t_ref)/t_ref at a common reference time past every empirical escape",
        "t_ref": t_ref,
        "saddle_start": {"n0": n0, "p0": GROWING},
        "noise_kernel": D.tolist(),
    }
    return SweepResult(points, t_ref, alpha, gamma, c, D, trend, meta)


def _quantum_mean_rate(profile: LanczosProfile, sites: int, tmax: float, tol: float = 1e-10) -> dict:
    from .chain import complexity, complexity_rate, evolve_chain

    grid = np.linspace(0.0, tmax, int(20 * tmax) + 1)
    traj = evolve_chain(profile, grid, N=sites, tol=tol)
    ok = traj.boundary_leakage < tol
    last = int(np.flatnonzero(ok)[-1]) if ok.any() else 0
    K = complexity(traj)[: last + 1]
    rate = complexity_rate(traj)[: last + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_rate = np.where(K > 0, rate / K, np.nan)
    return {
        "sites": sites,
        "t_valid": float(grid[last]),
        "K_final": float(K[-1]),
        "dlnK_dt_final": float(log_rate[-1]) if last > 0 else float("nan"),
    }
