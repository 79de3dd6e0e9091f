"""Full counting statistics of the Krylov position.

Z(chi, t) = <exp(i chi n(t))> is evaluated from a chain trajectory, together
with cumulants, the finite-time free energy ln Z / t and a large-deviation
rate function obtained from real tilting exp(s n).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .chain import ChainTrajectory

MAX_CUMULANT = 6
ZERO_GUARD = 1e-10


@dataclass(eq=False)
class CountingReport:
    chi_grid: np.ndarray
    times: np.ndarray
    Z_values: np.ndarray  # (n_times, n_chi)
    cumulants: np.ndarray  # (n_times, M)
    psi_t: np.ndarray  # (n_times, n_chi); row at t=0 is nan
    trajectory: ChainTrajectory
    tilted_rate: Optional["RateFunction"] = None


def default_chi_grid(points: int) -> np.ndarray:
    """``points`` evenly spaced counting fields in (-pi, pi]."""
    return -np.pi + 2 * np.pi * np.arange(1, points + 1) / points


def _phases(chi, N):
    return np.exp(1j * np.outer(np.arange(N), np.asarray(chi, dtype=float)))


def _z_from_P(P, chi):
    """sum_n P e^{i chi n} / sum_n P; exactly 1 at chi = 0."""
    chi = np.asarray(chi, dtype=float)
    norm = P.sum(axis=-1, keepdims=True)
    Z = (P @ _phases(chi, P.shape[-1])) / norm
    Z[..., chi == 0.0] = 1.0
    return Z


def counting_function(traj: ChainTrajectory, chi_grid, M: int = 4) -> CountingReport:
    """Z(chi, t) = sum_n P(n, t) exp(i chi n) by direct summation."""
    chi = np.atleast_1d(np.asarray(chi_grid, dtype=float))
    Z = _z_from_P(traj.probabilities, chi)
    kappa = np.array([cumulants_from_distribution(p, M) for p in traj.probabilities])
    psi = _finite_time_free_energy(traj.times, Z)
    return CountingReport(chi, traj.times, Z, kappa, psi, traj)


def two_branch_counting(traj: ChainTrajectory, chi_grid) -> np.ndarray:
    """Z(chi, t) from the symmetric two-branch source insertion.

    The counting field enters as exp(+i chi n/2) after the forward evolution
    and exp(-i chi n/2) on the backward branch, so that
    Z = <psi_-(t)|psi_+(t)> with psi_pm = exp(+-i chi n/2) phi(t), divided
    by the source-free value <phi(t)|phi(t)>.
    """
    chi = np.atleast_1d(np.asarray(chi_grid, dtype=float))
    half = np.exp(0.5j * np.outer(chi, np.arange(traj.truncation_N)))  # (n_chi, N)
    out = np.empty((len(traj.times), len(chi)), dtype=complex)
    for i, phi in enumerate(traj.amplitudes):
        forward = half * phi[None, :]
        backward = np.conj(half) * phi[None, :]
        out[i] = np.einsum("cn,cn->c", np.conj(backward), forward) / np.vdot(phi, phi).real
    out[:, chi == 0.0] = 1.0
    return out


def cumulants_from_distribution(P: np.ndarray, M: int) -> np.ndarray:
    """kappa_1..kappa_M of a distribution on n = 0, 1, 2, ...

    Uses central moments and the moment-cumulant recursion, so large means
    do not cancel catastrophically.
    """
    if not 1 <= M <= MAX_CUMULANT:
        raise ValueError(f"cumulant order must be in 1..{MAX_CUMULANT}")
    P = np.asarray(P, dtype=float)
    n = np.arange(len(P), dtype=float)
    total = P.sum()
    mean = (P @ n) / total
    d = n - mean
    mu = [1.0, 0.0] + [float(P @ d**m) / total for m in range(2, M + 1)]
    kappa = [0.0] * (M + 1)
    for m in range(2, M + 1):
        kappa[m] = mu[m] - sum(comb(m - 1, j - 1) * kappa[j] * mu[m - j] for j in range(2, m))
    kappa[1] = mean
    return np.array(kappa[1:])


def cumulants(report_or_traj, t: float, M: int = 4) -> np.ndarray:
    traj = report_or_traj.trajectory if isinstance(report_or_traj, CountingReport) else report_or_traj
    return cumulants_from_distribution(traj.probabilities[traj.index_of(t)], M)


def _finite_time_free_energy(times, Z):
    log_abs = np.log(np.maximum(np.abs(Z), 1e-300))
    phase = np.unwrap(np.angle(Z), axis=0)
    psi = np.full(Z.shape, np.nan + 0j)
    pos = times > 0
    psi[pos] = (log_abs[pos] + 1j * phase[pos]) / times[pos, None]
    return psi


@dataclass
class FreeEnergyEstimate:
    chi: float
    times: np.ndarray
    psi_t: np.ndarray
    flagged: np.ndarray
    window: tuple
    mean: complex
    drift: complex  # fitted d psi_t / dt over the window
    stationary: bool


def free_energy_estimate(
    source,
    chi: float,
    window: Optional[tuple] = None,
    stationary_rtol: float = 1e-2,
    stationary_atol: float = 1e-8,
) -> FreeEnergyEstimate:
    """Finite-time estimator psi_t(chi) = ln Z(chi, t) / t and its drift.

    ``source`` is a CountingReport or ChainTrajectory.  The phase of Z is
    continued along t (nearest branch); times where |Z| < 1e-10 are flagged
    because the branch is ambiguous there.  ``window`` defaults to the final
    third of the positive times.  No convergence is asserted: ``stationary``
    only says whether the total change across the window is small.
    """
    traj = source.trajectory if isinstance(source, CountingReport) else source
    Z = _z_from_P(traj.probabilities, np.array([chi]))[:, 0]
    times = traj.times
    psi = _finite_time_free_energy(times, Z[:, None])[:, 0]
    flagged = np.abs(Z) < ZERO_GUARD
    pos = np.flatnonzero(times > 0)
    if window is None:
        sel = pos[len(pos) - max(3, len(pos) // 3):]
    else:
        sel = pos[(times[pos] >= window[0]) & (times[pos] <= window[1])]
    if len(sel) < 3:
        raise ValueError("free-energy window needs at least 3 positive times")
    tw = times[sel]
    slope_re = np.polyfit(tw, psi[sel].real, 1)[0]
    slope_im = np.polyfit(tw, psi[sel].imag, 1)[0]
    drift = complex(slope_re, slope_im)
    mean = complex(np.mean(psi[sel]))
    change = abs(drift) * (tw[-1] - tw[0])
    stationary = bool(change <= max(stationary_atol, stationary_rtol * abs(mean)) and not flagged[sel].any())
    return FreeEnergyEstimate(chi, times, psi, flagged, (tw[0], tw[-1]), mean, drift, stationary)


# ---------------------------------------------------------------------------
# large deviations
# ---------------------------------------------------------------------------

@dataclass
class RateFunction:
    t: float
    s_grid: np.ndarray
    scgf: np.ndarray
    v_grid: np.ndarray
    phi: np.ndarray  # +inf where the supremum runs off the s grid
    unbounded: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))

    @property
    def minimizer(self) -> float:
        """v where the sampled rate function is smallest."""
        return float(self.v_grid[np.argmin(self.phi)])


def legendre_fenchel(x: np.ndarray, f: np.ndarray, y: np.ndarray, rtol: float = 1e-12):
    """Discrete transform f*(y) = max_x [x y - f(x)] over the sample points.

    Returns (values, unbounded) where ``unbounded`` marks y whose maximiser
    sits on a grid edge with the objective still increasing outward; those
    entries are set to +inf.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    obj = np.outer(y, x) - f[None, :]
    idx = np.argmax(obj, axis=1)
    vals = obj[np.arange(len(y)), idx]
    scale = rtol * np.maximum(1.0, np.abs(vals))
    unbounded = np.zeros(len(y), dtype=bool)
    if len(x) > 1:
        lo = (idx == 0) & (obj[:, 0] > obj[:, 1] + scale)
        hi = (idx == len(x) - 1) & (obj[:, -1] > obj[:, -2] + scale)
        unbounded = lo | hi
    vals = np.where(unbounded, np.inf, vals)
    return vals, unbounded


def scaled_cgf(P: np.ndarray, t: float, s_grid) -> np.ndarray:
    """lambda(s) = (1/t) ln sum_n P(n) exp(s n), log-domain."""
    if t <= 0:
        raise ValueError("scaled CGF needs t > 0")
    P = np.clip(np.asarray(P, dtype=float), 0.0, None)
    P = P / P.sum()
    n = np.arange(len(P), dtype=float)
    with np.errstate(divide="ignore"):
        logP = np.log(P)
    s = np.atleast_1d(np.asarray(s_grid, dtype=float))
    return logsumexp(logP[None, :] + np.outer(s, n), axis=1) / t


def rate_function(traj: ChainTrajectory, t: float, s_grid: Sequence[float], v_grid=None) -> RateFunction:
    """Rate function Phi(v) = sup_s [s v - lambda(s)] from real tilting at time t."""
    s = np.sort(np.asarray(s_grid, dtype=float))
    P = traj.probabilities[traj.index_of(t)]
    lam = scaled_cgf(P, t, s)
    if v_grid is None:
        slopes = np.gradient(lam, s)
        v_grid = np.linspace(slopes.min(), slopes.max(), len(s))
    v = np.asarray(v_grid, dtype=float)
    phi, unb = legendre_fenchel(s, lam, v)
    return RateFunction(t, s, lam, v, phi, unb)


def attach_rate_function(report: CountingReport, t: float, s_grid) -> CountingReport:
    report.tilted_rate = rate_function(report.trajectory, t, s_grid)
    return report
