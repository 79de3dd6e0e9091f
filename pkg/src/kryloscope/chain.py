"""Exact evolution of the Krylov-chain amplitudes.

Solves  i dphi_n/dt = b_{n+1} phi_{n+1} + b_n phi_{n-1} (+ a_n phi_n)
with a hard wall at n = 0 and a truncation wall at n = N, starting from the
state localized at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.integrate import solve_ivp

from .profiles import LanczosProfile

TAIL_WINDOW = 32
AUTO_START = 256
AUTO_LIMIT = 1 << 20


@dataclass(eq=False)
class ChainTrajectory:
    times: np.ndarray
    amplitudes: np.ndarray  # (n_times, N) complex
    truncation_N: int
    truncated: bool
    boundary_leakage: np.ndarray
    norm_drift: np.ndarray
    profile: Optional[LanczosProfile] = None
    tol: float = 1e-10
    norm_tol: float = 1e-9
    flags: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.flags

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.truncation_N)

    def index_of(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if not np.isclose(self.times[idx], t, rtol=1e-12, atol=1e-12):
            raise ValueError(f"t={t} is not on the reporting grid")
        return idx


def _rhs_factory(bonds: np.ndarray, diag: Optional[np.ndarray], N: int):
    c = np.zeros(N - 1)
    c[: len(bonds)] = bonds

    def rhs(t, phi):
        out = np.zeros_like(phi)
        out[:-1] += c * phi[1:]
        out[1:] += c * phi[:-1]
        if diag is not None:
            out += diag * phi
        return -1j * out

    return rhs


def propagate(
    bonds: np.ndarray,
    phi0: np.ndarray,
    t_grid: np.ndarray,
    diag: Optional[np.ndarray] = None,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> np.ndarray:
    """Integrate the chain equation over a monotone grid (either direction).

    Each reporting interval is integrated separately so that every reported
    state is an actual step endpoint, not an interpolant.
    """
    phi = np.asarray(phi0, dtype=complex).copy()
    N = len(phi)
    rhs = _rhs_factory(np.asarray(bonds, dtype=float), diag, N)
    t_grid = np.asarray(t_grid, dtype=float)
    out = np.empty((len(t_grid), N), dtype=complex)
    out[0] = phi
    for i in range(1, len(t_grid)):
        t0, t1 = t_grid[i - 1], t_grid[i]
        if t1 == t0:
            out[i] = phi
            continue
        sol = solve_ivp(rhs, (t0, t1), phi, method="RK45", rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(f"chain integration failed: {sol.message}")
        phi = sol.y[:, -1]
        out[i] = phi
    return out


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float).ravel()
    if t.size == 0 or t[0] != 0.0:
        raise ValueError("time grid must start at 0")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return t


def _run(profile, t, N, tol, norm_tol, rtol, atol, tail_window):
    bonds = profile.bonds(N)
    if not np.all(np.isfinite(bonds)):
        raise ValueError("non-finite Lanczos coefficients")
    natural = profile.chain_length
    truncated = natural is None or N < natural
    if not truncated:
        N = natural
    phi0 = np.zeros(N, dtype=complex)
    phi0[0] = 1.0
    amps = propagate(bonds, phi0, t, diag=profile.diagonal_terms(N), rtol=rtol, atol=atol)
    P = np.abs(amps) ** 2
    drift = np.abs(1.0 - P.sum(axis=1))
    if truncated:
        w = min(tail_window, max(1, N // 2))
        leak = P[:, N - w :].sum(axis=1)
    else:
        leak = np.zeros(len(t))
    traj = ChainTrajectory(t, amps, N, truncated, leak, drift, profile, tol, norm_tol)
    if np.any(leak >= tol):
        traj.flags.append(f"boundary_leakage {leak.max():.3e} >= tol {tol:.1e} at N={N}")
    if np.any(drift >= norm_tol):
        traj.flags.append(f"norm_drift {drift.max():.3e} >= {norm_tol:.1e}")
    return traj


def evolve_chain(
    profile: LanczosProfile,
    t_grid,
    N: Union[int, str] = "auto",
    tol: float = 1e-10,
    norm_tol: float = 1e-9,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    tail_window: int = TAIL_WINDOW,
    n_start: int = AUTO_START,
    n_limit: int = AUTO_LIMIT,
) -> ChainTrajectory:
    """Evolve the origin-localized state along the chain of ``profile``.

    ``N="auto"`` doubles the truncation from ``n_start`` until the final-time
    mass in the last ``tail_window`` sites is below ``tol``.  A fixed ``N``
    that leaks is returned with a flag rather than raising.
    """
    if tol <= 0 or norm_tol <= 0:
        raise ValueError("tolerances must be positive")
    t = _check_grid(t_grid)
    if N != "auto":
        N = int(N)
        if N < 2:
            raise ValueError("need at least two sites")
        return _run(profile, t, N, tol, norm_tol, rtol, atol, tail_window)
    N = n_start
    while True:
        traj = _run(profile, t, N, tol, norm_tol, rtol, atol, tail_window)
        if not traj.truncated or traj.boundary_leakage[-1] < tol or N >= n_limit:
            return traj
        N *= 2


def complexity(traj: ChainTrajectory) -> np.ndarray:
    """K(t) = sum_n n |phi_n(t)|^2 on the reporting grid."""
    return traj.probabilities @ traj.sites.astype(float)


def complexity_rate(traj: ChainTrajectory) -> np.ndarray:
    """dK/dt from the probability current, -2 sum_n b_{n+1} Im(conj(phi_n) phi_{n+1})."""
    N = traj.truncation_N
    c = np.zeros(N - 1)
    bonds = traj.profile.bonds(N)
    c[: len(bonds)] = bonds
    phi = traj.amplitudes
    return -2.0 * np.imag(np.conj(phi[:, :-1]) * phi[:, 1:]) @ c


def distribution(traj: ChainTrajectory, t: float) -> np.ndarray:
    return traj.probabilities[traj.index_of(t)]


def moment(traj: ChainTrajectory, t: float, m: int) -> float:
    P = distribution(traj, t)
    return float(P @ traj.sites.astype(float) ** m)


def variance(traj: ChainTrajectory, t: float) -> float:
    P = distribution(traj, t)
    n = traj.sites.astype(float)
    mean = P @ n
    return float(max(P @ (n - mean) ** 2, 0.0))


def variances(traj: ChainTrajectory) -> np.ndarray:
    P = traj.probabilities
    n = traj.sites.astype(float)
    mean = P @ n
    return np.maximum(np.einsum("tn,tn->t", P, (n[None, :] - mean[:, None]) ** 2), 0.0)


def trajectory_table(traj: ChainTrajectory):
    """Rows of (t, K, variance, norm_drift, boundary_leakage)."""
    K = complexity(traj)
    var = variances(traj)
    header = ["t", "K", "variance", "norm_drift", "boundary_leakage"]
    rows = zip(traj.times, K, var, traj.norm_drift, traj.boundary_leakage)
    return header, list(rows)
