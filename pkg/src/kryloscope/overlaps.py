"""Overlaps of the generating states |z) = exp(z L+)|K0>.

(z|z) = sum_n w^n / (n!)^2 prod_{m=1}^n b_m^2 with w = |z|^2, so the overlap
and its Krylov moments depend only on the Lanczos coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .profiles import LanczosProfile

MAX_TERMS = 1_000_000
_CHUNK = 4096


class OverlapConvergenceError(RuntimeError):
    def __init__(self, message, partial_sum):
        super().__init__(message)
        self.partial_sum = partial_sum


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


@dataclass
class OverlapSeries:
    modulus_sq: float
    terms: np.ndarray  # partial sums; inf past double range, see log_terms
    truncation_n: int
    tail_estimate: float
    log_terms: np.ndarray

    @property
    def value(self) -> float:
        return float(self.terms[-1])


def _log_terms(profile: LanczosProfile, w: float, tol: float, max_terms: int) -> tuple:
    """Log series terms t_0..t_n up to a converged cutoff; returns (logs, tail)."""
    logs = [np.zeros(1)]
    finite = profile.chain_length
    log_w = math.log(w)
    last = 0.0  # log of current term
    n = 0
    running = 0.0  # log of partial sum
    while True:
        top = n + _CHUNK
        if finite is not None:
            top = min(top, finite - 1)
        if max_terms is not None:
            top = min(top, max_terms - 1)
        if top <= n:
            if finite is not None and top >= finite - 1:
                return np.concatenate(logs), 0.0
            raise OverlapConvergenceError(
                f"overlap series not converged within {max_terms} terms", _safe_exp(running)
            )
        m = np.arange(n + 1, top + 1, dtype=float)
        b = profile.b(m) if profile.kind != "tabulated" else profile.values[n:top]
        with np.errstate(divide="ignore"):
            inc = log_w + 2.0 * np.log(b) - 2.0 * np.log(m)
        chunk = last + np.cumsum(inc)
        logs.append(chunk)
        last = float(chunk[-1])
        running = float(logsumexp(np.concatenate(logs)))
        n = top
        if finite is not None and n >= finite - 1:
            return np.concatenate(logs), 0.0
        # terms must be decreasing at the cut and the geometric tail bound small
        ratio = float(np.exp(inc[-1]))
        if ratio < 1.0:
            tail = math.exp(last - running) * ratio / (1.0 - ratio)
            if tail < tol:
                return np.concatenate(logs), tail


def overlap_series(profile: LanczosProfile, w: float, tol: float = 1e-16, max_terms: int = MAX_TERMS) -> OverlapSeries:
    """Sum the overlap series for w = |z|^2 until the relative tail is below ``tol``."""
    if w < 0 or not math.isfinite(w):
        raise ValueError("w must be a finite non-negative number")
    if w == 0:
        return OverlapSeries(0.0, np.ones(1), 0, 0.0, np.zeros(1))
    logs, tail = _log_terms(profile, float(w), tol, max_terms)
    shift = float(np.max(logs))
    with np.errstate(over="ignore"):
        partial = np.cumsum(np.exp(logs - shift)) * math.exp(min(shift, 709.0))
    if shift > 709.0:
        with np.errstate(over="ignore"):
            partial = np.exp(np.logaddexp.accumulate(logs))
    return OverlapSeries(float(w), partial, len(logs) - 1, tail, logs)


def overlap(profile: LanczosProfile, w: float, tol: float = 1e-16) -> float:
    return overlap_series(profile, w, tol).value


def overlap_moment(profile: LanczosProfile, w: float, m: int, tol: float = 1e-16) -> float:
    """Normalized Krylov moment sum_n n^m c_n / sum_n c_n of the |z) state."""
    if m < 0:
        raise ValueError("moment order must be non-negative")
    if m == 0:
        return 1.0
    if w == 0:
        return 0.0
    s = overlap_series(profile, w, tol)
    logs = s.log_terms
    n = np.arange(len(logs), dtype=float)
    weights = np.exp(logs - logsumexp(logs))
    return float(weights @ n**m)


def log_overlap(profile: LanczosProfile, w: float, tol: float = 1e-16) -> float:
    """ln (z|z), safe for overlaps beyond double range."""
    if w == 0:
        return 0.0
    return float(logsumexp(overlap_series(profile, w, tol).log_terms))
