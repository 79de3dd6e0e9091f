"""Closed forms for the two exactly solvable chains.

* ``poisson(g)``: b_n = g sqrt(n); the spread distribution is Poisson with
  mean g^2 t^2.
* ``su11(alpha, k)``: b_n = alpha sqrt(n (n - 1 + 2k)); negative-binomial
  spread distribution, K(t) = 2k sinh^2(alpha t).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .profiles import LanczosProfile


@dataclass(frozen=True)
class ClosedFormModel:
    kind: str
    g: float = 1.0
    alpha: float = 1.0
    k: float = 0.5

    def __post_init__(self):
        if self.kind not in ("poisson", "su11"):
            raise ValueError(f"unknown closed-form model {self.kind!r}")
        if self.kind == "poisson" and self.g <= 0:
            raise ValueError("g must be positive")
        if self.kind == "su11" and (self.alpha <= 0 or self.k <= 0):
            raise ValueError("alpha and k must be positive")

    @classmethod
    def poisson(cls, g: float = 1.0) -> "ClosedFormModel":
        return cls("poisson", g=g)

    @classmethod
    def su11(cls, alpha: float = 1.0, k: float = 0.5) -> "ClosedFormModel":
        return cls("su11", alpha=alpha, k=k)

    def profile(self) -> LanczosProfile:
        if self.kind == "poisson":
            return LanczosProfile.sqrt_hopping(self.g)
        return LanczosProfile.su11(self.alpha, self.k)

    def tau_sq(self, t):
        """|tau|^2 = tanh^2(alpha t) (su11 only)."""
        return np.tanh(self.alpha * np.asarray(t, dtype=float)) ** 2

    @property
    def growth_rate(self) -> float:
        """Late-time d ln K/dt: 2 alpha for su11, 0 for the Poisson chain."""
        return 2.0 * self.alpha if self.kind == "su11" else 0.0


def exact_log_P(model: ClosedFormModel, n, t):
    n = np.asarray(n, dtype=float)
    t = float(t)
    if model.kind == "poisson":
        lam = (model.g * t) ** 2
        if lam == 0.0:
            return np.where(n == 0, 0.0, -np.inf)
        return -lam + n * np.log(lam) - gammaln(n + 1)
    x = model.alpha * t
    two_k = 2.0 * model.k
    log_binom = gammaln(n + two_k) - gammaln(n + 1) - gammaln(two_k)
    if x == 0.0:
        return np.where(n == 0, 0.0, -np.inf)
    # log cosh without overflow
    log_cosh = x + np.log1p(np.exp(-2 * x)) - np.log(2.0)
    return log_binom + 2 * n * np.log(np.tanh(x)) - 2 * two_k * log_cosh


def exact_P(model: ClosedFormModel, n, t):
    """Spread distribution P(n, t), evaluated in the log domain."""
    return np.exp(exact_log_P(model, n, t))


def exact_amplitude(model: ClosedFormModel, n, t):
    """Krylov amplitudes phi_n(t) including their phases (-i)^n."""
    n = np.asarray(n)
    return np.sqrt(exact_P(model, n, t)) * (-1j) ** n


def exact_K(model: ClosedFormModel, t):
    t = np.asarray(t, dtype=float)
    if model.kind == "poisson":
        return (model.g * t) ** 2
    return 2.0 * model.k * np.sinh(model.alpha * t) ** 2


def exact_variance(model: ClosedFormModel, t):
    """Second cumulant; for su11 it follows from differentiating ln Z twice."""
    t = np.asarray(t, dtype=float)
    if model.kind == "poisson":
        return (model.g * t) ** 2
    s = np.sinh(model.alpha * t) ** 2
    return 2.0 * model.k * s * (1.0 + s)


def late_time_K(model: ClosedFormModel, t):
    """Leading late-time term (k/2) e^{2 alpha t} of the su11 complexity."""
    if model.kind != "su11":
        raise ValueError("late-time exponential form only applies to su11")
    return 0.5 * model.k * np.exp(2.0 * model.alpha * np.asarray(t, dtype=float))


def exact_Z(model: ClosedFormModel, chi, t):
    """Counting generating function <exp(i chi n(t))>."""
    chi = np.asarray(chi, dtype=float)
    t = float(t)
    if model.kind == "poisson":
        return np.exp((model.g * t) ** 2 * (np.exp(1j * chi) - 1.0))
    w = np.tanh(model.alpha * t) ** 2
    ratio = (1.0 - w) / (1.0 - np.exp(1j * chi) * w)
    # exact normalization at chi = 0 instead of a rounded quotient
    return np.where(chi == 0.0, 1.0 + 0j, ratio ** (2.0 * model.k))
