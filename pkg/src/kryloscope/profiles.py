"""Lanczos-coefficient profiles.

A profile is the sequence of hopping amplitudes b_1, b_2, ... of the Krylov
chain, either given by a closed-form family or tabulated (for instance from
tridiagonalizing an explicit Liouvillian, see :func:`lanczos_tridiagonalize`).

Indexing convention: ``b(n)`` couples chain sites n-1 and n, and b(0) = 0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

PROFILE_HEADER = "# kryloscope-profile v1"

ANALYTIC_KINDS = {
    "sqrt_hopping": ("g",),
    "su11": ("alpha", "k"),
    "linear_shift": ("alpha", "gamma"),
    "log_drift": ("alpha", "beta"),
    "marginal": ("alpha", "epsilon"),
    "power_law": ("amplitude", "gamma_exp"),
    "crossover": ("alpha", "gamma", "n_star"),
}
KINDS = tuple(ANALYTIC_KINDS) + ("tabulated",)


class ProfileDomainError(ValueError):
    """Raised when a profile is queried outside its domain."""


class ProfileFormatError(ValueError):
    """Malformed profile file; ``line`` is the 1-based offending line."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


@dataclass(frozen=True, eq=False)
class LanczosProfile:
    """A Lanczos-coefficient sequence b(n), n >= 1.

    Use the named constructors (``LanczosProfile.su11(alpha=1, k=0.5)`` and so
    on) rather than building the parameter dict by hand.
    """

    kind: str
    params: dict = field(default_factory=dict)
    values: Optional[np.ndarray] = None
    diagonal: Optional[np.ndarray] = None
    n_max: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "tabulated":
            if self.values is None:
                raise ValueError("tabulated profile needs values")
            vals = np.asarray(self.values, dtype=float).ravel()
            if not np.all(np.isfinite(vals)):
                raise ValueError("tabulated Lanczos coefficients must be finite")
            if np.any(vals < 0):
                raise ValueError("tabulated Lanczos coefficients must be non-negative")
            object.__setattr__(self, "values", vals)
            if self.n_max is None:
                object.__setattr__(self, "n_max", len(vals))
        else:
            missing = [p for p in ANALYTIC_KINDS[self.kind] if p not in self.params]
            if missing:
                raise ValueError(f"{self.kind} profile missing parameters {missing}")
            object.__setattr__(
                self, "params", {k: float(v) for k, v in self.params.items()}
            )
            self._check_params()
        if self.diagonal is not None:
            object.__setattr__(self, "diagonal", np.asarray(self.diagonal, dtype=float))

    def _check_params(self):
        p = self.params
        if self.kind == "sqrt_hopping" and p["g"] <= 0:
            raise ValueError("g must be positive")
        if self.kind == "su11" and (p["alpha"] <= 0 or p["k"] <= 0):
            raise ValueError("su11 needs alpha > 0 and k > 0")
        if self.kind == "crossover" and p["n_star"] <= 0:
            raise ValueError("n_star must be positive")
        if self.kind == "power_law" and p["amplitude"] <= 0:
            raise ValueError("amplitude must be positive")

    # -- named constructors ------------------------------------------------
    @classmethod
    def sqrt_hopping(cls, g: float = 1.0) -> "LanczosProfile":
        return cls("sqrt_hopping", {"g": g})

    @classmethod
    def su11(cls, alpha: float = 1.0, k: float = 0.5) -> "LanczosProfile":
        return cls("su11", {"alpha": alpha, "k": k})

    @classmethod
    def linear_shift(cls, alpha: float = 1.0, gamma: float = 0.0) -> "LanczosProfile":
        return cls("linear_shift", {"alpha": alpha, "gamma": gamma})

    @classmethod
    def log_drift(cls, alpha: float = 1.0, beta: float = 0.0) -> "LanczosProfile":
        return cls("log_drift", {"alpha": alpha, "beta": beta})

    @classmethod
    def marginal(cls, alpha: float = 1.0, epsilon: float = 0.0) -> "LanczosProfile":
        return cls("marginal", {"alpha": alpha, "epsilon": epsilon})

    @classmethod
    def power_law(cls, amplitude: float = 1.0, gamma_exp: float = 0.5) -> "LanczosProfile":
        return cls("power_law", {"amplitude": amplitude, "gamma_exp": gamma_exp})

    @classmethod
    def crossover(cls, alpha: float = 1.0, gamma: float = 0.0, n_star: float = 1.0) -> "LanczosProfile":
        return cls("crossover", {"alpha": alpha, "gamma": gamma, "n_star": n_star})

    @classmethod
    def tabulated(cls, values: Sequence[float], diagonal: Optional[Sequence[float]] = None) -> "LanczosProfile":
        return cls("tabulated", values=np.asarray(values, dtype=float), diagonal=diagonal)

    # -- properties --------------------------------------------------------
    @property
    def is_analytic(self) -> bool:
        return self.kind != "tabulated"

    @property
    def chain_length(self) -> Optional[int]:
        """Number of sites of a naturally finite chain (tabulated only)."""
        if self.kind == "tabulated":
            return len(self.values) + 1
        return None

    def describe(self) -> str:
        if self.kind == "tabulated":
            return f"tabulated(m={len(self.values)})"
        args = ",".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.kind}:{args}"

    # -- continuous-n evaluation ------------------------------------------
    def b(self, n):
        """b at real n (analytic formula, or monotone cubic interpolation)."""
        n = np.asarray(n, dtype=float)
        if self.kind == "tabulated":
            return self._interp()(n)
        return self._analytic(n, 0)

    def db(self, n):
        n = np.asarray(n, dtype=float)
        if self.kind == "tabulated":
            return self._interp().derivative(1)(n)
        return self._analytic(n, 1)

    def d2b(self, n):
        n = np.asarray(n, dtype=float)
        if self.kind == "tabulated":
            return self._interp().derivative(2)(n)
        return self._analytic(n, 2)

    def _interp(self) -> PchipInterpolator:
        cached = self.__dict__.get("_pchip")
        if cached is None:
            nodes = np.arange(len(self.values) + 1, dtype=float)
            cached = PchipInterpolator(nodes, np.concatenate([[0.0], self.values]))
            object.__setattr__(self, "_pchip", cached)
        return cached

    def _analytic(self, n: np.ndarray, order: int):
        p = self.params
        kind = self.kind
        if kind == "sqrt_hopping":
            g = p["g"]
            return (g * np.sqrt(n), 0.5 * g / np.sqrt(n), -0.25 * g * n ** -1.5)[order]
        if kind == "su11":
            a, c = p["alpha"], 2.0 * p["k"] - 1.0
            q = np.maximum(n * (n + c), 0.0)
            sq = np.sqrt(q)
            if order == 0:
                return a * sq
            with np.errstate(divide="ignore", invalid="ignore"):
                if order == 1:
                    return a * (2.0 * n + c) / (2.0 * sq)
                return -a * c * c / (4.0 * q * sq)
        if kind == "linear_shift":
            a, g = p["alpha"], p["gamma"]
            return (a * n + g, a + 0.0 * n, 0.0 * n)[order]
        if kind == "log_drift":
            a, be = p["alpha"], p["beta"]
            return (a * n + be * np.log(n), a + be / n, -be / n**2)[order]
        if kind == "marginal":
            return self._marginal(n, order)
        if kind == "power_law":
            A, g = p["amplitude"], p["gamma_exp"]
            return (A * n**g, A * g * n ** (g - 1), A * g * (g - 1) * n ** (g - 2))[order]
        if kind == "crossover":
            a, g, s = p["alpha"], p["gamma"], p["n_star"]
            x = n / s
            if order == 0:
                return a * n * x / (1 + x) + g
            if order == 1:
                return a * x * (x + 2) / (1 + x) ** 2
            return 2 * a / (s * (1 + x) ** 3)
        raise AssertionError(kind)

    def _marginal(self, n: np.ndarray, order: int):
        # alpha n (1 + eps/ln n) for n >= 2; linear ramp from b(0)=0 to b(2) below.
        a, e = self.params["alpha"], self.params["epsilon"]
        b2 = 2.0 * a * (1.0 + e / math.log(2.0))
        upper = n >= 2.0
        L = np.log(np.where(upper, n, 2.0))
        if order == 0:
            hi, lo = a * n * (1.0 + e / L), 0.5 * b2 * n
        elif order == 1:
            hi, lo = a + a * e * (L - 1.0) / L**2, 0.5 * b2 + 0.0 * n
        else:
            hi, lo = a * e * (2.0 - L) / (n * L**3), 0.0 * n
        return np.where(upper, hi, lo)

    # -- chain view --------------------------------------------------------
    def bonds(self, n_sites: int) -> np.ndarray:
        """Hoppings b_1..b_{N-1} of an N-site chain (shorter for finite tables)."""
        if self.kind == "tabulated":
            m = min(n_sites - 1, len(self.values))
            return self.values[:m].copy()
        out = self.b(np.arange(1, n_sites, dtype=float))
        if not np.all(np.isfinite(out)):
            raise ValueError(f"non-finite Lanczos coefficients for {self.describe()}")
        return np.asarray(out, dtype=float)

    def diagonal_terms(self, n_sites: int) -> Optional[np.ndarray]:
        if self.diagonal is None or not np.any(self.diagonal):
            return None
        a = np.zeros(n_sites)
        m = min(n_sites, len(self.diagonal))
        a[:m] = self.diagonal[:m]
        return a


def eval_b(profile: LanczosProfile, n: int, extrapolate: bool = False) -> float:
    """Lanczos coefficient b_n at integer n >= 1.

    The marginal family is only defined for n >= 2; pass ``extrapolate=True``
    to get the linear-ramp value b(1) = b(2)/2 used for chain evolution.
    """
    if int(n) != n or n < 1:
        raise ProfileDomainError(f"Lanczos index must be an integer >= 1, got {n}")
    n = int(n)
    if profile.kind == "tabulated":
        if n > len(profile.values):
            raise IndexError(f"b_{n} outside tabulated range 1..{len(profile.values)}")
        return float(profile.values[n - 1])
    if profile.kind == "marginal" and n < 2 and not extrapolate:
        raise ProfileDomainError("marginal family is defined for n >= 2")
    return float(profile.b(float(n)))


def eval_b_prime(profile: LanczosProfile, n: float) -> float:
    """db/dn: analytic for closed forms, finite differences for tables."""
    if n < 1:
        raise ProfileDomainError(f"derivative requested at n={n} < 1")
    if profile.is_analytic:
        return float(profile.db(float(n)))
    vals = profile.values
    m = len(vals)
    if int(n) != n:
        if n > m:
            raise IndexError(f"n={n} outside tabulated range")
        return float(profile.db(float(n)))
    n = int(n)
    if n > m or m < 2:
        raise IndexError(f"b'({n}) needs b_{n} and a neighbour in range 1..{m}")
    if n == 1:
        return float(vals[1] - vals[0])
    if n == m:
        return float(vals[m - 1] - vals[m - 2])
    return float(0.5 * (vals[n] - vals[n - 2]))


def crossover_at(h: float, alpha: float = 1.0, gamma: float = 0.0, c: float = 1.0) -> LanczosProfile:
    """Crossover profile with n_star = c / h (alpha, gamma held fixed)."""
    if h <= 0:
        raise ValueError("h must be positive")
    return LanczosProfile.crossover(alpha=alpha, gamma=gamma, n_star=c / h)


# ---------------------------------------------------------------------------
# operator space
# ---------------------------------------------------------------------------

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class OperatorSpaceProblem:
    """Hamiltonian plus seed operator; inner product Tr(A^dag B)/normalization."""

    hamiltonian: np.ndarray
    seed_operator: np.ndarray
    normalization: Optional[float] = None

    def __post_init__(self):
        H = np.asarray(self.hamiltonian, dtype=complex)
        O = np.asarray(self.seed_operator, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError("hamiltonian must be a square matrix")
        if O.shape != H.shape:
            raise ValueError("seed operator must match the Hamiltonian dimension")
        dev = np.max(np.abs(H - H.conj().T)) if H.size else 0.0
        if dev > HERMITIAN_TOL:
            raise ValueError(f"hamiltonian is not Hermitian (max deviation {dev:.3e})")
        norm = float(H.shape[0]) if self.normalization is None else float(self.normalization)
        if norm <= 0:
            raise ValueError("normalization must be positive")
        if np.linalg.norm(O) == 0:
            raise ValueError("seed operator has zero Hilbert-Schmidt norm")
        object.__setattr__(self, "hamiltonian", H)
        object.__setattr__(self, "seed_operator", O)
        object.__setattr__(self, "normalization", norm)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def inner(self, A: np.ndarray, B: np.ndarray) -> complex:
        return complex(np.trace(A.conj().T @ B) / self.normalization)

    def to_vector(self, A: np.ndarray) -> np.ndarray:
        """Coordinates of A in the basis sqrt(normalization)|i><j| (row-major)."""
        return np.asarray(A, dtype=complex).reshape(-1) / math.sqrt(self.normalization)

    def to_operator(self, v: np.ndarray) -> np.ndarray:
        d = self.dim
        return np.asarray(v, dtype=complex).reshape(d, d) * math.sqrt(self.normalization)

    def seed_vector(self) -> np.ndarray:
        v = self.to_vector(self.seed_operator)
        return v / np.linalg.norm(v)


def build_liouvillian(problem: OperatorSpaceProblem) -> np.ndarray:
    """Matrix of A -> [H, A] in the scaled matrix-unit basis (d^2 x d^2, Hermitian)."""
    H = problem.hamiltonian
    eye = np.eye(problem.dim)
    return np.kron(H, eye) - np.kron(eye, H.T)


# ---------------------------------------------------------------------------
# Lanczos
# ---------------------------------------------------------------------------

REORTH_POLICIES = ("full", "selective", "none")


@dataclass(eq=False)
class LanczosResult:
    profile: LanczosProfile
    basis: np.ndarray
    diagonal: np.ndarray
    orthogonality_error: float
    orthogonality_warning: bool
    terminated_early: bool

    @property
    def b(self) -> np.ndarray:
        return self.profile.values


def lanczos_tridiagonalize(
    liouvillian: np.ndarray,
    seed: np.ndarray,
    n_max: Optional[int] = None,
    reorth: str = "full",
    breakdown_tol: float = 1e-12,
) -> LanczosResult:
    """Three-term Lanczos recursion on a Hermitian matrix.

    Returns up to ``n_max`` off-diagonal coefficients.  The recursion stops
    when b_m < breakdown_tol * max(b_1..b_{m-1}) (invariant subspace reached).
    ``reorth``: "full" re-projects every new vector twice against the whole
    basis, "selective" only when its overlap with the basis exceeds sqrt(eps),
    "none" uses the bare three-term recurrence.
    """
    if reorth not in REORTH_POLICIES:
        raise ValueError(f"reorth must be one of {REORTH_POLICIES}")
    L = np.asarray(liouvillian)
    dim = L.shape[0]
    v = np.asarray(seed, dtype=complex).ravel()
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValueError("zero seed vector")
    if abs(nrm - 1.0) > 1e-10:
        v = v / nrm
    if n_max is None:
        n_max = dim - 1
    if n_max > dim:
        raise ValueError(f"n_max={n_max} exceeds matrix dimension {dim}")

    basis = [v]
    a_list, b_list = [], []
    prev = np.zeros_like(v)
    b_prev = 0.0
    scale = 0.0
    selective_thresh = math.sqrt(np.finfo(float).eps)
    terminated = False
    while True:
        w = L @ basis[-1]
        a = float(np.real(np.vdot(basis[-1], w)))
        a_list.append(a)
        if len(b_list) >= n_max:
            break
        w = w - a * basis[-1] - b_prev * prev
        if reorth == "full":
            V = np.array(basis)
            for _ in range(2):
                w = w - V.T @ (V.conj() @ w)
        elif reorth == "selective":
            V = np.array(basis)
            overlaps = V.conj() @ w
            if np.max(np.abs(overlaps)) > selective_thresh * max(np.linalg.norm(w), 1e-300):
                w = w - V.T @ overlaps
                w = w - V.T @ (V.conj() @ w)
        b = float(np.linalg.norm(w))
        scale = max(scale, b, abs(a)) if not b_list else scale
        ref = max(b_list) if b_list else scale
        if ref == 0.0 or b < breakdown_tol * ref:
            terminated = True
            break
        b_list.append(b)
        prev, b_prev = basis[-1], b
        basis.append(w / b)

    V = np.array(basis)
    gram = V.conj() @ V.T
    ortho = float(np.max(np.abs(gram - np.eye(len(basis)))))
    flag = ortho > 1e-6
    if flag:
        warnings.warn(
            f"Lanczos basis lost orthogonality ({ortho:.2e}) under reorth={reorth!r}",
            RuntimeWarning,
            stacklevel=2,
        )
    profile = LanczosProfile.tabulated(b_list, diagonal=a_list)
    return LanczosResult(profile, V, np.array(a_list), ortho, flag, terminated)


def krylov_profile(problem: OperatorSpaceProblem, n_max: Optional[int] = None, reorth: str = "full") -> LanczosResult:
    """Build the Liouvillian of ``problem`` and tridiagonalize from its seed."""
    return lanczos_tridiagonalize(build_liouvillian(problem), problem.seed_vector(), n_max, reorth)


def tridiagonal_matrix(b: Sequence[float], a: Optional[Sequence[float]] = None) -> np.ndarray:
    """Dense symmetric tridiagonal matrix with off-diagonals b (and diagonal a)."""
    b = np.asarray(b, dtype=float)
    n = len(b) + 1
    T = np.diag(b, 1) + np.diag(b, -1)
    if a is not None:
        T = T + np.diag(np.asarray(a, dtype=float)[:n])
    return T


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

def write_profile_csv(profile: LanczosProfile, path, n_max: Optional[int] = None) -> Path:
    """Write b_1..b_m as ``n,b_n`` rows under the versioned header."""
    if profile.kind == "tabulated":
        vals = profile.values
    else:
        m = n_max or profile.n_max
        if m is None:
            raise ValueError("analytic profiles need n_max to be tabulated")
        vals = np.array([eval_b(profile, n, extrapolate=True) for n in range(1, m + 1)])
    lines = [PROFILE_HEADER, "n,b_n"]
    lines += [f"{i},{v:.17g}" for i, v in enumerate(vals, start=1)]
    from .io import atomic_write_text

    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_profile_csv(path) -> LanczosProfile:
    text = Path(path).read_text()
    return parse_profile_csv(text)


def parse_profile_csv(text: str) -> LanczosProfile:
    lines = text.splitlines()
    if not lines or lines[0].strip() != PROFILE_HEADER:
        raise ProfileFormatError(f"missing header {PROFILE_HEADER!r}", line=1)
    values = []
    expected = 1
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if parts[0].lower() == "n":
            continue
        if len(parts) != 2:
            raise ProfileFormatError(f"expected 2 columns, got {len(parts)}", line=lineno)
        try:
            idx, val = int(parts[0]), float(parts[1])
        except ValueError:
            raise ProfileFormatError(f"cannot parse row {line!r}", line=lineno) from None
        if idx != expected:
            raise ProfileFormatError(f"expected index {expected}, got {idx}", line=lineno)
        if not math.isfinite(val) or val < 0:
            raise ProfileFormatError(f"b_{idx}={val} must be finite and non-negative", line=lineno)
        values.append(val)
        expected += 1
    if not values:
        raise ProfileFormatError("no coefficients found", line=len(lines))
    return LanczosProfile.tabulated(values)
