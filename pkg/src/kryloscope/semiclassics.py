"""Semiclassical Krylov phase-space flow.

The leading Weyl symbol of the hopping Hamiltonian is H(n, p) = 2 b(n) cos p,
with Hamilton's equations

    dn/dt =  dH/dp = -2 b(n) sin p
    dp/dt = -dH/dn = -2 b'(n) cos p

p = -pi/2 is the growing (radially repelling) manifold, p = +pi/2 the
decaying one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .profiles import LanczosProfile, eval_b

N_FLOOR = 0.5
GROWING = -np.pi / 2
DECAYING = np.pi / 2


def wrap_angle(p):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(p, dtype=float), 2 * np.pi)


def h_eff(profile: LanczosProfile, n: float, p: float):
    """Return H = 2 b(n) cos p and its gradient (dH/dn, dH/dp)."""
    b = profile.b(n)
    db = profile.db(n)
    H = 2.0 * b * np.cos(p)
    grad = (2.0 * db * np.cos(p), -2.0 * b * np.sin(p))
    return H, grad


def hamilton_rhs(profile: LanczosProfile):
    def rhs(t, y):
        n, p = y[0], y[1]
        return [-2.0 * profile.b(n) * np.sin(p), -2.0 * profile.db(n) * np.cos(p)]

    return rhs


@dataclass(eq=False)
class PhaseTrajectory:
    times: np.ndarray
    n_path: np.ndarray
    p_path: np.ndarray  # wrapped to (-pi, pi]
    p_unwrapped: np.ndarray
    conserved_H: np.ndarray
    profile: Optional[LanczosProfile] = None
    lyapunov_fit: Optional[tuple] = None
    flags: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.flags

    @property
    def n0(self) -> float:
        return float(self.n_path[0])

    @property
    def p0(self) -> float:
        return float(self.p_unwrapped[0])

    @property
    def energy_error(self) -> float:
        H0 = self.conserved_H[0]
        return float(np.max(np.abs(self.conserved_H - H0)) / max(1.0, abs(H0)))


def integrate_hamilton(
    profile: LanczosProfile,
    n0: float,
    p0: float,
    t_grid,
    n_floor: float = N_FLOOR,
    rtol: float = 1e-12,
    atol: float = 1e-12,
) -> PhaseTrajectory:
    """Integrate the flow from (n0, p0); stops and flags if n drops below n_floor."""
    if n0 < 1:
        raise ValueError("semiclassical start needs n0 >= 1")
    t = np.asarray(t_grid, dtype=float)
    floor_event = lambda _t, y: y[0] - n_floor  # noqa: E731
    floor_event.terminal = True
    floor_event.direction = -1
    sol = solve_ivp(
        hamilton_rhs(profile),
        (t[0], t[-1]),
        [float(n0), float(p0)],
        method="DOP853",
        t_eval=t,
        rtol=rtol,
        atol=atol,
        events=floor_event,
    )
    if sol.status < 0:
        raise RuntimeError(f"Hamilton integration failed: {sol.message}")
    flags = []
    times = sol.t
    if len(times) < len(t):
        flags.append(f"n fell below n_floor={n_floor} at t={sol.t_events[0][0]:.6g}")
    n, p = sol.y
    H = 2.0 * profile.b(n) * np.cos(p)
    traj = PhaseTrajectory(times, n, wrap_angle(p), p, H, profile, flags=flags)
    if np.all(np.diff(n) > 0):
        try:
            traj.lyapunov_fit = lyapunov_rate(traj)
        except ValueError:  # grid too short for the default window
            pass
    return traj


def _window_mask(times, window):
    if window is None:
        t0 = times[0] + 2.0 * (times[-1] - times[0]) / 3.0
        window = (t0, times[-1])
    mask = (times >= window[0]) & (times <= window[1])
    if mask.sum() < 3:
        raise ValueError("fit window holds fewer than 3 samples")
    return mask


def _slope(x, y):
    """Least-squares slope and its standard error."""
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = max(len(x) - 2, 1)
    resid = y - A @ coef
    s2 = float(resid @ resid) / dof
    sxx = float(np.sum((x - x.mean()) ** 2))
    return float(coef[0]), float(np.sqrt(s2 / sxx)) if sxx > 0 else float("inf")


def lyapunov_rate(traj: PhaseTrajectory, window: Optional[tuple] = None):
    """Slope of ln n(t) over ``window`` (default: final third). Returns (rate, stderr)."""
    mask = _window_mask(traj.times, window)
    n = traj.n_path[mask]
    if not (np.all(np.diff(n) > 0) or np.all(np.diff(n) < 0)):
        raise ValueError("n(t) is not monotone in the fit window")
    return _slope(traj.times[mask], np.log(n))


def growth_power(traj: PhaseTrajectory, window: Optional[tuple] = None, rate: float = 0.0):
    """Slope of ln(n e^{-rate t}) against ln t over ``window``.

    With rate = 0 this is the polynomial growth exponent; with rate = 2 alpha
    it extracts the power-law dressing t^eps of a marginal profile.
    """
    mask = _window_mask(traj.times, window)
    t = traj.times[mask]
    if np.any(t <= 0):
        raise ValueError("power fits need a window at t > 0")
    y = np.log(traj.n_path[mask]) - rate * t
    return _slope(np.log(t), y)


def linear_shift_trajectory(n0: float, c: float, alpha: float, t):
    """Exact growing-manifold solution (n0 + c) e^{2 alpha t} - c for b = alpha (n + c)."""
    return (n0 + c) * np.exp(2.0 * alpha * np.asarray(t, dtype=float)) - c


# ---------------------------------------------------------------------------
# growth classification
# ---------------------------------------------------------------------------

GROWTH_CLASSES = ("irrelevant_linear", "irrelevant_log_drift", "marginal", "relevant_sublinear")
ADEQUATE_FIT = 1e-4
AMBIGUITY = 0.10
# power-law exponents this close to 1 are linear growth, not a relevant deformation
EXPONENT_GAP = 0.02


@dataclass
class GrowthClass:
    growth_class: str
    parameters: dict
    predicted_law: dict
    residuals: dict
    candidates: list
    n_probe: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    lambda_eff: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


def _lstsq_fit(design, b):
    coef, *_ = np.linalg.lstsq(design, b, rcond=None)
    return coef, design @ coef


def _rms_rel(b, fit):
    return float(np.sqrt(np.mean(((fit - b) / b) ** 2)))


def fit_growth_models(n: np.ndarray, b: np.ndarray) -> dict:
    """Fit the four asymptotic families to b(n) samples.

    The asymptotically linear families carry a 1/n correction term so that
    decaying UV corrections (as in the su11 coefficients) do not masquerade
    as a different class.  Returns name -> (params, rms relative residual,
    parameter count).
    """
    n = np.asarray(n, dtype=float)
    b = np.asarray(b, dtype=float)
    one = np.ones_like(n)
    L = np.log(n)
    out = {}
    c, fit = _lstsq_fit(np.vstack([n, one, 1 / n]).T, b)
    out["irrelevant_linear"] = ({"alpha": c[0], "gamma": c[1]}, _rms_rel(b, fit), 3)
    c, fit = _lstsq_fit(np.vstack([n, L, one, 1 / n]).T, b)
    out["irrelevant_log_drift"] = ({"alpha": c[0], "beta": c[1], "gamma": c[2]}, _rms_rel(b, fit), 4)
    c, fit = _lstsq_fit(np.vstack([n, n / L, one, 1 / n]).T, b)
    eps = c[1] / c[0] if c[0] != 0 else np.nan
    out["marginal"] = ({"alpha": c[0], "epsilon": eps, "gamma": c[2]}, _rms_rel(b, fit), 4)
    c, _ = _lstsq_fit(np.vstack([L, one]).T, np.log(b))
    fit = np.exp(c[1]) * n ** c[0]
    out["relevant_sublinear"] = ({"amplitude": np.exp(c[1]), "gamma_exp": c[0]}, _rms_rel(b, fit), 2)
    return out


def _predicted_law(name: str, params: dict) -> dict:
    if name == "relevant_sublinear":
        g = params["gamma_exp"]
        return {"type": "polynomial", "exponent": 1.0 / (1.0 - g)}
    rate = 2.0 * params["alpha"]
    if name == "marginal":
        return {"type": "exponential_power_log", "rate": rate, "power": params["epsilon"]}
    return {"type": "exponential", "rate": rate}


def classify_samples(n, b, adequate: float = ADEQUATE_FIT) -> GrowthClass:
    """Pick the asymptotic family that describes b(n) samples.

    A family is adequate when its rms relative residual is below
    ``adequate``; the adequate family with the fewest parameters wins.  If
    no family is adequate, or two adequate families of equal size have
    residuals within 10% of each other, the result is "undetermined" and
    ``candidates`` lists the families ordered by residual.
    """
    n = np.asarray(n, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0):
        raise ValueError("classification needs positive b(n) samples")
    fits = fit_growth_models(n, b)
    res = {k: v[1] for k, v in fits.items()}
    ranked = sorted(GROWTH_CLASSES, key=res.get)
    gexp = fits["relevant_sublinear"][0]["gamma_exp"]
    ok = [k for k in ranked if res[k] <= adequate and (k != "relevant_sublinear" or 0 < gexp < 1 - EXPONENT_GAP)]
    if not ok:
        return GrowthClass("undetermined", {}, {}, res, ranked)
    kmin = min(fits[k][2] for k in ok)
    winners = [k for k in ok if fits[k][2] == kmin]
    if len(winners) > 1 and res[winners[1]] <= res[winners[0]] * (1 + AMBIGUITY):
        return GrowthClass("undetermined", {}, {}, res, winners)
    name = winners[0]
    params = {k: float(v) for k, v in fits[name][0].items()}
    return GrowthClass(name, params, _predicted_law(name, params), res, ok)


def classify_growth(profile: LanczosProfile, n_min: float = 10, n_max: float = 1e4, num: int = 200) -> GrowthClass:
    """Classify the large-n behaviour of ``profile`` from integer samples in [n_min, n_max]."""
    if n_min < 2 or n_max / n_min < 100:
        raise ValueError("probe range must start at n >= 2 and span at least two decades")
    n = np.unique(np.round(np.geomspace(n_min, n_max, num)).astype(int))
    b = np.array([eval_b(profile, int(k)) for k in n])
    out = classify_samples(n, b)
    out.n_probe = n.astype(float)
    out.lambda_eff = 2.0 * profile.db(n.astype(float))
    return out
