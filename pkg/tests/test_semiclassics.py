import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kryloscope.profiles import LanczosProfile
from kryloscope.semiclassics import (
    DECAYING,
    GROWING,
    classify_growth,
    classify_samples,
    growth_power,
    h_eff,
    integrate_hamilton,
    linear_shift_trajectory,
    lyapunov_rate,
    wrap_angle,
)

LINEAR = LanczosProfile.linear_shift(1.0, 0.0)


def test_h_eff_examples():
    H, grad = h_eff(LINEAR, 3.0, 0.0)
    assert H == 6.0 and grad == pytest.approx((2.0, 0.0))
    assert h_eff(LanczosProfile.su11(1.0, 1.0), 5.0, math.pi / 2)[0] == pytest.approx(0.0, abs=1e-14)
    assert h_eff(LINEAR, 2.0, -math.pi / 2)[1] == pytest.approx((0.0, 4.0), abs=1e-14)


FAMILIES = [
    LanczosProfile.sqrt_hopping(1.0),
    LanczosProfile.su11(1.0, 0.5),
    LanczosProfile.linear_shift(1.5, 2.0),
    LanczosProfile.log_drift(1.0, 2.0),
    LanczosProfile.marginal(1.0, 0.3),
    LanczosProfile.power_law(1.0, 0.5),
    LanczosProfile.crossover(1.0, 1.0, 100.0),
]


@pytest.mark.parametrize("prof", FAMILIES, ids=lambda p: p.kind)
def test_h_eff_gradient(prof):
    rng = np.random.default_rng(11)
    step = 1e-5
    for n, p in zip(rng.uniform(3, 500, 100), rng.uniform(-math.pi, math.pi, 100)):
        _, (dn, dp) = h_eff(prof, n, p)
        fdn = (h_eff(prof, n + step, p)[0] - h_eff(prof, n - step, p)[0]) / (2 * step)
        fdp = (h_eff(prof, n, p + step)[0] - h_eff(prof, n, p - step)[0]) / (2 * step)
        assert dn == pytest.approx(fdn, rel=1e-6, abs=1e-8)
        assert dp == pytest.approx(fdp, rel=1e-6, abs=1e-8)


def test_growing_manifold():
    traj = integrate_hamilton(LINEAR, 1.0, GROWING, np.linspace(0, 1, 11))
    assert traj.n_path[-1] == pytest.approx(math.e**2, rel=1e-10)
    assert np.max(np.abs(traj.p_path - GROWING)) < 1e-9
    assert traj.valid


def test_decaying_manifold():
    traj = integrate_hamilton(LanczosProfile.su11(1.0, 1.0), 50.0, DECAYING, np.linspace(0, 1, 11))
    assert np.all(np.diff(traj.n_path) < 0)
    assert np.max(np.abs(traj.p_path - DECAYING)) < 1e-9


def test_floor_truncates_and_flags():
    traj = integrate_hamilton(LINEAR, 2.0, DECAYING, np.linspace(0, 5, 51))
    assert not traj.valid
    assert len(traj.times) < 51
    assert np.all(traj.n_path >= 0.5 - 1e-9)


def test_conserved_n_cos_p():
    traj = integrate_hamilton(LINEAR, 2.0, 0.0, np.linspace(0, 5, 501))
    assert np.max(np.abs(traj.n_path * np.cos(traj.p_unwrapped) - 2.0)) < 1e-8


@given(n0=st.floats(1, 50), p0=st.floats(-math.pi, math.pi))
@settings(max_examples=30, deadline=None)
def test_energy_conservation(n0, p0):
    for prof in (LanczosProfile.su11(1.0, 0.5), LanczosProfile.log_drift(1.0, 1.0), LanczosProfile.power_law(1.0, 0.5)):
        traj = integrate_hamilton(prof, n0, p0, np.linspace(0, 2, 41))
        assert traj.energy_error < 1e-7


@pytest.mark.parametrize(
    "prof",
    [LINEAR, LanczosProfile.linear_shift(2.0, 3.0), LanczosProfile.su11(1.0, 0.25), LanczosProfile.log_drift(1, 1)],
    ids=lambda p: p.describe(),
)
@pytest.mark.parametrize("p0", [GROWING, DECAYING])
def test_manifold_invariance(prof, p0):
    traj = integrate_hamilton(prof, 30.0, p0, np.linspace(0, 1.0, 21))
    assert np.max(np.abs(traj.p_path - p0)) < 1e-9


def test_linearized_contraction():
    alpha = 1.5
    prof = LanczosProfile.linear_shift(alpha, 0.0)
    t = np.linspace(0, 2, 41)
    traj = integrate_hamilton(prof, 1.0, GROWING + 1e-6, t)
    slope = np.polyfit(t, np.log(np.abs(traj.p_unwrapped - GROWING)), 1)[0]
    assert slope == pytest.approx(-2 * alpha, rel=0.02)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_lyapunov_rate_linear(alpha):
    traj = integrate_hamilton(LanczosProfile.linear_shift(alpha, 0.0), 1.0, GROWING, np.linspace(0, 6 / alpha, 301))
    rate, err = lyapunov_rate(traj)
    assert rate == pytest.approx(2 * alpha, rel=1e-2)
    assert traj.lyapunov_fit[0] == pytest.approx(rate)


def test_lyapunov_rate_non_monotone():
    traj = integrate_hamilton(LINEAR, 2.0, 0.3, np.linspace(0, 4, 200))
    with pytest.raises(ValueError):
        lyapunov_rate(traj, (0.0, 4.0))


@pytest.mark.parametrize("c", [1.0, 5.0])
def test_linear_shift_closed_form(c):
    t = np.linspace(0, 4, 41)
    traj = integrate_hamilton(LanczosProfile.linear_shift(1.0, c), 1.0, GROWING, t)
    exact = linear_shift_trajectory(1.0, c, 1.0, t)
    assert np.max(np.abs(traj.n_path / exact - 1)) < 1e-6


def test_power_law_polynomial_growth():
    t = np.linspace(0, 1000, 2001)
    traj = integrate_hamilton(LanczosProfile.power_law(1.0, 0.5), 1.0, GROWING, t)
    power, _ = growth_power(traj)
    assert power == pytest.approx(2.0, rel=0.02)
    rates = [lyapunov_rate(traj, w)[0] for w in ((100, 200), (800, 1000))]
    assert rates[1] < rates[0] < 0.05


@pytest.mark.parametrize("eps", [0.2, 0.3])
def test_marginal_power_dressing(eps):
    t = np.linspace(0, 80, 1601)
    traj = integrate_hamilton(LanczosProfile.marginal(1.0, eps), 1.0, GROWING, t)
    power, _ = growth_power(traj, (20, 80), rate=2.0)
    assert power == pytest.approx(eps, abs=0.015)


def test_wrap_angle():
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(0.5) == 0.5


# -- classification ---------------------------------------------------------------

def _tab(f):
    n = np.arange(1, 10001, dtype=float)
    return LanczosProfile.tabulated(f(n))


def test_classify_examples():
    gc = classify_growth(_tab(lambda n: n + 3))
    assert gc.growth_class == "irrelevant_linear"
    assert gc.predicted_law["rate"] == pytest.approx(2.0, rel=1e-6)
    gc = classify_growth(_tab(lambda n: n + 2 * np.log(n)))
    assert gc.growth_class == "irrelevant_log_drift"
    assert gc.predicted_law["rate"] == pytest.approx(2.0, rel=1e-6)
    gc = classify_growth(_tab(np.sqrt))
    assert gc.growth_class == "relevant_sublinear"
    assert gc.predicted_law == {"type": "polynomial", "exponent": pytest.approx(2.0, rel=1e-6)}
    gc = classify_growth(LanczosProfile.marginal(1.0, 0.3))
    assert gc.growth_class == "marginal"
    assert gc.parameters["epsilon"] == pytest.approx(0.3, abs=0.03)
    assert gc.predicted_law["power"] == pytest.approx(0.3, abs=0.03)


def test_classify_su11_is_linear():
    gc = classify_growth(LanczosProfile.su11(1.0, 0.25))
    assert gc.growth_class == "irrelevant_linear"
    assert gc.parameters["alpha"] == pytest.approx(1.0, rel=1e-6)


def test_classify_crossover_undetermined():
    # the probe window sits inside the crossover, no single family fits
    gc = classify_growth(LanczosProfile.crossover(1.0, 1.0, 1000.0))
    assert gc.growth_class == "undetermined"
    assert gc.candidates


def test_classify_probe_range():
    with pytest.raises(ValueError):
        classify_growth(LINEAR, 10, 500)
    gc = classify_growth(LINEAR)
    assert np.allclose(gc.lambda_eff, 2.0)


@given(alpha=st.floats(0.2, 5), shift=st.floats(0, 20))
@settings(max_examples=30, deadline=None)
def test_classify_linear_rate_property(alpha, shift):
    n = np.geomspace(10, 1e4, 100)
    gc = classify_samples(n, alpha * n + shift)
    assert gc.growth_class == "irrelevant_linear"
    assert gc.predicted_law["rate"] == pytest.approx(2 * alpha, rel=1e-8)


@given(g=st.floats(0.1, 0.9), amp=st.floats(0.2, 5))
@settings(max_examples=30, deadline=None)
def test_classify_power_law_property(g, amp):
    n = np.geomspace(10, 1e4, 100)
    gc = classify_samples(n, amp * n**g)
    assert gc.growth_class == "relevant_sublinear"
    assert gc.predicted_law["exponent"] == pytest.approx(1 / (1 - g), rel=1e-6)
