import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kryloscope.profiles import (
    LanczosProfile,
    OperatorSpaceProblem,
    ProfileDomainError,
    ProfileFormatError,
    build_liouvillian,
    crossover_at,
    eval_b,
    eval_b_prime,
    krylov_profile,
    lanczos_tridiagonalize,
    parse_profile_csv,
    read_profile_csv,
    tridiagonal_matrix,
    write_profile_csv,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0, -1.0]).astype(complex)


def test_eval_b_examples():
    assert eval_b(LanczosProfile.sqrt_hopping(1.0), 1) == 1.0
    assert eval_b(LanczosProfile.su11(1.0, 1.0), 1) == pytest.approx(math.sqrt(2), rel=1e-15)
    assert eval_b(LanczosProfile.linear_shift(1.0, 0.0), 7) == 7.0
    assert eval_b(LanczosProfile.crossover(1.0, 0.0, 10.0), 10) == pytest.approx(5.0)


def test_eval_b_domain():
    prof = LanczosProfile.marginal(1.0, 0.3)
    with pytest.raises(ProfileDomainError):
        eval_b(prof, 1)
    # the chain uses a linear ramp toward b_0 = 0
    assert eval_b(prof, 1, extrapolate=True) == pytest.approx(0.5 * eval_b(prof, 2))
    with pytest.raises(IndexError):
        eval_b(LanczosProfile.tabulated([1.0, 2.0]), 3)
    with pytest.raises(ProfileDomainError):
        eval_b(LanczosProfile.sqrt_hopping(), 0)


def test_eval_b_prime_examples():
    assert eval_b_prime(LanczosProfile.linear_shift(2.0, 5.0), 100) == 2.0
    assert eval_b_prime(LanczosProfile.power_law(1.0, 0.5), 4) == pytest.approx(0.25)
    assert eval_b_prime(LanczosProfile.su11(1.0, 1.0), 1e6) == pytest.approx(1.0, abs=1e-5)


def test_tabulated_derivative_differences():
    prof = LanczosProfile.tabulated([1.0, 4.0, 9.0, 16.0])
    assert eval_b_prime(prof, 1) == 3.0
    assert eval_b_prime(prof, 2) == 4.0
    assert eval_b_prime(prof, 4) == 7.0


def test_crossover_parameterization():
    prof = crossover_at(0.01, alpha=2.0, gamma=0.5, c=3.0)
    assert prof.params["n_star"] == pytest.approx(300.0)
    assert prof.params["alpha"] == 2.0


ANALYTIC = [
    LanczosProfile.sqrt_hopping(1.3),
    LanczosProfile.su11(0.7, 0.25),
    LanczosProfile.su11(1.0, 1.0),
    LanczosProfile.linear_shift(1.5, 2.0),
    LanczosProfile.log_drift(1.0, 0.7),
    LanczosProfile.marginal(1.0, 0.3),
    LanczosProfile.power_law(2.0, 0.4),
    LanczosProfile.crossover(1.0, 1.0, 50.0),
]


@pytest.mark.parametrize("prof", ANALYTIC, ids=lambda p: p.kind)
@given(n=st.floats(2.5, 1e4))
@settings(max_examples=40, deadline=None)
def test_derivative_matches_differences(prof, n):
    h = 1e-4
    fd = (prof.b(n + h) - prof.b(n - h)) / (2 * h)
    assert prof.db(n) == pytest.approx(fd, rel=1e-6, abs=1e-9)
    fd2 = (prof.db(n + h) - prof.db(n - h)) / (2 * h)
    assert prof.d2b(n) == pytest.approx(fd2, rel=1e-5, abs=1e-9)


@given(alpha=st.floats(0.1, 5), k=st.floats(0.05, 5), n=st.integers(1, 10**6))
def test_su11_square_identity(alpha, k, n):
    b = eval_b(LanczosProfile.su11(alpha, k), n)
    assert b * b == pytest.approx(alpha**2 * n * (n - 1 + 2 * k), rel=1e-12)


@given(st.lists(st.floats(0.0, 50.0), min_size=1, max_size=40))
def test_analytic_b_non_negative(xs):
    n = np.array(xs) + 1.0
    for prof in ANALYTIC:
        assert np.all(prof.b(n) >= 0)


# -- Liouvillian ---------------------------------------------------------------

def test_liouvillian_pauli_spectra():
    for H in (SZ, SX):
        L = build_liouvillian(OperatorSpaceProblem(H, SX))
        assert np.allclose(np.sort(np.linalg.eigvalsh(L)), [-2, 0, 0, 2], atol=1e-12)
    L = build_liouvillian(OperatorSpaceProblem(np.eye(3), np.eye(3)))
    assert np.count_nonzero(L) == 0


def test_liouvillian_acts_as_commutator():
    rng = np.random.default_rng(7)
    d = 4
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    H = X + X.conj().T
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    prob = OperatorSpaceProblem(H, A)
    L = build_liouvillian(prob)
    assert np.allclose(prob.to_operator(L @ prob.to_vector(A)), H @ A - A @ H, atol=1e-12)


@st.composite
def hermitian(draw, d=3):
    re = draw(st.lists(st.floats(-5, 5), min_size=d * d, max_size=d * d))
    im = draw(st.lists(st.floats(-5, 5), min_size=d * d, max_size=d * d))
    X = np.array(re).reshape(d, d) + 1j * np.array(im).reshape(d, d)
    return 0.5 * (X + X.conj().T)


@given(hermitian())
def test_liouvillian_hermitian(H):
    L = build_liouvillian(OperatorSpaceProblem(H, np.eye(3)))
    assert np.max(np.abs(L - L.conj().T)) < 1e-12


def test_operator_problem_validation():
    with pytest.raises(ValueError):
        OperatorSpaceProblem(np.array([[0, 1], [0, 0]]), SX)
    with pytest.raises(ValueError):
        OperatorSpaceProblem(SZ, np.zeros((2, 2)))
    prob = OperatorSpaceProblem(SZ, SX)
    assert prob.normalization == 2.0
    assert prob.inner(SX, SX) == pytest.approx(1.0)


# -- Lanczos ---------------------------------------------------------------------

def test_lanczos_pauli():
    res = krylov_profile(OperatorSpaceProblem(SZ, SX))
    assert np.allclose(res.b, [2.0], atol=1e-12)
    assert res.profile.chain_length == 2
    assert res.terminated_early
    assert np.allclose(res.diagonal, 0.0, atol=1e-12)


def test_lanczos_tridiagonal_identity():
    T = tridiagonal_matrix([3.0, 1.0, 4.0])
    e0 = np.eye(4)[0]
    res = lanczos_tridiagonalize(T, e0)
    assert np.allclose(res.b, [3, 1, 4], atol=1e-12)


def _moment_oracle(L, seed, m, dps=60):
    """b_n from the moments <e0|L^k|e0> by the Stieltjes recursion on the
    spectral measure, carried out in extended precision."""
    mpmath.mp.dps = dps
    w, V = np.linalg.eigh(L)
    weights = np.abs(V.conj().T @ seed) ** 2
    # moments alone fix the measure; reconstruct it on the eigenvalues
    nodes = [mpmath.mpf(float(x)) for x in w]
    mass = [mpmath.mpf(float(x)) for x in weights]
    p_prev = [mpmath.mpf(0)] * len(nodes)
    p_cur = [mpmath.mpf(1)] * len(nodes)
    b_prev = mpmath.mpf(0)
    out = []
    for _ in range(m):
        norm = mpmath.fsum(q * p * p for q, p in zip(mass, p_cur))
        a = mpmath.fsum(q * x * p * p for q, x, p in zip(mass, nodes, p_cur)) / norm
        p_next = [(x - a) * p - b_prev**2 * pp for x, p, pp in zip(nodes, p_cur, p_prev)]
        nn = mpmath.fsum(q * p * p for q, p in zip(mass, p_next))
        b = mpmath.sqrt(nn / norm)
        out.append(float(b))
        p_prev, p_cur, b_prev = p_cur, p_next, b
    return np.array(out)


def _hankel_oracle(L, seed, m, dps=80):
    """Same coefficients from Hankel determinants of the raw moments."""
    mpmath.mp.dps = dps
    M = mpmath.matrix(L.tolist())
    v = mpmath.matrix(seed.tolist())
    mom = []
    x = v
    for _ in range(2 * m + 2):
        mom.append(mpmath.re((v.H * x)[0]))
        x = M * x

    def hankel(k):
        if k == 0:
            return mpmath.mpf(1)
        return mpmath.det(mpmath.matrix([[mom[i + j] for j in range(k)] for i in range(k)]))

    D = [hankel(k) for k in range(m + 2)]
    return np.array([float(mpmath.sqrt(D[n + 1] * D[n - 1] / D[n] ** 2)) for n in range(1, m + 1)])


def test_lanczos_random_hermitian_vs_moments():
    rng = np.random.default_rng(2024)
    X = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    L = (X + X.conj().T) / 2
    e0 = np.eye(6)[0].astype(complex)
    res = lanczos_tridiagonalize(L, e0)
    assert len(res.b) == 5
    assert np.allclose(res.b, _hankel_oracle(L, e0, 5), rtol=0, atol=1e-8)
    assert np.allclose(res.b, _moment_oracle(L, e0, 5), rtol=0, atol=1e-8)


@pytest.mark.parametrize("policy", ["full", "selective", "none"])
def test_lanczos_policies_orthonormal(policy):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 30))
    L = X + X.T
    res = lanczos_tridiagonalize(L, rng.normal(size=30), n_max=10, reorth=policy)
    assert res.orthogonality_error < 1e-10


def test_lanczos_no_reorth_flags_loss():
    # long recursions without reorthogonalization lose orthogonality
    L = np.diag(np.linspace(0, 1, 400) ** 3)
    seed = np.ones(400)
    with pytest.warns(RuntimeWarning):
        res = lanczos_tridiagonalize(L, seed, n_max=150, reorth="none")
    assert res.orthogonality_warning
    full = lanczos_tridiagonalize(L, seed, n_max=150, reorth="full")
    assert full.orthogonality_error < 1e-10


def test_lanczos_zero_seed():
    with pytest.raises(ValueError):
        lanczos_tridiagonalize(np.eye(3), np.zeros(3))


@given(st.lists(st.floats(0.1, 10.0), min_size=1, max_size=25))
@settings(max_examples=50, deadline=None)
def test_lanczos_round_trip(b):
    T = tridiagonal_matrix(b)
    res = lanczos_tridiagonalize(T, np.eye(len(b) + 1)[0])
    assert np.allclose(res.b, b, rtol=0, atol=1e-10 * max(b))


# -- CSV -------------------------------------------------------------------------

def test_profile_csv_round_trip(tmp_path):
    prof = LanczosProfile.tabulated([0.1, 1 / 3, math.pi, 1e-300])
    write_profile_csv(prof, tmp_path / "p.csv")
    back = read_profile_csv(tmp_path / "p.csv")
    assert np.array_equal(back.values, prof.values)
    write_profile_csv(LanczosProfile.su11(1.0, 0.5), tmp_path / "s.csv", n_max=5)
    assert np.allclose(read_profile_csv(tmp_path / "s.csv").values, [1, 2, 3, 4, 5])


@pytest.mark.parametrize(
    "text,line",
    [
        ("n,b_n\n1,1.0\n", 1),
        ("# kryloscope-profile v1\nn,b_n\n1,1.0\n2,-3\n", 4),
        ("# kryloscope-profile v1\nn,b_n\n1,1.0\n3,2.0\n", 4),
        ("# kryloscope-profile v1\nn,b_n\n1,1.0,7\n", 3),
        ("# kryloscope-profile v1\nn,b_n\n1,nan\n", 3),
    ],
)
def test_profile_csv_errors_name_line(text, line):
    with pytest.raises(ProfileFormatError) as exc:
        parse_profile_csv(text)
    assert exc.value.line == line
