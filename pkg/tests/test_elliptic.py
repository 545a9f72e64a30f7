import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from polytori.elliptic import (
    Modulus,
    bergman_B,
    bergman_diagonal,
    bergman_projective_connection,
    dedekind_eta,
    eisenstein_e2,
    eta_tilde,
    log_theta1_derivatives,
    reduce_to_cell,
    theta1,
    theta1_all,
    weierstrass_p,
    weierstrass_p_lattice_sum,
)
from polytori.errors import InvariantError, LatticeProximityError

sigmas = st.builds(complex, st.floats(-0.5, 0.5), st.floats(0.6, 2.5))
points = st.builds(complex, st.floats(-0.5, 0.5), st.floats(-0.45, 0.45))


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


@settings(max_examples=40, deadline=None)
@given(sigmas)
def test_theta_prime_at_zero_is_eta_cubed(s):
    assert rel(theta1(0.0, s, 1), 2 * np.pi * dedekind_eta(s) ** 3) < 1e-12


@settings(max_examples=40, deadline=None)
@given(sigmas, points)
def test_theta_quasi_periodicity(s, z):
    assume(abs(z) > 0.05)
    th = theta1(z, s)
    assert rel(theta1(z + 1, s), -th) < 1e-11
    assert rel(theta1(z + s, s), -np.exp(-1j * np.pi * s - 2j * np.pi * z) * th) < 1e-10
    assert rel(theta1(-z, s), -th) < 1e-12


@settings(max_examples=40, deadline=None)
@given(sigmas)
def test_eta_modular_transformations(s):
    eta = dedekind_eta(s)
    assert rel(dedekind_eta(s + 1), np.exp(1j * np.pi / 12) * eta) < 1e-12
    assert rel(dedekind_eta(-1 / s), np.sqrt(-1j * s) * eta) < 1e-12
    # Im(sigma) |eta|^4 is a modular invariant
    assert rel((-1 / s).imag * abs(dedekind_eta(-1 / s)) ** 4, s.imag * abs(eta) ** 4) < 1e-12


@settings(max_examples=30, deadline=None)
@given(sigmas, points)
def test_theta_modular_transformation(s, z):
    assume(abs(z) > 0.05)
    lhs = theta1(z / s, -1 / s)
    rhs = -1j * np.sqrt(-1j * s) * np.exp(1j * np.pi * z * z / s) * theta1(z, s)
    assert rel(lhs, rhs) < 1e-11


@pytest.mark.parametrize("s", [1j, 0.5 + 1j, 0.2 + 0.8j, 2j])
def test_eta_tilde_matches_e2_and_log_derivative(s):
    et = eta_tilde(s)
    assert rel(et, 1j * np.pi / 12 * eisenstein_e2(s)) < 1e-13
    h = 1e-4
    fd = (np.log(dedekind_eta(s + h)) - np.log(dedekind_eta(s - h))) / (2 * h)
    assert rel(et, fd) < 1e-7


def test_e2_at_i_is_three_over_pi():
    # E2(i) = 3 / pi, a classical closed form
    assert abs(eisenstein_e2(1j) - 3 / np.pi) < 1e-14


def test_eta_at_i_closed_form():
    # eta(i) = Gamma(1/4) / (2 pi^(3/4))
    from scipy.special import gamma

    assert rel(dedekind_eta(1j), gamma(0.25) / (2 * np.pi**0.75)) < 1e-14


@pytest.mark.parametrize("s", [1j, 0.3 + 1.2j])
def test_theta_derivatives_against_finite_differences(s):
    z = 0.17 - 0.11j
    h = 1e-3
    vals = theta1_all(z, s)
    for d in range(3):
        f = lambda x: theta1(x, s, d)
        fd = (-f(z + 2 * h) + 8 * f(z + h) - 8 * f(z - h) + f(z - 2 * h)) / (12 * h)
        assert rel(vals[d + 1], fd) < 1e-9
        assert rel(vals[d], theta1(z, s, d)) < 1e-14


def test_log_theta_derivatives_consistent():
    s, z = 0.1 + 1.1j, 0.23 + 0.05j
    l1, l2, l3 = log_theta1_derivatives(z, s)
    h = 5e-4

    def fd(f):
        return (-f(z + 2 * h) + 8 * f(z + h) - 8 * f(z - h) + f(z - 2 * h)) / (12 * h)

    assert rel(l1, theta1(z, s, 1) / theta1(z, s)) < 1e-13
    assert rel(l2, fd(lambda x: log_theta1_derivatives(x, s)[0])) < 1e-9
    assert rel(l3, fd(lambda x: log_theta1_derivatives(x, s)[1])) < 1e-9


@settings(max_examples=25, deadline=None)
@given(sigmas, points)
def test_weierstrass_p_matches_lattice_sum(s, z):
    assume(abs(z) > 0.05)
    assert rel(weierstrass_p(z, s), weierstrass_p_lattice_sum(z, s)) < 1e-10


def test_weierstrass_p_laurent_and_symmetry():
    s = 0.2 + 1.3j
    z = 1e-3 * np.exp(0.4j)
    assert abs(weierstrass_p(z, s) - 1 / z**2) < 1e-4
    w = 0.31 + 0.12j
    assert rel(weierstrass_p(-w, s), weierstrass_p(w, s)) < 1e-12
    assert rel(weierstrass_p(w + 1 + s, s), weierstrass_p(w, s)) < 1e-12


def test_weierstrass_p_at_lattice_point_raises():
    with pytest.raises(LatticeProximityError):
        weierstrass_p(1.0 + 1j, 1j)


def test_bergman_kernel_symmetric_and_periodic():
    s = 0.1 + 1.05j
    x, y = 0.2 + 0.3j, -0.15 + 0.05j
    b = bergman_B(x, y, s)
    assert rel(bergman_B(y, x, s), b) < 1e-13
    assert rel(bergman_B(x + s, y, s), b) < 1e-12
    assert rel(b, weierstrass_p(x - y, s) - 4j * np.pi * eta_tilde(s)) < 1e-13


@pytest.mark.parametrize("s", [1j, 0.5 + 0.9j])
def test_bergman_projective_connection(s):
    offset = 1e-3
    x = 0.05 + 0.1j
    expansion = bergman_B(x + offset, x, s) - 1 / offset**2
    assert rel(6 * expansion, bergman_projective_connection(s)) < 1e-4
    assert rel(6 * bergman_diagonal(s), bergman_projective_connection(s)) < 1e-15


def test_modulus_validation():
    with pytest.raises(InvariantError):
        Modulus(0.5 - 0.1j)
    with pytest.raises(InvariantError):
        Modulus(complex(np.nan, 1.0))
    assert Modulus(1j).lattice == (1.0, 1j)
    with pytest.raises(ValueError):
        theta1(0.1, 1j, 4)


@settings(max_examples=50, deadline=None)
@given(sigmas, st.builds(complex, st.floats(-5, 5), st.floats(-5, 5)))
def test_reduce_to_cell_is_a_lattice_translation(s, z):
    r = reduce_to_cell(z, s)
    u = r.imag / s.imag
    assert abs(u) <= 0.5 + 1e-12
    assert abs(r.real - u * s.real) <= 0.5 + 1e-12
    d = z - r
    m = d.imag / s.imag
    n = d.real - m * s.real
    assert abs(m - round(m)) < 1e-9 and abs(n - round(n)) < 1e-9


def test_vectorised_evaluation():
    s = 1j
    z = np.array([0.1, 0.2 + 0.1j, -0.3j])
    out = theta1(z, s)
    assert out.shape == (3,)
    assert np.allclose(out, [theta1(v, s) for v in z], rtol=1e-15)
