import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geophase.errors import DomainError
from geophase.specfun import hermite_function, hermite_functions, laguerre, quadrature


def _chi_mp(n, xi):
    mp.mp.dps = 50
    xi = mp.mpf(xi)
    norm = 1 / mp.sqrt(2 ** n * mp.factorial(n) * mp.sqrt(mp.pi))
    return float(norm * mp.exp(-xi ** 2 / 2) * mp.hermite(n, xi))


def test_hermite_simple_values():
    assert hermite_function(1, 0.0) == 0.0
    assert hermite_function(0, 0.0) == pytest.approx(np.pi ** -0.25, abs=1e-15)
    assert np.pi ** -0.25 == pytest.approx(0.7511255445, abs=1e-10)
    # chi_2(1) frozen from a 50-digit evaluation of N_2 e^{-1/2} H_2(1)
    assert _chi_mp(2, 1) == pytest.approx(0.3221441825567376, rel=1e-15)
    assert hermite_function(2, 1.0) == pytest.approx(0.3221441825567376, rel=1e-14)


@pytest.mark.parametrize("n", [0, 3, 17, 60, 150, 200])
@pytest.mark.parametrize("xi", [-30.0, -7.5, -0.3, 0.0, 2.2, 12.0, 30.0])
def test_hermite_matches_arbitrary_precision(n, xi):
    expected = _chi_mp(n, xi)
    got = hermite_function(n, xi)
    assert np.isfinite(got)
    assert got == pytest.approx(expected, rel=1e-10, abs=1e-300)


def test_hermite_recurrence_consistency():
    xi = np.linspace(-12, 12, 97)
    chi = hermite_functions(101, xi)
    for n in range(1, 101):
        rhs = xi * np.sqrt(2 / (n + 1)) * chi[n] - np.sqrt(n / (n + 1)) * chi[n - 1]
        scale = np.abs(chi[n + 1]).max()
        assert np.abs(chi[n + 1] - rhs).max() <= 1e-12 * scale


def test_hermite_orthonormality():
    rule = quadrature("legendre", 400, (-30.0, 30.0))
    chi = hermite_functions(20, rule.nodes)
    gram = (chi * rule.weights) @ chi.T
    assert np.abs(gram - np.eye(21)).max() < 1e-10


def test_negative_orders_rejected():
    with pytest.raises(DomainError):
        hermite_function(-1, 0.0)
    with pytest.raises(DomainError):
        laguerre(-2, 1.0)


def test_laguerre_simple_values():
    assert laguerre(0, 7.3) == 1.0
    assert laguerre(1, 1.0) == 0.0
    assert laguerre(2, 2.0) == pytest.approx(-1.0, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(0, 50), x=st.floats(0.0, 80.0))
def test_laguerre_matches_arbitrary_precision(n, x):
    mp.mp.dps = 60
    expected = mp.laguerre(n, 0, mp.mpf(x))
    got = laguerre(n, x)
    # relative to the natural size of the polynomial terms, so that values
    # close to a root are judged fairly
    scale = float(mp.fsum(abs(mp.binomial(n, k) * (-mp.mpf(x)) ** k / mp.factorial(k))
                          for k in range(n + 1)))
    assert abs(got - float(expected)) <= 1e-12 * max(abs(float(expected)), 1e-3 * scale, 1e-300)


def test_quadrature_examples():
    r = quadrature("legendre", 2, (-1, 1))
    np.testing.assert_allclose(r.nodes, [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
    np.testing.assert_allclose(r.weights, [1, 1], atol=1e-15)

    r = quadrature("trapezoid-periodic", 4, (0, 2 * np.pi))
    np.testing.assert_allclose(r.nodes, [0, np.pi / 2, np.pi, 3 * np.pi / 2], atol=1e-15)
    np.testing.assert_allclose(r.weights, [np.pi / 2] * 4, atol=1e-15)

    r = quadrature("laguerre", 16)
    assert r.integrate(np.exp(-2 * r.nodes)) == pytest.approx(0.5, abs=1e-12)
    r = quadrature("laguerre", 16, (0.0, 0.5))
    assert r.integrate(np.exp(-2 * r.nodes)) == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("m", [1, 2, 5, 16, 64])
def test_legendre_polynomial_exactness(m):
    rng = np.random.default_rng(m)
    coeffs = rng.normal(size=2 * m)
    a, b = -0.7, 2.3
    rule = quadrature("legendre", m, (a, b))
    poly = np.polynomial.Polynomial(coeffs)
    exact = poly.integ()(b) - poly.integ()(a)
    assert rule.integrate(poly(rule.nodes)) == pytest.approx(exact, rel=1e-12)


def test_quadrature_rejects_bad_input():
    with pytest.raises(ValueError):
        quadrature("simpson", 4)
    with pytest.raises(ValueError):
        quadrature("legendre", 0)
