import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisospec.cheb import (Cheb1, Cheb2, RangeError, cheb_diff_matrix, derivs_to_taylor, lobatto,
                            taylor_compose, taylor_exp, taylor_mul, taylor_to_derivs)


def test_lobatto_nodes_ascending_and_symmetric():
    x = lobatto(8)
    assert np.all(np.diff(x) > 0)
    assert np.allclose(x, -x[::-1], atol=1e-15)


def test_cheb1_interpolates_and_differentiates():
    f = Cheb1.from_function(np.sin, -0.3, 0.5, 20)
    x = np.linspace(-0.3, 0.5, 33)
    assert np.max(np.abs(f(x) - np.sin(x))) < 1e-14
    assert np.max(np.abs(f(x, 1) - np.cos(x))) < 1e-12
    assert np.max(np.abs(f.deriv(2)(x) + np.sin(x))) < 1e-10


def test_cheb1_range_guard():
    f = Cheb1.from_function(np.exp, 0, 1, 8)
    with pytest.raises(RangeError):
        f(1.1)
    f(1.1, strict=False)


def test_cheb1_inverse_monotone():
    f = Cheb1.from_function(lambda x: x + 0.3 * x ** 3, -1, 1, 12)
    v = np.linspace(-1.2, 1.2, 11)
    x = f.inverse(v)
    assert np.max(np.abs(f(x) - v)) < 1e-13


def test_cheb2_mixed_derivative():
    g = lambda x, y: np.exp(x) * np.cos(2 * y)
    f = Cheb2.from_function(g, -0.1, 0.1, -0.2, 0.2, 16)
    x, y = np.array([0.03, -0.07]), np.array([0.1, -0.15])
    assert np.allclose(f(x, y), g(x, y), atol=1e-15)
    assert np.allclose(f(x, y, 1, 1), -2 * np.exp(x) * np.sin(2 * y), atol=1e-11)
    d = Cheb2.from_dict(f.to_dict())
    assert np.array_equal(d.c, f.c)


def test_diff_matrix_exact_on_polynomials():
    D = cheb_diff_matrix(6, 0.5)
    x = 0.5 * lobatto(6)
    assert np.allclose(D @ x ** 4, 4 * x ** 3, atol=1e-12)


series = st.lists(st.floats(-2, 2), min_size=5, max_size=5).map(np.array)


@given(series, series)
@settings(max_examples=50, deadline=None)
def test_taylor_mul_matches_polynomial_product(a, b):
    ref = np.polynomial.polynomial.polymul(a, b)[:5]
    assert np.allclose(taylor_mul(a, b), ref, atol=1e-12)


@given(series)
@settings(max_examples=50, deadline=None)
def test_taylor_exp_of_log_series(a):
    # exp(a) exp(-a) = 1 as truncated series
    e = taylor_mul(taylor_exp(a), taylor_exp(-a))
    assert np.allclose(e, np.r_[1.0, 0, 0, 0, 0], atol=1e-9 * np.exp(2 * np.abs(a[0])))


def test_taylor_compose_sin_of_linear():
    # sin(y0 + 2t) with y0 = 0.3 against its Taylor coefficients
    y0 = 0.3
    outer = derivs_to_taylor([np.sin(y0), np.cos(y0), -np.sin(y0), -np.cos(y0)])
    inner = np.array([y0, 2.0, 0.0, 0.0])
    got = taylor_to_derivs(taylor_compose(outer, inner))
    assert np.allclose(got, [np.sin(y0), 2 * np.cos(y0), -4 * np.sin(y0), -8 * np.cos(y0)], atol=1e-14)
