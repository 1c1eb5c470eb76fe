import numpy as np
from hypothesis import given, settings, strategies as st

from anisospec.trig import DensityField, TrigField, axis_exps, taylor_along_curve


def test_monomial_values():
    f = TrigField.monomial(1, 2, "sin", 3)
    p = np.array([[0.1, 0.2], [0.7, 0.4]])
    assert np.allclose(f(p)[0], np.sin(2 * np.pi * (p[:, 0] + 2 * p[:, 1])), atol=1e-15)


def test_grid_and_fft_roundtrip(rng):
    f = TrigField.random(5, rng, 2)
    g = TrigField.from_grid(f.grid(16), 5)
    assert np.allclose(g.c, f.c, atol=1e-14)


def test_product_and_integral(rng):
    a, b = TrigField.random(3, rng), TrigField.random(4, rng)
    M = 32
    ref = np.mean(a.grid(M)[0] * b.grid(M)[0])
    assert abs(a.integrate(b)[0] - ref) < 1e-13
    assert abs((a * b).mean()[0] - ref) < 1e-13


def test_derivative_and_divergence(rng):
    f = TrigField.random(4, rng, 2)
    p = rng.random((5, 2))
    h = 1e-6
    num = (f(p + [h, 0])[0] - f(p - [h, 0])[0] + f(p + [0, h])[1] - f(p - [0, h])[1]) / (2 * h)
    assert np.allclose(f.div()(p)[0], num, rtol=1e-6, atol=1e-6)


@given(st.floats(0.001, 0.5), st.floats(0.001, 0.5))
@settings(max_examples=20, deadline=None)
def test_heat_semigroup(t, s):
    f = TrigField.random(4, np.random.Generator(np.random.Philox(key=3)))
    a = f.heat_x(t).heat_x(s)
    b = f.heat_x(t + s)
    assert np.max(np.abs(a.c - b.c)) < 1e-12


def test_taylor_along_curve_matches_direct(rng):
    f = TrigField.random(3, rng)
    # curve y -> (0.2 + 0.1 y^2, 0.3 + y) around y = 0
    m = 4
    X = np.zeros((1, 2, m))
    X[0, 0, 0], X[0, 0, 2] = 0.2, 0.1
    X[0, 1, 0], X[0, 1, 1] = 0.3, 1.0
    S = taylor_along_curve(f, X, m)
    h = 1e-4
    ys = np.array([-h, 0, h])
    pts = np.stack([0.2 + 0.1 * ys ** 2, 0.3 + ys], -1)
    v = f(pts)[0]
    assert abs(S[0, 0, 0] - v[1]) < 1e-14
    assert abs(S[0, 0, 1] - (v[2] - v[0]) / (2 * h)) < 1e-3
    E = axis_exps(X, 3, m)
    assert np.allclose(taylor_along_curve(f, X, m, E), S)


def test_density_moments_trig_and_cells(rng):
    f = TrigField.random(3, rng)
    d = DensityField.trig(f)
    phi = TrigField.random(3, rng)
    M = 32
    assert abs(d.pair(phi)[0] - np.mean(f.grid(M)[0] * phi.grid(M)[0])) < 1e-13
    # cell averages of a field pair exactly with a monomial
    N = 8
    cells = np.zeros((N, N))
    cells[2, 5] = N * N                                  # unit mass in one cell
    dc = DensityField.cells(cells)
    e = TrigField.monomial(1, 0, "cos", 1)
    x0, x1 = 2 / N, 3 / N
    ref = N * (np.sin(2 * np.pi * x1) - np.sin(2 * np.pi * x0)) / (2 * np.pi)
    assert abs(dc.pair(e)[0] - ref) < 1e-13
    assert abs(dc.integral() - 1) < 1e-14
