import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisospec.dynamics import (AnosovMap, ConeField, ConeViolation, TrigTerm, check_cone_invariance,
                                estimate_hyperbolicity, probe_grid, torus_distance)

LAM = (3 + np.sqrt(5)) / 2
pts = st.tuples(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True)).map(np.array)


def test_cat_map_on_points(cat0):
    p = np.array([0.3, 0.4])
    assert np.allclose(cat0.apply(p), [0.0, 0.7])
    assert np.allclose(cat0.apply(cat0.apply(p), -1), p)


@given(pts, st.integers(1, 4))
@settings(max_examples=40, deadline=None)
def test_round_trip_perturbed(p, n):
    m = AnosovMap.cat(0.05, check=False)
    back = m.apply(m.apply(p, n), -n)
    assert torus_distance(back, p) < 1e-11


@given(pts)
@settings(max_examples=30, deadline=None)
def test_jacobian_matches_finite_difference(p):
    m = AnosovMap.cat(0.05, check=False)
    h = 1e-6
    J = m.jacobian(p, 2)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        d = (m.apply(p + e, 2) - m.apply(p - e, 2))
        d -= np.round(d)
        assert np.allclose(d / (2 * h), J[:, j], atol=1e-6)


def test_negative_jacobian_is_inverse(cat05):
    p = np.array([0.11, 0.83])
    J = cat05.jacobian(p, 3)
    Jm = cat05.jacobian(cat05.apply(p, 3), -3)
    assert np.allclose(Jm @ J, np.eye(2), atol=1e-11)


def test_constructor_validation():
    with pytest.raises(ValueError, match="trace"):
        AnosovMap([[1, 1], [0, 1]])
    with pytest.raises(ValueError, match="determinant"):
        AnosovMap([[2, 0], [0, 3]])
    with pytest.raises(ValueError):
        AnosovMap([[2.5, 1], [1, 1]])
    big = [TrigTerm(0, 0.4, (1, 0)), TrigTerm(1, 0.4, (0, 1))]
    with pytest.raises((ConeViolation, ValueError)):
        AnosovMap([[2, 1], [1, 1]], big)


def test_cone_invariance_values(cat0, cat05):
    r0 = check_cone_invariance(cat0)
    assert r0.holds and abs(r0.measured_eta - LAM ** -2) < 1e-10
    r = check_cone_invariance(cat05)
    assert r.holds and r.measured_eta == pytest.approx(0.1595, abs=1e-4)
    narrow = check_cone_invariance(cat0, ConeField(0.5, cat0.P))
    assert narrow.holds
    with pytest.raises(ValueError):
        ConeField(1.5)


def test_hyperbolicity_cat_map(cat0):
    est = estimate_hyperbolicity(cat0)
    assert abs(est.lam - LAM) < 1e-10
    assert abs(est.nu - 1 / LAM) < 1e-10
    assert "c_zero" in est.low_confidence


def test_hyperbolicity_perturbed_is_deterministic(cat05):
    a = estimate_hyperbolicity(cat05, seed=3)
    b = estimate_hyperbolicity(cat05, seed=3)
    assert a.to_dict() == b.to_dict()
    assert 1 < a.lam < a.lambda_plus and 0 < a.nu < 1


def test_local_inverse_and_forward(cat05):
    orb = cat05.orbit(np.array([0.2, 0.7]), 3)
    z = np.array([[1e-3, -2e-3], [0.0, 5e-4]])
    w, ds = cat05.local_inverse(orb, z)
    assert np.allclose(cat05.local_forward(orb, w), z, atol=1e-16, rtol=1e-12)


def test_probe_grid_shape():
    g = probe_grid(4)
    assert g.shape == (16, 2) and g.min() > 0 and g.max() < 1
