import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisospec.cheb import RangeError
from anisospec.foliation import (ChartWindow, FoliationChart, FoliationFamily, SingularFoliation,
                                 analytic_family, center_grid, check_membership, compute_HF, compute_JF,
                                 holonomy_map, jf_direct, recentering_defect)

C = np.array([[0.3, 0.6]])


def chart(kind, frame=np.eye(2), **kw):
    return analytic_family(kind, frame, 0.1, C, **kw).charts[0]


def test_window_bounds():
    with pytest.raises(ValueError):
        ChartWindow((0, 0), 0.1, np.eye(2))


def test_chart_invariants_enforced():
    w = ChartWindow((0.5, 0.5), 0.05, np.eye(2))
    with pytest.raises(ValueError, match="normalization"):
        FoliationChart.from_function(lambda x, y: x + 0.01 + 0 * y, w, 8)
    with pytest.raises(ValueError, match="cone"):
        FoliationChart.from_function(lambda x, y: x + 2 * y, w, 8)
    with pytest.raises(SingularFoliation):
        FoliationChart.from_function(lambda x, y: x + 0.9 * np.sin(40 * x) * y, w, 16)


@given(st.floats(-0.12, 0.12))
@settings(max_examples=15, deadline=None)
def test_curvature_holonomy_closed_form(a):
    ch = chart("curvature", a=a)
    J = compute_JF(ch)
    Y = np.broadcast_to(J.y, J.values.shape)
    assert np.max(np.abs(J.values - (1 + a * Y))) < 1e-10
    assert np.max(np.abs(J.values - jf_direct(ch))) < 1e-8


def test_hf_of_curvature_family():
    a = 0.1
    ch = chart("curvature", a=a)
    hf = compute_HF(ch)
    y = np.linspace(-0.04, 0.04, 7)
    assert np.allclose(hf(0 * y + 0.01, y), a / (1 + a * y), atol=1e-12)


def test_vertical_holonomy_is_identity():
    ch = chart("vertical")
    x = np.linspace(-0.03, 0.03, 5)
    img, jac = holonomy_map(ch, -0.02, 0.04, x)
    assert np.allclose(img, x, atol=1e-15) and np.allclose(jac, 1, atol=1e-14)
    with pytest.raises(RangeError):
        holonomy_map(ch, 0, 0.2, x)


def test_slope_holonomy_translates():
    ch = chart("slope", slope=0.5)
    img, jac = holonomy_map(ch, 0.0, 0.02, np.array([0.0, 0.01]))
    assert np.allclose(img, [0.01, 0.02], atol=1e-15) and np.allclose(jac, 1)


def test_recentering_identity_slope_family():
    fam = analytic_family("slope", np.eye(2), 0.1, np.zeros((0, 2)), slope=0.25)
    xi = np.array([0.4, 0.4])
    x = 0.01
    a = fam.chart_at(xi)
    b = fam.chart_at(xi + np.array([x, 0.0]))
    assert recentering_defect(a, b, x) < 1e-8


def test_membership_budget():
    fam = analytic_family("curvature", np.eye(2), 0.1, center_grid(0.1, 16), a=0.1)
    b = check_membership(fam, 4.0, 4)
    assert b.passes and b.passes_at(2.0)
    assert b.hf_sup[0] == pytest.approx(0.1 / (1 - 0.1 * 0.05), rel=1e-10)
    vert = check_membership(analytic_family("vertical", np.eye(2), 0.1, C), 1.01, 4)
    assert vert.passes


def test_family_serialisation():
    fam = analytic_family("slope", np.eye(2), 0.1, C, slope=0.5)
    assert isinstance(fam, FoliationFamily) and len(fam) == 1
    d = fam.charts[0].to_dict()
    ch = FoliationChart.from_dict(d, check=True)
    assert np.array_equal(ch.F.c, fam.charts[0].F.c)
    assert '"generation": 0' in fam.to_json()
