import numpy as np
import pytest

from anisospec.foliation import analytic_family, compute_HF
from anisospec.graph_transform import (budget_halving_search, oracle_comparison, power_method_slope,
                                       pullback_chart, stable_direction_limit, target_half)

Z = np.array([0.3, 0.6])


def fam(amap, kind="curvature", **kw):
    return analytic_family(kind, amap.P, 0.1, np.array([Z]), **kw)


def test_target_half_shrinks():
    assert target_half(0.05, 2, 2.618) == pytest.approx(0.05 * 0.9 / 2.618 ** 2)


def test_cat_map_vertical_contraction(cat0):
    lam = cat0.lam_linear
    tf = pullback_chart(cat0, fam(cat0, "vertical").chart_at, Z, 2)
    assert np.max(np.abs(tf.dphi_ds - lam ** -2)) < 1e-14
    # the stable axis is invariant: F^n stays vertical
    assert np.max(np.abs(tf.dFn_ds)) < 1e-12


@pytest.mark.parametrize("n", [1, 3, 5])
def test_cat_map_curvature_scaling(cat0, n):
    lam = cat0.lam_linear
    tf = pullback_chart(cat0, fam(cat0, a=0.1).chart_at, Z, n)
    i0 = np.argmin(np.abs(tf.state.nodes()[0]))
    assert tf.hf_n.on_nodes()[i0, i0] == pytest.approx(0.1 * lam ** -n, rel=1e-9)
    assert tf.diagnostics["norm_dphi"] == pytest.approx(lam ** -n, rel=1e-9)


def test_long_pullbacks_are_blocked(cat05):
    tf = pullback_chart(cat05, fam(cat05, a=0.1).chart_at, Z, 7)
    assert tf.diagnostics["blocks"] == [3, 3, 1]
    assert len(tf.blocks) == 3


@pytest.mark.parametrize("n", [1, 2])
def test_oracle_agreement_small_n(cat05, n):
    r = oracle_comparison(cat05, fam(cat05, a=0.1).chart_at, Z, n)
    assert r["F_error"] < 1e-12 and r["dsF_error"] < 1e-10 and r["H_relative_error"] < 1e-6


def test_power_method_slope_is_stable_direction(cat0):
    s = power_method_slope(cat0, np.array([[0.2, 0.2]]), M=30)
    assert abs(s[0]) < 1e-12           # the stable eigendirection is the frame's vertical axis


def test_stable_limit_cat_rate(cat0):
    r = stable_direction_limit(cat0)
    assert r["oracle_defect"] < 1e-9
    assert r["rate"] == pytest.approx(cat0.lam_linear ** -2, rel=0.1)


def test_budget_search_finds_n0(cat05):
    from anisospec.foliation import center_grid
    f = analytic_family("curvature", cat05.P, 0.1, center_grid(0.1, 16), a=0.1)
    n0, log = budget_halving_search(f, cat05, 4.0, 4, 4)
    assert n0 is not None and n0 <= 4 and log[-1]["passes_half"]
