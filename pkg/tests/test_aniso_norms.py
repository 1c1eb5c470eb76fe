import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisospec import aniso_norms as an
from anisospec.foliation import analytic_family
from anisospec.trig import DensityField, TrigField

EYE = np.eye(2)
C = np.array([[0.3, 0.6], [0.8, 0.1]])


def vertical():
    return analytic_family("vertical", EYE, 0.1, C)


def test_weighted_norm_examples():
    assert an.weighted_c_norm(TrigField.constant(3.0, 1), 2, 4) == pytest.approx(48)
    s = TrigField.monomial(1, 0, "sin", 1)
    assert an.weighted_c_norm(s, 1, 2) == pytest.approx(2 + 2 * np.pi, rel=1e-12)
    with pytest.raises(ValueError):
        an.NormConfig(varpi=1.5)


@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 3))
@settings(max_examples=60, deadline=None)
def test_banach_algebra(seed, rho):
    rng = np.random.Generator(np.random.Philox(key=seed))
    a, b = TrigField.random(3, rng), TrigField.random(3, rng)
    lhs = an.weighted_c_norm(a * b, rho, 4)
    assert lhs <= an.weighted_c_norm(a, rho, 4) * an.weighted_c_norm(b, rho, 4) * (1 + 1e-12)


def test_leafwise_norm_examples():
    W = vertical()
    c = TrigField.constant(2.0, 1)
    assert an.leafwise_norm(c, W, 2, 4) == pytest.approx(32)
    sy = TrigField.monomial(0, 1, "sin", 1)
    sx = TrigField.monomial(1, 0, "sin", 1)
    # leaf restriction sin(2 pi y) over the window has sup close to (not above) 1
    v = an.leafwise_norm(sy, W, 0, 4)
    assert 0.9 < v <= 1 + 1e-14
    # sin(2 pi x) is constant on vertical leaves: ||.||_q = varpi^q sup|sin|
    assert an.leafwise_norm(sx, W, 1, 4) <= 4 * (1 + 1e-14)


def test_leafwise_below_c_norm(rng):
    W = analytic_family("curvature", EYE, 0.1, C, a=0.1)
    for _ in range(5):
        f = TrigField.random(3, rng)
        assert an.leafwise_norm(f, W, 1, 4) <= 2 * an.weighted_c_norm(f, 1, 4)


def test_mollifier_constant_and_cos():
    W = vertical()
    s = an.LeafSampler(W)
    c = TrigField.constant(1.5, 1)
    pe, rep = an.mollify_along_leaves(c, W, 0.05, sampler=s)
    assert rep["err_qm1"] < 1e-14
    # cos(2 pi y): phi_eps = c(eps) cos(2 pi y) for the symmetric bump
    cy = TrigField.monomial(0, 1, "cos", 1)
    eps = 0.1
    pe, _ = an.mollify_along_leaves(cy, W, eps, sampler=s)
    S = pe.leaf_series(s, 1)[..., 0]
    S0 = an.leaf_series(cy, s, 1)[..., 0]
    assert np.max(np.abs(S - an.bump_transform(eps) * S0)) < 1e-13
    with pytest.raises(ValueError):
        an.mollify_along_leaves(cy, W, 0.5)


def test_mollifier_first_order_halving():
    W = vertical()
    s = an.LeafSampler(W)
    cy = TrigField.monomial(0, 1, "cos", 1)
    errs = [an.mollify_along_leaves(cy, W, e, center=0.5, sampler=s)[1]["err_qm1"]
            for e in (0.1, 0.05, 0.025)]
    for a, b in zip(errs, errs[1:]):
        assert 1.6 <= a / b <= 2.4


def test_heat_smoothing():
    f = TrigField.monomial(1, 0, "cos", 1)
    t = 0.01
    g = an.heat_smooth_unstable(f, t)
    assert np.allclose(g.c, np.exp(-4 * np.pi ** 2 * t) * f.c)
    c = TrigField.constant(2.0, 2)
    assert np.array_equal(an.heat_smooth_unstable(c, 0.3).c, c.c)
    with pytest.raises(ValueError):
        an.heat_smooth_unstable(f, 0)


def test_decomposition_axis_split(cat0, rng):
    # vertical leaves in the adapted frame: f = 0; for the linear map the pushed
    # unstable graph is horizontal in the frame: g = 0
    ch = analytic_family("vertical", cat0.P, 0.1, C).charts[0]
    phi = TrigField.random(3, rng, 2)
    d = an.decompose_stable_unstable(phi, ch, cat0, 2)
    assert np.max(np.abs(d.phi_u[..., 1])) < 1e-12 and np.max(np.abs(d.phi_s[..., 0])) < 1e-12
    assert d.reconstruction_residual <= 1e-10 and d.tangency_residual <= 1e-8


def test_divergence_identity(cat0, cat05, rng):
    phi = TrigField.random(6, rng, 2)
    assert an.divergence_identity_check(cat0, 2, phi)["unstable_residual"] < 1e-10
    const = TrigField.zeros(1, 2)
    const.c[:, 1, 1] = [1.0, -2.0]
    r = an.divergence_identity_check(cat05, 1, const)
    assert r["unstable_residual"] < 1e-10
    ch = analytic_family("curvature", cat05.P, 0.1, C, a=0.1).charts[0]
    r = an.divergence_identity_check(cat05, 1, phi, chart=ch)
    assert r["unstable_residual"] < 1e-6 and r["leafwise_residual"] < 1e-6


def test_norm_estimates(small_dicts):
    D0, D1 = small_dicts
    one = DensityField.trig(TrigField.constant(1.0, 1))
    r = an.estimate_norm_1q(one, D0, D1)
    assert r.norm_0q >= 0.25 - 1e-12 and r.lower_bound
    assert r.norm_star_1q < 1e-13                       # integration by parts
    h = DensityField.trig(TrigField.monomial(0, 1, "cos", 1))
    pv = an.pairings(h, D0)
    assert np.all(np.abs(pv)[:, None] / D0.norms <= an.estimate_norm_0q(h, D0).norm_0q + 1e-15)
    with pytest.raises(ValueError):
        an.estimate_norm_1q(h, D0, D0)


def test_indicator_norm_grows_toward_perimeter(small_dicts):
    from anisospec.transfer_op import smoothed_indicator
    _, D1 = small_dicts
    vals = []
    for t in (0.01, 0.003, 0.001):
        h = DensityField.trig(smoothed_indicator(3, t))
        vals.append(an.estimate_norm_1q(h, small_dicts[0], D1).norm_star_1q)
    assert vals[0] < vals[1] < vals[2]


def test_dictionary_is_deterministic(small_dicts, cat05):
    D0, _ = small_dicts
    kw = dict(K=3, n_random=4, slopes=(0.5,), curvatures=(0.1,), ncent=4, nx=6, ny=12)
    again = an.build_dictionary(an.DictionarySpec(**kw), cat05.P)
    assert np.array_equal(again.norms, D0.norms)
    assert D0.pair_info(0)["pair"] == 0


def test_contraction_cat_map(cat0):
    kw = dict(K=2, n_random=2, slopes=(0.5,), curvatures=(), ncent=3, nx=4, ny=8)
    D = an.build_dictionary(an.DictionarySpec(**kw), cat0.P)
    fit = an.verify_test_contraction(cat0, D, range(1, 5), centers=np.array([[0.2, 0.3]]))
    assert fit.violations == 0
    assert fit.sigma <= fit.nu + 0.1


@pytest.mark.parametrize("vector", [False, True])
def test_translate_groups_match_direct_evaluation(cat05, vector):
    # characters on a translated leaf pick up exp(2 pi i k.c); the direct route evaluates
    # every chart separately
    spec = an.DictionarySpec(K=3, n_random=2, vector=vector)
    bank = an.dictionary_bank(spec)
    for fam in an.dictionary_families(spec, cat05.P)[::3]:
        s = an.LeafSampler(fam, 4, 6, 8)
        a = an.sampler_bank_norms(bank, s, [1, 2], 4.0)
        b = an.bank_leaf_norms(bank, s.jets(3), [1, 2], 4.0, grid=(6, 8))
        assert np.max(np.abs(a - b) / b) < 1e-13


def test_certificate_and_restriction(small_dicts):
    D0, D1 = small_dicts
    assert D0.certificate() < 0.01
    S = D1.restrict(2, 1)
    assert 0 < len(S) < len(D1) and S.nfol == D1.nfol
    h = DensityField.trig(TrigField.monomial(1, 1, "cos", 1))
    # a sub-dictionary can only lower the supremum
    assert an.estimate_norm_1q(h, D0.restrict(2, 1), S).norm_minus_1q <= \
        an.estimate_norm_1q(h, D0, D1).norm_minus_1q + 1e-15
