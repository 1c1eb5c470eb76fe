"""
Pullback of a foliation chart under S = T^{-n} (tau = 0 graph transform).

Coordinates (x, y) live at the source centre xi = T^n zeta, (u, s) at the target
centre zeta.  S is evaluated in displacement form along the forward orbit of
zeta so that small windows keep full relative precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .cheb import Cheb1, Cheb2, RangeError, lobatto
from .dynamics import NEWTON_MAXIT, NEWTON_TOL, AnosovMap, NewtonError
from .foliation import ChartWindow, FoliationChart, FoliationFamily, analytic_family, \
    check_membership, compute_HF

SHRINK_C = 0.9
MIN_HALF = 1e-11


class GraphTransformError(RuntimeError):
    pass


class WindowOverflow(GraphTransformError):
    pass


@dataclass
class GraphTransformState:
    n: int
    zeta: np.ndarray
    xi: np.ndarray
    orbit: np.ndarray
    h_src: float
    h_tgt: float
    deg: int
    beta: Cheb1 = None
    Gbeta: Cheb1 = None
    G: Cheb1 = None
    Gamma: Cheb1 = None
    Upsilon: Cheb1 = None
    ups_nodes: np.ndarray = None
    Phi: Cheb2 = None
    phi_nodes: np.ndarray = None
    Fn_nodes: np.ndarray = None
    ds_blocks: dict = field(default_factory=dict)
    Lambda: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    def nodes(self):
        u = self.h_tgt * lobatto(self.deg)
        return u, u.copy()


@dataclass
class TransformedFoliation:
    chart: FoliationChart
    hf_n: Cheb2
    dphi_ds: np.ndarray
    dFn_ds: np.ndarray
    dFn_ds_spectral: np.ndarray
    higher: dict
    state: GraphTransformState
    diagnostics: dict

    def to_dict(self):
        d = self.chart.to_dict()
        d["hf"] = self.hf_n.to_dict()
        d["diagnostics"] = self.diagnostics
        return d


def target_half(h_src, n, lam):
    return h_src * min(1.0, SHRINK_C * lam ** (-n))


def unstable_pushforward(amap: AnosovMap, orbit, h_t, deg, eta=None):
    """Image of the target unstable axis under S^{-1} = T^n as (beta(u), G(beta(u)))."""
    u = h_t * lobatto(deg)
    z = np.column_stack([u, np.zeros_like(u)])
    img = amap.local_forward(orbit, z)
    b, gb = img[:, 0], img[:, 1]
    db = np.diff(b)
    if not (np.all(db > 0) or np.all(db < 0)):
        raise GraphTransformError("image of the unstable axis is not a graph over x")
    beta = Cheb1.from_values(b, -h_t, h_t)
    Gbeta = Cheb1.from_values(gb, -h_t, h_t)
    G = Cheb1.from_points(b, gb, deg, min(b[0], b[-1]), max(b[0], b[-1]))
    # refit residual at intermediate points
    um = 0.5 * (u[1:] + u[:-1])
    im = amap.local_forward(orbit, np.column_stack([um, np.zeros_like(um)]))
    resid = float(np.max(np.abs(G(im[:, 0], strict=False) - im[:, 1]))) if len(um) else 0.0
    dG = float(np.max(np.abs(G(G.nodes(), 1))))
    eta = amap.eta if eta is None else eta
    if eta is not None and dG > max(eta, 1e-15) * (1 + 1e-9) and dG > 1e-13:
        raise GraphTransformError(f"|DG| = {dG:.4f} exceeds eta = {eta:.4f}")
    return beta, Gbeta, G, {"refit_residual": resid, "sup_DG": dG, "beta0": float(beta(0.0)),
                            "G0": float(Gbeta(0.0))}


def _leaf_solve(chart: FoliationChart, y, target, x0=None, tol=1e-14):
    """x with F(x, y) = target (Newton)."""
    x = np.array(target if x0 is None else x0, float, copy=True)
    for _ in range(NEWTON_MAXIT):
        r = chart.F(x, y, strict=False) - target
        x = x - r / chart.F(x, y, 1, 0, strict=False)
        if np.max(np.abs(r)) <= tol * chart.half:
            return x
    raise NewtonError("leaf solve did not converge", residual=float(np.max(np.abs(r))))


def solve_gamma(chart: FoliationChart, G: Cheb1, beta: Cheb1 | None = None, Gbeta: Cheb1 | None = None,
                deg=None):
    """Gamma(x) = F(x, G(Gamma(x))) by Newton per node; Upsilon = Gamma^{-1} o beta."""
    h = chart.half
    deg = G.deg if deg is None else deg
    # domain of Gamma: x whose intersection point stays inside dom(G)
    x_lo = float(_leaf_solve(chart, np.array([G(G.a)]), np.array([G.a]))[0])
    x_hi = float(_leaf_solve(chart, np.array([G(G.b)]), np.array([G.b]))[0])
    if x_lo < -h * (1 + 1e-9) or x_hi > h * (1 + 1e-9):
        raise WindowOverflow("Gamma domain leaves the source window")
    x = 0.5 * (x_lo + x_hi) + 0.5 * (x_hi - x_lo) * lobatto(deg)
    z = x.copy()
    for it in range(NEWTON_MAXIT):
        gz = G(z, strict=False)
        r = z - chart.F(x, gz, strict=False)
        dr = 1.0 - chart.F(x, gz, 0, 1, strict=False) * G(z, 1, strict=False)
        z = z - r / dr
        if np.max(np.abs(r)) <= 1e-13 * h:
            break
    else:
        raise NewtonError("Gamma Newton did not converge", residual=float(np.max(np.abs(r))))
    res = float(np.max(np.abs(z - chart.F(x, G(z, strict=False), strict=False))))
    if res > 1e-11 * max(h, 1e-300) + 1e-300:
        raise GraphTransformError(f"Gamma residual {res:.3e} too large")
    if not np.all(np.diff(z) > 0):
        raise GraphTransformError("Gamma is not monotone (leaves intersect)")
    Gamma = Cheb1.from_values(z, x_lo, x_hi)
    ups = Upsilon = None
    if beta is not None:
        u = beta.nodes()
        bu = beta(u)
        x0 = Gamma.inverse(bu)
        # polish against the exact intersection equation F(x, G(beta(u))) = beta(u)
        gb = Gbeta(u) if Gbeta is not None else G(bu, strict=False)
        ups = _leaf_solve(chart, gb, bu, x0)
        if np.any(np.abs(ups) > h * (1 + 1e-9)):
            raise WindowOverflow("Upsilon leaves the source window")
        Upsilon = Cheb1.from_values(ups, beta.a, beta.b)
    return Gamma, Upsilon, ups, {"gamma_residual": res, "gamma_domain": [x_lo, x_hi]}


def _S_and_DS(amap, orbit, z):
    w, ds = amap.local_inverse(orbit, z)
    D = amap.local_inverse_jacobian(orbit, ds)
    return w, D


def solve_phi_and_Fn(amap: AnosovMap, st: GraphTransformState, chart: FoliationChart):
    """Newton for y with [S(F(Upsilon(u), y), y)]_s = s on target nodes."""
    u, s = st.nodes()
    U = np.broadcast_to(st.ups_nodes[:, None], (len(u), len(s)))
    Sg = np.broadcast_to(s[None, :], (len(u), len(s)))
    mu = abs(amap.mu_s)
    y = (mu ** st.n) * Sg.copy()
    scale = max(st.h_tgt, 1e-300)
    for it in range(NEWTON_MAXIT):
        z = np.stack([chart.F(U, y, strict=False), y], axis=-1)
        w, D = _S_and_DS(amap, st.orbit, z)
        r = w[..., 1] - Sg
        dr = D[..., 1, 0] * chart.F(U, y, 0, 1, strict=False) + D[..., 1, 1]
        step = r / dr
        y = y - step
        # the s-residual floor grows like lambda^n times roundoff in y, so stop on the step
        if np.max(np.abs(step)) <= 4e-16 * chart.half or np.max(np.abs(r)) <= 1e-3 * NEWTON_TOL * scale:
            break
    else:
        raise NewtonError("Phi Newton did not converge", residual=float(np.max(np.abs(r))))
    floor = 16 * np.finfo(float).eps * chart.half * float(np.max(np.abs(dr)))
    if np.max(np.abs(r)) > max(NEWTON_TOL * scale, floor):
        raise NewtonError("Phi residual above tolerance", residual=float(np.max(np.abs(r))))
    if np.any(np.abs(y) > chart.half * (1 + 1e-9)):
        raise WindowOverflow("Phi leaves the source window; shrink the target window")
    z = np.stack([chart.F(U, y, strict=False), y], axis=-1)
    w, D = _S_and_DS(amap, st.orbit, z)
    st.phi_nodes = y
    st.Fn_nodes = w[..., 0]
    st.ds_blocks = {"A": D[..., 0, 0], "B": D[..., 0, 1], "C": D[..., 1, 0], "E": D[..., 1, 1]}
    h = st.h_tgt
    st.Phi = Cheb2.from_values(y, -h, h, -h, h)
    big = float(np.max(np.abs(w)))
    if big > 2 * (2 * chart.half):
        raise WindowOverflow(f"|F^n| = {big:.3e} exceeds 2 delta0")
    # Phi(u, 0) = G(beta(u))
    j0 = np.argmin(np.abs(s))
    st.diagnostics["phi_axis_defect"] = float(np.max(np.abs(y[:, j0] - st.Gbeta(u))))
    st.diagnostics["Fn_axis_defect"] = float(np.max(np.abs(w[:, j0, 0] - u)))
    st.diagnostics["stable_residual"] = float(np.max(np.abs(w[..., 1] - Sg)))
    return st


def derivative_recursion(st: GraphTransformState, chart: FoliationChart, Fn: Cheb2, r=4):
    U = st.ups_nodes[:, None] + 0 * st.phi_nodes
    Fy = chart.F(U, st.phi_nodes, 0, 1, strict=False)
    A, B, Cb, E = (st.ds_blocks[k] for k in "ABCE")
    den = E + Cb * Fy
    if np.min(np.abs(den)) < 1e-300:
        raise GraphTransformError("E + C dF/dy singular")
    dphi = 1.0 / den
    dFn = (A * Fy + B) * dphi
    spec = Fn.on_nodes(0, 1)
    higher = {k: Fn.on_nodes(0, k) for k in range(2, r + 1)}
    return dphi, dFn, spec, higher


def transform_HF(st: GraphTransformState, chart: FoliationChart, hf: Cheb2, dphi, dFn):
    U = st.ups_nodes[:, None] + 0 * st.phi_nodes
    A, Cb = st.ds_blocks["A"], st.ds_blocks["C"]
    Lam = A - dFn * Cb
    if np.min(np.abs(Lam)) < 1e-300:
        raise GraphTransformError("Lambda vanishes")
    h = st.h_tgt
    Lf = Cheb2.from_values(Lam, -h, h, -h, h)
    dLam = Lf.on_nodes(0, 1)
    st.Lambda = Lam
    H = hf(U, st.phi_nodes, strict=False) * dphi + dLam / Lam
    return Cheb2.from_values(H, -h, h, -h, h)


MAX_STEP = 3


def pullback_chart(amap: AnosovMap, source, zeta, n: int, deg: int = 16, lam: float | None = None,
                   r: int = 4, max_step: int = MAX_STEP) -> TransformedFoliation:
    """Chart of T^{-n} W at zeta, where source(xi) returns the chart of W at xi
    (or source is a FoliationChart already centred at T^n zeta).

    Long pullbacks are composed from blocks of at most max_step iterates: the block
    Jacobian has condition number ~lambda^(2 max_step), so one long block would lose
    the contracting direction to roundoff.
    """
    zeta = np.asarray(zeta, float)
    if n < 1:
        raise ValueError("n must be >= 1")
    orbit = amap.orbit(zeta, n)
    chart = source if isinstance(source, FoliationChart) else source(orbit[-1])
    source_chart = chart
    hf = None
    steps = []
    k = n
    while k > 0:
        m = min(max_step, k)
        k -= m
        tf = _pullback_block(amap, chart, orbit[k], m, deg, lam, r, hf)
        steps.append(tf)
        chart, hf = tf.chart, tf.hf_n
    if len(steps) == 1:
        steps[0].source_chart = source_chart
        return steps[0]
    last = steps[-1]
    diag = dict(last.diagnostics)
    diag.update({"n": n, "h_src": steps[0].diagnostics["h_src"], "blocks": [t.diagnostics["n"] for t in steps],
                 "norm_dphi": float(np.prod([t.diagnostics["norm_dphi"] for t in steps])),
                 "norm_Einv": float(np.prod([t.diagnostics["norm_Einv"] for t in steps])),
                 "norm_A": float(np.prod([t.diagnostics["norm_A"] for t in steps])),
                 "extra_shrink": float(np.prod([t.diagnostics["extra_shrink"] for t in steps]))})
    last.chart.label = f"{steps[0].chart.label.split('|')[0]}|T^-{n}"
    out = TransformedFoliation(last.chart, last.hf_n, last.dphi_ds, last.dFn_ds, last.dFn_ds_spectral,
                               last.higher, last.state, diag)
    out.blocks = steps
    out.source_chart = source_chart
    return out


def _pullback_block(amap, chart, zeta, n, deg, lam, r, hf=None):
    orbit = amap.orbit(zeta, n)
    xi = orbit[-1]
    h_src = chart.half
    lam = amap.lam_linear if lam is None else lam
    h_t = target_half(h_src, n, lam)
    if h_t < MIN_HALF:
        raise WindowOverflow(f"target half-width {h_t:.2e} below resolvable scale")
    shrink_extra = 1.0
    for attempt in range(8):
        st = GraphTransformState(n, zeta, xi, orbit, h_src, h_t, deg)
        beta, Gbeta, G, d1 = unstable_pushforward(amap, orbit, h_t, deg)
        bmax = max(abs(beta(-h_t)), abs(beta(h_t)))
        if bmax > 0.98 * h_src:
            fac = 0.95 * h_src / bmax
            h_t *= fac
            shrink_extra *= fac
            continue
        st.beta, st.Gbeta, st.G = beta, Gbeta, G
        st.diagnostics.update(d1)
        try:
            Gamma, Ups, ups, d2 = solve_gamma(chart, G, beta, Gbeta, deg)
            st.Gamma, st.Upsilon, st.ups_nodes = Gamma, Ups, ups
            st.diagnostics.update(d2)
            solve_phi_and_Fn(amap, st, chart)
        except WindowOverflow:
            h_t *= 0.8
            shrink_extra *= 0.8
            continue
        break
    else:
        raise WindowOverflow("could not fit target window inside source window")
    st.diagnostics["extra_shrink"] = shrink_extra
    h = st.h_tgt
    Fn = Cheb2.from_values(st.Fn_nodes, -h, h, -h, h)
    window = ChartWindow(tuple(map(float, zeta)), h, chart.window.frame)
    new_chart = FoliationChart(window, Fn, check=True, label=f"{chart.label}|T^-{n}")
    hf = compute_HF(chart) if hf is None else hf
    dphi, dFn, spec, higher = derivative_recursion(st, chart, Fn, r)
    hf_n = transform_HF(st, chart, hf, dphi, dFn)
    A, B, Cb, E = (st.ds_blocks[k] for k in "ABCE")
    i0 = np.argmin(np.abs(st.nodes()[0]))
    diag = dict(st.diagnostics)
    diag.update({
        "n": n, "h_src": h_src, "h_tgt": h,
        "norm_Einv": float(np.max(np.abs(1.0 / E))),
        "norm_A": float(np.max(np.abs(A))),
        "norm_B": float(np.max(np.abs(B))),
        "norm_EinvC": float(np.max(np.abs(Cb / E))),
        "norm_dphi": float(np.max(np.abs(dphi))),
        "recursion_vs_spectral": float(np.max(np.abs(dFn - spec))),
        "normalization_offset": float(dFn[i0, i0]),
        "holder_ratio_dsFn": _holder_ratio(st.nodes()[0], dFn),
    })
    out = TransformedFoliation(new_chart, hf_n, dphi, dFn, spec, higher, st, diag)
    out.blocks = [out]
    return out


def _holder_ratio(u, vals):
    """Raw finite-difference ratio sup |f(u1)-f(u2)|/|u1-u2| in u (reported only)."""
    du = np.diff(u)
    dv = np.abs(np.diff(vals, axis=0))
    return float(np.max(dv / du[:, None])) if len(du) else 0.0


# -- direct leaf-pullback oracle ------------------------------------------------

def _unwrap(d):
    return d - np.round(d)


def leaf_pullback_oracle(amap: AnosovMap, chart: FoliationChart, zeta, n, u, s, nleaf=40):
    """F~(u, s): map whole leaves by T^{-n} with the global map and refit as graphs.

    Independent of the implicit solves: uses the global forward/inverse maps,
    Brent root finding for the leaf label, and a least-squares Chebyshev refit.
    Returns (F~ values (len(u), len(s)), d_s F~ values).
    """
    P, Pinv = amap.P, amap.Pinv
    zeta = np.asarray(zeta, float)
    xi = np.asarray(chart.window.center, float)
    h = chart.half
    out = np.empty((len(u), len(s)))
    dout = np.empty((len(u), len(s)))
    smax = np.max(np.abs(s))
    for i, ui in enumerate(u):
        p = amap.apply(zeta + Pinv @ np.array([ui, 0.0]), n)
        bz = P @ _unwrap(p - xi)
        x0 = brentq(lambda x: float(chart.F(x, bz[1], strict=False)) - bz[0], -1.5 * h, 1.5 * h,
                    xtol=1e-17, rtol=1e-15, maxiter=200)
        ym = min(h, 2.0 * smax * amap.lam_linear ** (-n) + abs(bz[1]))
        for _ in range(20):
            yk = bz[1] + ym * np.cos(np.pi * (np.arange(nleaf + 1) + 0.5) / (nleaf + 1))
            pts = np.column_stack([chart.F(np.full_like(yk, x0), yk, strict=False), yk])
            q = amap.apply(xi + pts @ Pinv.T, -n)
            w = _unwrap(q - zeta) @ P.T
            if w[:, 1].min() <= -smax * 1.05 and w[:, 1].max() >= smax * 1.05:
                break
            ym *= 1.5
        fit = Cheb1.from_points(w[:, 1], w[:, 0], min(nleaf, 24))
        out[i] = fit(s)
        dout[i] = fit(s, 1)
    return out, dout


def oracle_chart(amap, chart, zeta, n, h_t, deg):
    u = h_t * lobatto(deg)
    vals, dvals = leaf_pullback_oracle(amap, chart, zeta, n, u, u)
    Fn = Cheb2.from_values(vals, -h_t, h_t, -h_t, h_t)
    window = ChartWindow(tuple(map(float, zeta)), h_t, chart.window.frame)
    return FoliationChart(window, Fn, check=False, label="oracle"), vals, dvals


# -- families -------------------------------------------------------------------

def iterate_foliation(family: FoliationFamily, amap: AnosovMap, n: int, L: float, r: int = 4,
                      deg: int = 16, lam=None, pool=None):
    """One pullback generation T^{-n} over all chart centres; budget audit at L and L/2."""
    def gen(zeta):
        return pullback_chart(amap, family.chart_at, zeta, n, deg, lam, r)

    mapper = map if pool is None else pool.map
    tfs = []
    for i, tf in enumerate(mapper(gen, list(family.centers))):
        tfs.append(tf)
    charts = [t.chart for t in tfs]
    budget = check_membership(charts, L, r, hfs=[t.hf_n for t in tfs])
    new = FoliationFamily(charts, family.centers, family.generation + n,
                          lambda z: gen(z).chart, f"{family.name}|T^-{n}", family.frame,
                          dict(family.params, generation=family.generation + n))
    new.transformed = tfs
    return new, budget, budget.passes_at(L / 2)


def budget_halving_search(family, amap, L=4.0, r=4, n_max=12, deg=16, lam=None, pool=None):
    """Smallest n <= n_max whose pullback passes the L/2 budget; returns (n0, log)."""
    base = check_membership(family, L, r)
    log = []
    if not base.passes:
        raise GraphTransformError("input family does not pass the budget at L")
    for n in range(1, n_max + 1):
        fam, budget, ok = iterate_foliation(family, amap, n, L, r, deg, lam, pool)
        log.append({"n": n, "passes_half": ok, **budget.to_dict()})
        if ok:
            return n, log
    return None, log


def torus_vertical_slope(amap):
    """Slope dx/dy (frame) of the torus-vertical direction (0, 1)."""
    v = amap.P @ np.array([0.0, 1.0])
    return float(v[0] / v[1])


def power_method_slope(amap, zeta, M=40, v0=(0.5, 1.0)):
    """Stable direction at zeta by iterating DT^{-1} backwards along the orbit of zeta
    from the cone vector v0 (frame); returns slope dx/dy in the frame."""
    zeta = np.atleast_2d(np.asarray(zeta, float))
    orb = amap.orbit(zeta, M)
    v = np.broadcast_to(amap.Pinv @ np.asarray(v0, float), zeta.shape).copy()
    for k in range(M - 1, -1, -1):
        J = amap.dT(orb[k])
        v = np.linalg.solve(J, v[..., None])[..., 0]
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
    w = v @ amap.P.T
    return w[..., 0] / w[..., 1]


def stable_direction_limit(amap: AnosovMap, tol=1e-10, centers=None, deg=6, max_gen=100,
                           delta0=0.1, start_slope=None, oracle_extra=25):
    """Iterate pullbacks of the torus-vertical foliation until the centre slopes settle."""
    if centers is None:
        centers = np.array([[0.13, 0.27], [0.5, 0.5], [0.71, 0.09], [0.33, 0.81]])
    centers = np.asarray(centers, float)
    c = torus_vertical_slope(amap) if start_slope is None else start_slope
    fam = analytic_family("slope", amap.P, delta0, centers, deg=max(deg, 6), slope=c)
    prev = np.full(len(centers), c)
    log = []
    slopes = prev
    converged = False
    for g in range(1, max_gen + 1):
        cur = np.empty(len(centers))
        for i, z in enumerate(centers):
            tf = pullback_chart(amap, fam.chart_at, z, g, deg, r=2)
            i0 = np.argmin(np.abs(tf.state.nodes()[0]))
            cur[i] = tf.dFn_ds[i0, i0]
        change = float(np.max(np.abs(cur - prev)))
        log.append({"generation": g, "sup_slope_change": change, "sup_slope": float(np.max(np.abs(cur)))})
        prev = slopes = cur
        if change < tol:
            converged = True
            break
    if not converged:
        raise GraphTransformError(f"no convergence within {max_gen} generations: {log[-3:]}")
    ch = np.array([e["sup_slope_change"] for e in log])
    gens = np.array([e["generation"] for e in log])
    ok = ch > 1e-13
    if ok.sum() >= 2:
        k = np.polyfit(gens[ok], np.log(ch[ok]), 1)
        rate = float(np.exp(k[0]))
    else:
        rate = 0.0
    oracle = power_method_slope(amap, centers, M=len(log) + oracle_extra)
    return {"slopes": slopes, "oracle": oracle, "centers": centers, "rate": rate, "log": log,
            "oracle_defect": float(np.max(np.abs(slopes - oracle))), "start_slope": c}


def oracle_comparison(amap: AnosovMap, source, zeta, n: int, deg: int = 16):
    """Sup differences between the recursion route and the leaf-pullback oracle for
    F^n, d_s F^n and (relative) H^{F^n} on the target nodes."""
    tf = pullback_chart(amap, source, zeta, n, deg)
    oc, vals, dvals = oracle_chart(amap, tf.source_chart, zeta, n, tf.chart.half, deg)
    ho = compute_HF(oc).on_nodes()
    hn = tf.hf_n.on_nodes()
    return {"n": n, "zeta": [float(v) for v in np.asarray(zeta, float)], "h_tgt": tf.chart.half,
            "F_error": float(np.max(np.abs(tf.state.Fn_nodes - vals))),
            "dsF_error": float(np.max(np.abs(tf.dFn_ds - dvals))),
            "H_relative_error": float(np.max(np.abs(ho - hn)) / max(np.max(np.abs(ho)), 1e-300)),
            "recursion_vs_spectral": tf.diagnostics["recursion_vs_spectral"]}
