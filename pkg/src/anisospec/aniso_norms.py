"""
Weighted C^rho norms, leafwise test-function norms and dictionary estimators of
the anisotropic norms ||h||_{0,q}, ||h||*_{1,q}.

Every dictionary estimate is a lower bound of the corresponding supremum: the
supremum is taken over a finite set of (foliation, test function) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import factorial

import numpy as np
from scipy.integrate import quad

from .cheb import Cheb2, derivs_to_taylor, lobatto, lobatto_interp, taylor_compose, taylor_mul
from .dynamics import AnosovMap
from .foliation import FoliationChart, FoliationFamily, analytic_family, compute_HF
from .trig import DensityField, TrigField, axis_exps, taylor_along_curve


class ConditioningError(RuntimeError):
    pass


@dataclass
class NormConfig:
    q: int = 1
    varpi: float = 4.0
    r: int = 4
    a: float = 1.0

    def __post_init__(self):
        if self.varpi < 2:
            raise ValueError("varpi must be >= 2")
        if not 0 <= self.q <= self.r:
            raise ValueError("need 0 <= q <= r")


def _fac(m):
    return np.array([factorial(k) for k in range(m)], float)


# -- C^rho norm on the torus ----------------------------------------------------

def weighted_c_norm(field: TrigField, rho: int, varpi: float, M: int | None = None) -> float:
    """sum_k varpi^(rho-k) max_{|alpha|=k} sup |d^alpha field| (sup over an M x M grid)."""
    M = max(64, 4 * field.K + 4) if M is None else M
    total = 0.0
    for k in range(rho + 1):
        s = 0.0
        for a in range(k + 1):
            g = field.grid(M, a, k - a)
            s = max(s, float(np.max(np.abs(g))))
        total += varpi ** (rho - k) * s
    return total


# -- leaf sampling ---------------------------------------------------------------

class LeafSampler:
    """Leaves of a family sampled on charts centred on an ncent x ncent torus grid,
    nx + 1 leaf labels per chart and ny + 1 points per leaf."""

    def __init__(self, family: FoliationFamily, ncent=10, nx=8, ny=16, offset=0.5):
        self.family = family
        g = (np.arange(ncent) + offset) / ncent
        C1, C2 = np.meshgrid(g, g, indexing="ij")
        self.centers = np.column_stack([C1.ravel(), C2.ravel()])
        self.charts = [family.chart_at(c) for c in self.centers]
        self.nx, self.ny, self.ncent = nx, ny, ncent
        self._cache = {}

    @property
    def delta0(self):
        return 2 * self.charts[0].half

    def refined(self, factor=2, centers=False):
        """Same family on a factor-times finer node grid per chart (and optionally more charts)."""
        nc = self.ncent * factor if centers else self.ncent
        return LeafSampler(self.family, nc, self.nx * factor, self.ny * factor)

    def jets(self, m, yshift=0.0):
        """Torus Taylor jets of the leaf curves, shape (leaves, ny + 1, 2, m)."""
        key = (m, float(yshift))
        if key in self._cache:
            return self._cache[key]
        X = np.empty((len(self.charts), self.nx + 1, self.ny + 1, 2, m))
        for idx, J, C in self.translate_groups(m, yshift):
            X[idx] = J[None]
            X[idx, ..., :, 0] += C[:, None, None, :]
        X = X.reshape((-1,) + X.shape[2:])
        if len(self._cache) < 64:
            self._cache[key] = X
        return X


    def translate_groups(self, m, yshift=0.0):
        """Charts sharing one local polynomial (analytic families) are translates of each
        other: yields (chart indices, base jets (nx+1, ny+1, 2, m) about the origin, centres)."""
        groups = {}
        for i, ch in enumerate(self.charts):
            key_c = (ch.F.c.tobytes(), ch.half, ch.window.frame.tobytes())
            groups.setdefault(key_c, []).append(i)
        for idx in groups.values():
            ch = self.charts[idx[0]]
            h = ch.half
            x = h * lobatto(self.nx)
            y = h * lobatto(self.ny) + yshift
            J = chart_leaf_jets(ch, x, y, m)
            J[..., :, 0] -= np.asarray(ch.window.center, float)
            yield np.array(idx), J, self.centers[idx]


def chart_leaf_jets(chart: FoliationChart, x, y, m, y_series=None):
    """Jets t -> frame point (F(x, y + t), y + t) mapped to the torus.

    With y_series (shape (len(x), len(y), m)) the leaf parameter is itself a
    series, i.e. the jet of t -> F(x, Y(t)) along a reparametrisation.
    Returns (len(x), len(y), 2, m).
    """
    X, Y = np.meshgrid(x, y, indexing="ij")
    Fd = [chart.F(X, Y, 0, k, strict=False) for k in range(m)]
    FT = derivs_to_taylor(Fd)
    YT = np.zeros(X.shape + (m,))
    YT[..., 0] = Y
    if m > 1:
        YT[..., 1] = 1.0
    if y_series is not None:
        FT = taylor_compose(FT, y_series)
        YT = y_series
    Z = np.stack([FT, YT], axis=-2)                    # frame jets (.., 2, m)
    Pinv = np.linalg.inv(chart.window.frame)
    T = np.einsum("ij,...jm->...im", Pinv, Z)
    T[..., :, 0] += np.asarray(chart.window.center, float)
    return T


# -- test-function banks ------------------------------------------------------------

@dataclass
class BankEntry:
    kind: str                      # 'cos' | 'sin' | 'random'
    k: tuple = (0, 0)
    comp: int = 0
    field: TrigField | None = None
    seed: int | None = None
    index: int | None = None

    def descriptor(self):
        if self.kind == "random":
            return {"kind": "random", "seed": self.seed, "index": self.index}
        return {"kind": self.kind, "k": list(self.k), "comp": self.comp}


class FieldBank:
    """Ordered list of scalar or 2-vector trigonometric test functions."""

    def __init__(self, entries, ncomp=1, K=0):
        self.entries = list(entries)
        self.ncomp = ncomp
        self.K = max([K] + [e.field.K for e in self.entries if e.field is not None]
                     + [max(abs(e.k[0]), abs(e.k[1])) for e in self.entries if e.field is None])

    def __len__(self):
        return len(self.entries)

    def trig(self, i) -> TrigField:
        e = self.entries[i]
        if e.field is not None:
            return e.field
        return TrigField.monomial(e.k[0], e.k[1], e.kind, K=self.K, ncomp=self.ncomp, comp=e.comp)

    def coeff_stack(self):
        K = self.K
        out = np.zeros((len(self), self.ncomp, 2 * K + 1, 2 * K + 1), complex)
        for i in range(len(self)):
            out[i] = self.trig(i).to_K(K).c
        return out

    def series(self, X, m, idx, E=None):
        """Taylor series of entries idx along jets X (P..., 2, m): (len(idx), ncomp, P..., m)."""
        K = self.K
        if E is None:
            E = axis_exps(X, K, m)
        e1, e2 = E
        out = np.zeros((len(idx), self.ncomp) + X.shape[:-2] + (m,))
        last = None                                   # cos/sin entries of one frequency are adjacent
        for j, i in enumerate(idx):
            e = self.entries[i]
            if e.field is not None:
                out[j] = taylor_along_curve(e.field, X, m, E)
            else:
                if last is None or last[0] != e.k:
                    last = (e.k, taylor_mul(e1[..., K + e.k[0], :], e2[..., K + e.k[1], :]))
                ex = last[1]
                out[j, e.comp] = ex.real if e.kind == "cos" else ex.imag
        return out


def series_norm(S, q, varpi):
    """Leafwise weighted C^q norm from series S (..., ncomp, leaves, samples, m>=q+1);
    the sup over leaves of sum_comp sum_k varpi^(q-k) sup_samples |d^k|."""
    d = np.abs(S[..., : q + 1] * _fac(q + 1))
    sup = d.max(axis=-2)                                      # (..., ncomp, leaves, q+1)
    w = varpi ** (q - np.arange(q + 1.0))
    per_leaf = (sup * w).sum(axis=-1).sum(axis=-2)            # (..., leaves)
    return per_leaf.max(axis=-1)


def series_parts(S, q, varpi):
    """(order-0 part, derivative part) of the weighted C^q norm, each maximised over leaves
    at the leaf realising the total."""
    d = np.abs(S[..., : q + 1] * _fac(q + 1))
    sup = d.max(axis=-2)
    w = varpi ** (q - np.arange(q + 1.0))
    parts = (sup * w).sum(axis=-3)                            # (..., leaves, q+1)
    tot = parts.sum(axis=-1)
    j = tot.argmax(axis=-1)
    sel = np.take_along_axis(parts, j[..., None, None], axis=-2)[..., 0, :]
    return sel[..., 0], sel[..., 1:].sum(axis=-1)


def _upsample(S, grid, fine):
    """Interpolate chart-grid series (..., charts*(nx+1), ny+1, m) onto fine*nx x fine*ny
    Lobatto grids, so that leaf sups approximate the sup over the whole chart."""
    nx, ny = grid
    Ix, Iy = lobatto_interp(nx, fine * nx), lobatto_interp(ny, fine * ny)
    sh = S.shape
    m = sh[-1]
    T = S.reshape(-1, nx + 1, (ny + 1) * m)
    T = np.matmul(Ix, T).reshape(-1, ny + 1, m)              # (.. fx, ny+1, m)
    T = np.matmul(Iy, T)                                      # (.. fx, fy, m)
    return T.reshape(sh[:-3] + (-1, fine * ny + 1, m))


def bank_leaf_norms(bank: FieldBank, X, qs, varpi, chunk=24, grid=None, fine=4):
    """Leafwise norms of every bank entry at orders qs.  With grid = (nx, ny) the series are
    interpolated to a fine grid in each chart before the sup is taken.  Monomial entries
    differing only in the nonzero component share one evaluation."""
    m = max(qs) + 1
    out = np.zeros((len(bank), len(qs)))
    E = axis_exps(X, bank.K, m)
    first = {}
    todo = []
    for i, e in enumerate(bank.entries):
        if e.field is None:
            key = (e.kind, tuple(e.k))
            if key in first:
                continue
            first[key] = i
        todo.append(i)
    if grid is not None:
        chunk = max(1, chunk // fine)
    for s in range(0, len(todo), chunk):
        idx = todo[s:s + chunk]
        S = bank.series(X, m, idx, E)
        if grid is not None:
            S = _upsample(S, grid, fine)
        for j, q in enumerate(qs):
            out[idx, j] = series_norm(S, q, varpi)
    for i, e in enumerate(bank.entries):
        if e.field is None:
            out[i] = out[first[(e.kind, tuple(e.k))]]
    return out


def _phases(K, C):
    """exp(2 pi i k C_j) for |k| <= K: two arrays (ncharts, 2K+1)."""
    k = np.arange(-K, K + 1)
    return np.exp(2j * np.pi * np.outer(C[:, 0], k)), np.exp(2j * np.pi * np.outer(C[:, 1], k))


def sampler_bank_norms(bank: FieldBank, sampler: LeafSampler, qs, varpi, fine=4):
    """Same quantity as bank_leaf_norms(bank, sampler.jets(m), qs, varpi, grid=...), computed
    by evaluating every field once on the base chart of each translate group: along the leaf
    through c + X(t) a character exp(2 pi i <k, p>) equals exp(2 pi i <k, c>) times its value
    along X(t)."""
    m = max(qs) + 1
    K = bank.K
    grid = (sampler.nx, sampler.ny)
    out = np.zeros((len(bank), len(qs)))
    for idx, J, C in sampler.translate_groups(m):
        e1, e2 = axis_exps(J, K, m)                          # (nx+1, ny+1, 2K+1, m)
        Q = taylor_mul(e1[..., :, None, :], e2[..., None, :, :])   # characters (x, y, a, b, m)
        p1, p2 = _phases(K, C)                                # (g, 2K+1)
        cache, zs = {}, {}
        for i, e in enumerate(bank.entries):
            if e.field is None:
                key = (e.kind, tuple(e.k))
                if key not in cache:
                    if e.k not in zs:
                        Z = Q[..., K + e.k[0], K + e.k[1], :]
                        zs = {e.k: _upsample(Z[None], grid, fine)[0]}     # (fx, fy, m)
                    Z = zs[e.k]
                    # charts whose phases coincide give identical leaf series
                    t = np.round(np.mod(C @ np.asarray(e.k, float), 1.0), 12) % 1.0
                    ph = np.exp(2j * np.pi * np.unique(t))
                    V = ph[:, None, None, None] * Z[None]
                    S = (V.real if e.kind == "cos" else V.imag)[:, None]   # (g, 1, fx, fy, m)
                    cache[key] = _chart_norms(S, qs, varpi)
                val = cache[key]
            else:
                f = e.field.to_K(K)
                # per-chart coefficients c_ab exp(2 pi i (a c1 + b c2))
                cg = f.c[None] * p1[:, None, :, None] * p2[:, None, None, :]   # (g, ncomp, a, b)
                S = np.tensordot(cg, Q, axes=([2, 3], [2, 3])).real     # (g, ncomp, nx+1, ny+1, m)
                S = _upsample(S.reshape((-1,) + S.shape[2:]).reshape(-1, sampler.ny + 1, m),
                              grid, fine).reshape(S.shape[:2] + (-1, fine * sampler.ny + 1, m))
                val = _chart_norms(S, qs, varpi)
            out[i] = np.maximum(out[i], val)
    return out


def _chart_norms(S, qs, varpi):
    """S (charts, ncomp, leaves, samples, m) -> max over charts of series_norm, per q."""
    S = np.moveaxis(S, 0, -4).reshape(S.shape[1], -1, S.shape[-2], S.shape[-1])
    return np.array([series_norm(S, q, varpi) for q in qs])


def leaf_series(phi, sampler: LeafSampler, m, yshift=0.0):
    """Series of phi along every sampled leaf: (ncomp, leaves, samples, m)."""
    if isinstance(phi, MollifiedField):
        return phi.leaf_series(sampler, m, yshift)
    return taylor_along_curve(phi, sampler.jets(m, yshift), m)


def leafwise_norm(phi, W: FoliationFamily | LeafSampler, q: int, varpi: float, **kw) -> float:
    """||phi||_q^W: sup over sampled leaves of the weighted C^q norm of phi along the leaf."""
    s = W if isinstance(W, LeafSampler) else LeafSampler(W, **kw)
    return float(series_norm(leaf_series(phi, s, q + 1), q, varpi))


# -- mollification along leaves ----------------------------------------------------

def bump(z):
    z = np.asarray(z, float)
    out = np.zeros_like(z)
    m = np.abs(z) < 1
    out[m] = np.exp(-1.0 / (1.0 - z[m] ** 2))
    return out


_BUMP_MASS = None


def bump_mass():
    global _BUMP_MASS
    if _BUMP_MASS is None:
        _BUMP_MASS = quad(lambda z: float(bump(z)), -1, 1, epsabs=1e-15, epsrel=1e-14)[0]
    return _BUMP_MASS


def bump_transform(eps, freq=1.0, center=0.0):
    """int cos(2 pi freq eps t) j(t) dt for the normalised bump on (center-1, center+1)
    by adaptive quadrature (independent of the Gauss-Legendre rule used below)."""
    Z = bump_mass()
    f = lambda u: np.cos(2 * np.pi * freq * eps * (center + u)) * float(bump(u)) / Z
    return quad(f, -1, 1, epsabs=1e-15, epsrel=1e-13, limit=200)[0]


class MollifiedField:
    """phi_eps(F(x, y)) = int phi(F(x, y + eps t)) j(t) dt with j a unit-mass C^inf bump
    supported on (center - 1, center + 1); center = 0 gives the symmetric mollifier."""

    def __init__(self, base, eps, center=0.0, nodes=96):
        self.base, self.eps, self.center = base, float(eps), float(center)
        u, w = np.polynomial.legendre.leggauss(nodes)
        wt = w * bump(u)
        self.t = center + u
        self.w = wt / wt.sum()

    @property
    def ncomp(self):
        return self.base.ncomp

    def leaf_series(self, sampler, m, yshift=0.0):
        acc = 0.0
        for t, w in zip(self.t, self.w):
            acc = acc + w * leaf_series(self.base, sampler, m, yshift + self.eps * t)
        return acc


def _eps_max(W: FoliationFamily):
    # analytic families are defined on whole leaves, chart-local families only on U^0
    if W.generation == 0 and W.params.get("kind") in ("vertical", "slope", "curvature"):
        return 0.25
    return 0.5 * W.params.get("delta0", 0.1)


def mollify_along_leaves(phi, W: FoliationFamily, eps, q=1, varpi=4.0, center=0.0, sampler=None,
                         nodes=96):
    """Returns (phi_eps, report) with report holding ||phi - phi_eps||_{q-1}^W,
    ||phi_eps||_q^W and ||phi_eps||_{q+1}^W."""
    if not 0 < eps <= _eps_max(W):
        raise ValueError(f"mollifier width {eps} outside (0, {_eps_max(W)}]")
    s = sampler or LeafSampler(W)
    pe = MollifiedField(phi, eps, center, nodes)
    m = q + 2
    S0 = leaf_series(phi, s, m)
    S1 = pe.leaf_series(s, m)
    rep = {"eps": eps, "center": center,
           "err_qm1": float(series_norm(S0 - S1, max(q - 1, 0), varpi)),
           "norm_q": float(series_norm(S1, q, varpi)),
           "norm_qp1": float(series_norm(S1, q + 1, varpi)),
           "phi_norm_q": float(series_norm(S0, q, varpi))}
    return pe, rep


def heat_smooth_unstable(phi: TrigField, t: float) -> TrigField:
    if not 0 < t <= 1:
        raise ValueError("t must lie in (0, 1]")
    return phi.heat_x(t)


# -- stable / unstable decomposition -------------------------------------------------

def unstable_slope(amap: AnosovMap, p, n: int):
    """Frame slope dy/dx of T^n applied to the unstable axis, at torus points p
    (the derivative of the pushed-forward unstable graph)."""
    if n == 0:
        return np.zeros(np.shape(p)[:-1])
    q = amap.apply(p, -n)
    v = amap.jacobian(q, n) @ (amap.Pinv @ np.array([1.0, 0.0]))
    w = v @ amap.P.T
    return w[..., 1] / w[..., 0]


@dataclass
class Decomposition:
    phi_hat: np.ndarray
    phi_u: np.ndarray
    phi_s: np.ndarray
    v: np.ndarray
    w: np.ndarray
    f: np.ndarray
    g: np.ndarray
    reconstruction_residual: float
    tangency_residual: float


def decompose_stable_unstable(phi: TrigField, chart: FoliationChart, amap: AnosovMap, n: int,
                              x=None, y=None) -> Decomposition:
    """Split the frame components of phi at chart points (x, y) into a part along the
    pushed unstable graph (slope g) and a part tangent to the leaves (slope f = dF/dy)."""
    if phi.ncomp != 2:
        raise ValueError("need a 2-vector field")
    h = chart.half
    x = h * lobatto(12) if x is None else np.asarray(x, float)
    y = h * lobatto(12) if y is None else np.asarray(y, float)
    X, Y = np.meshgrid(x, y, indexing="ij")
    xl = chart.leaf_label(X, Y)
    f = chart.F(xl, Y, 0, 1, strict=False)
    P = chart.window.frame
    p = chart.window.to_physical(np.stack([X, Y], -1))
    g = unstable_slope(amap, p, n)
    ph = np.einsum("ij,j...->...i", P, phi(p))                # frame components
    den = 1.0 - f * g
    if np.min(np.abs(den)) < 1e-6:
        raise ConditioningError(f"stable and unstable directions nearly parallel: min|1-fg| = "
                                f"{np.min(np.abs(den)):.2e}")
    v = (ph[..., 0] - f * ph[..., 1]) / den
    w = (ph[..., 1] - g * ph[..., 0]) / den
    pu = np.stack([v, g * v], -1)
    ps = np.stack([f * w, w], -1)
    rec = float(np.max(np.abs(pu + ps - ph)))
    tan = float(np.max(np.abs(ps[..., 0] - f * ps[..., 1])))
    return Decomposition(ph, pu, ps, v, w, f, g, rec, tan)


# -- divergence identities --------------------------------------------------------------

def _dDTn(amap: AnosovMap, p, n):
    """DT^n(p) and its partial derivatives dD[..., l, :, :] = d/dp_l DT^n(p)."""
    orb = [np.asarray(p, float)]
    for _ in range(n - 1):
        orb.append(amap.apply(orb[-1], 1))
    J = [amap.dT(q) for q in orb]
    H = [amap.d2T(q) for q in orb]
    shp = np.shape(p)[:-1]
    eye = np.broadcast_to(np.eye(2), shp + (2, 2))
    pre = [eye]                                  # DT^j(p)
    for j in range(n):
        pre.append(J[j] @ pre[-1])
    post = [eye] * (n + 1)                       # J_{n-1} ... J_{j+1}
    acc = eye
    for j in range(n - 1, -1, -1):
        post[j] = acc
        acc = acc @ J[j]
    dD = np.zeros(shp + (2, 2, 2))
    for l in range(2):
        for j in range(n):
            dirv = pre[j][..., :, l]                               # DT^j e_l
            dJ = np.einsum("...ikm,...m->...ik", H[j], dirv)
            dD[..., l, :, :] += post[j] @ dJ @ pre[j]
    return pre[n], dD


def divergence_identity_check(amap: AnosovMap, n: int, phi: TrigField, M: int = 256,
                              chart: FoliationChart | None = None, deg: int = 24) -> dict:
    """Residuals of div(DT^n^{-1} phi o T^n) = (div phi) o T^n + sum d_l[(DT^n)^{-1}]_{lk} phi_k o T^n
    (spectral left side on an M x M grid) and, with a chart, of the leafwise identity
    div(phi^s) o F = d_y[w o F] + H^F (w o F)."""
    g = (np.arange(M) + 0.0) / M
    G1, G2 = np.meshgrid(g, g, indexing="ij")
    p = np.stack([G1, G2], -1)
    Tp = amap.apply(p, n)
    D, dD = _dDTn(amap, p, n)
    Minv = np.linalg.inv(D)
    ph = np.moveaxis(phi(Tp), 0, -1)                                # (M, M, 2)
    V = np.einsum("...ij,...j->...i", Minv, ph)
    VF = TrigField.from_grid(np.moveaxis(V, -1, 0), M // 2 - 1)
    lhs = VF.div().grid(M)[0]
    divphi = phi.div()(Tp)[0]
    dMinv = -np.einsum("...ab,...lbc,...cd->...lad", Minv, dD, Minv)
    corr = np.einsum("...llk,...k->...", dMinv, ph)
    rhs = divphi + corr
    out = {"n": n, "unstable_residual": float(np.max(np.abs(lhs - rhs))),
           "rhs_scale": float(np.max(np.abs(rhs)))}
    if chart is not None:
        out.update(leafwise_identity_check(amap, n, phi, chart, deg))
    return out


def leafwise_identity_check(amap, n, phi, chart: FoliationChart, deg=24):
    h = chart.half
    xs = h * lobatto(deg)
    dec = decompose_stable_unstable(phi, chart, amap, n, xs, xs)
    S1 = Cheb2.from_values(dec.phi_s[..., 0], -h, h, -h, h)
    S2 = Cheb2.from_values(dec.phi_s[..., 1], -h, h, -h, h)
    # sample leaves away from the window edge so F(x', y) stays inside
    xp = 0.7 * h * lobatto(deg)
    Xp, Yp = np.meshgrid(xp, xs, indexing="ij")
    Fx = chart.F(Xp, Yp)
    lhs = S1(Fx, Yp, 1, 0) + S2(Fx, Yp, 0, 1)
    # w o F on (x', y) and its y-derivative
    pts = chart.window.to_physical(np.stack([Fx, Yp], -1))
    ph = np.einsum("ij,j...->...i", chart.window.frame, phi(pts))
    f = chart.F(Xp, Yp, 0, 1)
    gg = unstable_slope(amap, pts, n)
    wF = (ph[..., 1] - gg * ph[..., 0]) / (1 - f * gg)
    WF = Cheb2.from_values(wF, -0.7 * h, 0.7 * h, -h, h)
    hf = compute_HF(chart)
    rhs = WF(Xp, Yp, 0, 1) + hf(Xp, Yp) * wF
    return {"leafwise_residual": float(np.max(np.abs(lhs - rhs))),
            "leafwise_scale": float(np.max(np.abs(rhs))),
            "reconstruction_residual": dec.reconstruction_residual,
            "tangency_residual": dec.tangency_residual}


# -- dictionaries ------------------------------------------------------------------------

@dataclass
class DictionarySpec:
    K: int = 8
    n_random: int = 16
    slopes: tuple = (0.25, 0.5, 0.75)
    curvatures: tuple = (0.05, 0.1)
    seed: int = 0
    vector: bool = False
    q: int = 1
    varpi: float = 4.0
    decay: float = 1.0
    delta0: float = 0.1
    deg: int = 8
    ncent: int = 10
    nx: int = 8
    ny: int = 16

    def to_dict(self):
        d = dict(self.__dict__)
        d["slopes"], d["curvatures"] = list(self.slopes), list(self.curvatures)
        return d


def dictionary_families(spec: DictionarySpec, frame):
    fams = [analytic_family("vertical", frame, spec.delta0, centers=np.zeros((0, 2)), deg=spec.deg)]
    for c in spec.slopes:
        for sg in (1, -1):
            fams.append(analytic_family("slope", frame, spec.delta0, centers=np.zeros((0, 2)),
                                        deg=spec.deg, slope=sg * c))
    for a in spec.curvatures:
        for sg in (1, -1):
            fams.append(analytic_family("curvature", frame, spec.delta0, centers=np.zeros((0, 2)),
                                        deg=spec.deg, a=sg * a))
    return fams


def dictionary_bank(spec: DictionarySpec) -> FieldBank:
    K = spec.K
    entries = []
    comps = (0, 1) if spec.vector else (0,)
    for comp in comps:
        for k1 in range(0, K + 1):
            for k2 in range(-K, K + 1):
                if k1 == 0 and k2 < 0:
                    continue
                entries.append(BankEntry("cos", (k1, k2), comp))
                if (k1, k2) != (0, 0):
                    entries.append(BankEntry("sin", (k1, k2), comp))
    rng = np.random.Generator(np.random.Philox(key=spec.seed))
    nc = 2 if spec.vector else 1
    for i in range(spec.n_random):
        entries.append(BankEntry("random", field=TrigField.random(K, rng, nc, spec.decay),
                                 seed=spec.seed, index=i))
    return FieldBank(entries, nc, K)


class Dictionary:
    """Finite family of certified pairs (W_j, phi_i / ||phi_i||^{W_j}); pair id = i * nfol + j."""

    def __init__(self, spec: DictionarySpec, frame, order=None, samplers=None):
        self.spec = spec
        self.order = spec.q if order is None else order
        self.frame = np.asarray(frame, float)
        self.families = dictionary_families(spec, self.frame)
        self.bank = dictionary_bank(spec)
        self.samplers = samplers or [LeafSampler(f, spec.ncent, spec.nx, spec.ny) for f in self.families]
        self.norms = self._measure(self.samplers)
        self._coeffs = None

    @property
    def nfol(self):
        return len(self.families)

    def __len__(self):
        return len(self.bank) * self.nfol

    @property
    def coeffs(self):
        if self._coeffs is None:
            self._coeffs = self.bank.coeff_stack()
        return self._coeffs

    def pair_info(self, pid):
        i, j = divmod(int(pid), self.nfol)
        return {"pair": int(pid), "field": self.bank.entries[i].descriptor(),
                "foliation": self.families[j].name, "norm": float(self.norms[i, j])}

    def certificate(self, factor=2):
        """Max relative change of the certified norms on a factor-times finer node set."""
        n2 = self._measure([s.refined(factor) for s in self.samplers])
        return float(np.max(np.abs(n2 - self.norms) / self.norms))

    def _measure(self, samplers):
        return np.stack([sampler_bank_norms(self.bank, s, [self.order], self.spec.varpi)[:, 0]
                         for s in samplers], axis=1)

    def restrict(self, K, n_random):
        """Sub-dictionary: monomials with frequency <= K and the first n_random random fields,
        on the same foliations.  Its estimates are suprema over a subset of the same pairs."""
        keep = [i for i, e in enumerate(self.bank.entries)
                if (e.field is None and max(abs(e.k[0]), abs(e.k[1])) <= K)
                or (e.field is not None and e.index < n_random)]
        sub = object.__new__(Dictionary)
        sub.spec = replace(self.spec, K=K, n_random=n_random)
        sub.order, sub.frame, sub.families, sub.samplers = self.order, self.frame, self.families, self.samplers
        sub.bank = FieldBank([self.bank.entries[i] for i in keep], self.bank.ncomp, self.bank.K)
        sub.norms = self.norms[keep]
        sub._coeffs = self.coeffs[keep]
        return sub

    def to_dict(self):
        return {"spec": self.spec.to_dict(), "order": self.order,
                "foliations": [f.name for f in self.families],
                "fields": [e.descriptor() for e in self.bank.entries],
                "norms": self.norms.tolist()}


def build_dictionary(spec: DictionarySpec, frame, order=None):
    return Dictionary(spec, frame, order)


@dataclass
class NormReport:
    norm_0q: float
    norm_star_1q: float | None = None
    norm_minus_1q: float | None = None
    a_constant: float | None = None
    argmax_0q: dict | None = None
    argmax_1q: dict | None = None
    lower_bound: bool = True

    def to_dict(self):
        return dict(self.__dict__)


def _best(vals, D: Dictionary):
    ratio = np.abs(vals)[:, None] / D.norms
    pid = int(np.argmax(ratio.ravel()))          # first maximum = lowest pair id
    return float(ratio.ravel()[pid]), D.pair_info(pid)


def pairings(h: DensityField, D: Dictionary):
    m = h.moments(D.bank.K)
    return np.einsum("icab,ab->ic", D.coeffs, m)[:, 0]


def div_pairings(h: DensityField, D: Dictionary):
    K = D.bank.K
    m = h.moments(K)
    k = 2j * np.pi * np.arange(-K, K + 1)
    C = D.coeffs
    dv = C[:, 0] * k[None, :, None] + C[:, 1] * k[None, None, :]
    return np.einsum("iab,ab->i", dv, m)


def estimate_norm_0q(h: DensityField, D: Dictionary) -> NormReport:
    if len(D) == 0:
        raise ValueError("empty dictionary")
    v, info = _best(pairings(h, D), D)
    return NormReport(v, argmax_0q=info)


def estimate_norm_1q(h: DensityField, D0: Dictionary, D1: Dictionary, a: float = 1.0) -> NormReport:
    """||h||_{0,q} over D0 (scalar, order q) and ||h||*_{1,q} over D1 (vector, order q+1)."""
    if len(D1) == 0:
        raise ValueError("empty dictionary")
    if not D1.spec.vector:
        raise ValueError("the div pairing needs a vector dictionary")
    r0 = estimate_norm_0q(h, D0)
    v1, info = _best(div_pairings(h, D1), D1)
    return NormReport(r0.norm_0q, v1, a * r0.norm_0q + v1, a, r0.argmax_0q, info)


# -- test-function contraction ------------------------------------------------------------

def pullback_leaf_jets(tf, m, us=None, ss=None):
    """Jets in s of the source-chart points hit by T^n from the leaves of the
    pulled-back chart: returns torus jets (len(us), len(ss), 2, m)."""
    h = tf.chart.half
    us = h * lobatto(8) if us is None else us
    ss = h * lobatto(8) if ss is None else ss
    U, Sg = np.meshgrid(us, ss, indexing="ij")
    S = np.zeros(U.shape + (m,))
    S[..., 0] = Sg
    if m > 1:
        S[..., 1] = 1.0
    u = U
    for blk in reversed(tf.blocks):
        st = blk.state
        s0 = S[..., 0]
        PT = derivs_to_taylor([st.Phi(u, s0, 0, k, strict=False) for k in range(m)])
        S = taylor_compose(PT, S)
        u = st.Upsilon(u, strict=False)
    src = tf.source_chart
    # u is constant along each leaf: evaluate the source-chart leaf jets at the leaf label
    Fd = derivs_to_taylor([src.F(u, S[..., 0], 0, k, strict=False) for k in range(m)])
    FT = taylor_compose(Fd, S)
    Z = np.stack([FT, S], -2)
    Pinv = np.linalg.inv(src.window.frame)
    T = np.einsum("ij,...jm->...im", Pinv, Z)
    T[..., :, 0] += np.asarray(src.window.center, float)
    return T


@dataclass
class ContractionFit:
    A0: float
    B0: float
    sigma: float
    nu: float
    q: int
    table: list = field(default_factory=list)
    violations: int = 0

    def to_dict(self):
        d = dict(self.__dict__)
        return d


def verify_test_contraction(amap: AnosovMap, D: Dictionary, n_list=range(1, 9), centers=None,
                            deg=10, nu=None) -> ContractionFit:
    """Measure ||phi o T^n||^{T^{-n}W}_{q+1} against ||phi||^W_{q+1}, ||phi||^W_q for every
    dictionary pair and fit A0 sigma^(nq) ||phi||_{q+1} + B0 ||phi||_q."""
    from .graph_transform import pullback_chart
    q = D.order
    varpi = D.spec.varpi
    if centers is None:
        centers = np.array([[0.21, 0.37], [0.62, 0.14], [0.45, 0.83]])
    nW = np.stack([sampler_bank_norms(D.bank, s, [q, q + 1], varpi) for s in D.samplers],
                  axis=1)                                     # (nfield, nfol, 2)
    rows = []
    k0 = np.zeros((len(n_list), len(D.bank), D.nfol))
    dp = np.zeros_like(k0)
    for a, n in enumerate(n_list):
        for j, fam in enumerate(D.families):
            Xs = []
            for c in centers:
                tf = pullback_chart(amap, fam.chart_at, c, n, deg, r=2)
                Xs.append(pullback_leaf_jets(tf, q + 2))
            X = np.concatenate(Xs, axis=0)
            E = axis_exps(X, D.bank.K, q + 2)
            for s in range(0, len(D.bank), 48):
                idx = range(s, min(len(D.bank), s + 48))
                S = D.bank.series(X, q + 2, idx, E)
                p0, pd = series_parts(S, q + 1, varpi)
                k0[a, s:s + len(idx), j] = p0
                dp[a, s:s + len(idx), j] = pd
    B0 = float(np.max(k0 / nW[None, ..., 0]))
    Dn = np.max(dp / nW[None, ..., 1], axis=(1, 2))
    ns = np.asarray(list(n_list), float)
    good = Dn > 1e-300
    slope = np.polyfit(ns[good], np.log(Dn[good]), 1)[0]
    sigma = float(np.exp(slope / max(q, 1)))
    A0 = float(np.max(Dn / sigma ** (ns * q)))
    lhs = k0 + dp
    rhs = A0 * sigma ** (ns[:, None, None] * q) * nW[None, ..., 1] + B0 * nW[None, ..., 0]
    viol = int(np.sum(lhs > rhs * (1 + 1e-12)))
    for a, n in enumerate(n_list):
        rows.append({"n": int(n), "max_deriv_ratio": float(Dn[a]),
                     "max_order0_ratio": float(np.max(k0[a] / nW[..., 0])),
                     "max_lhs": float(np.max(lhs[a]))})
    nu = amap_nu(amap) if nu is None else nu
    return ContractionFit(A0, B0, sigma, nu, q, rows, viol)


def amap_nu(amap):
    from .dynamics import estimate_hyperbolicity
    return estimate_hyperbolicity(amap).nu
