"""
Transfer operator on densities: pointwise action on trigonometric densities, the
Ulam matrix, its spectrum, correlation decay, Cesaro projectors, Birkhoff
variance and the Lasota-Yorke experiment.

Ulam convention: cell (i, j) = [i/N, (i+1)/N) x [j/N, (j+1)/N) has index i*N + j;
P[a, b] = m(B_a cap T^{-1} B_b) / m(B_a) and a row vector of cell masses v is
pushed forward as v P.
"""

from __future__ import annotations

import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .aniso_norms import Dictionary, div_pairings, pairings, weighted_c_norm
from .dynamics import AnosovMap, estimate_hyperbolicity
from .eigen import ArnoldiNoConvergence, arnoldi, power_iteration
from .trig import DensityField, TrigField


class ResolutionError(RuntimeError):
    pass


class UlamAssemblyError(RuntimeError):
    pass


def default_threads():
    try:
        return max(1, int(os.environ.get("ANISOSPEC_THREADS", "1")))
    except ValueError:
        return 1


# -- pointwise transfer operator ------------------------------------------------------

def apply_transfer(amap: AnosovMap, h: DensityField, M: int = 256, K_out: int | None = None,
                   tail_tol: float = 1e-6) -> DensityField:
    """(L h)(x) = h(T^{-1} x) / |det DT(T^{-1} x)| sampled on an M x M grid and refit."""
    if h.kind != "trig":
        raise ValueError("apply_transfer needs a trigonometric density")
    K_out = M // 4 if K_out is None else K_out
    g = np.arange(M) / M
    G1, G2 = np.meshgrid(g, g, indexing="ij")
    p = np.stack([G1, G2], -1)
    q = amap.apply(p, -1)
    det = np.abs(np.linalg.det(amap.dT(q)))
    vals = h.data(q)[0] / det
    full = TrigField.from_grid(vals, M // 2 - 1)
    e_all = np.sum(np.abs(full.c) ** 2)
    kept = full.to_K(K_out)
    e_kept = np.sum(np.abs(kept.c) ** 2)
    if e_all > 0 and (e_all - e_kept) > tail_tol * e_all:
        raise ResolutionError(f"coefficient tail {(e_all - e_kept) / e_all:.2e} of the energy lies "
                              f"beyond K={K_out}; use a larger grid")
    kept.real = True
    kept.c = 0.5 * (kept.c + np.conj(kept.c[:, ::-1, ::-1]))
    return DensityField.trig(kept)


def _moments_on_grid(amap, h, n, K, M):
    g = (np.arange(M) + 0.5) / M
    kk = np.arange(-K, K + 1)
    nk = len(kk)
    out = np.zeros((nk, nk), complex)
    rows = max(1, (1 << 20) // M)
    for s in range(0, M, rows):
        G1, G2 = np.meshgrid(g[s:s + rows], g, indexing="ij")
        p = np.stack([G1, G2], -1)
        w = h(p)[0] / (M * M)
        q = amap.apply(p, n) if n else p
        e1 = np.exp(2j * np.pi * q[..., 0, None] * kk)
        e2 = np.exp(2j * np.pi * q[..., 1, None] * kk)
        out += (e1 * w[..., None]).reshape(-1, nk).T @ e2.reshape(-1, nk)
    return out


def transfer_moments(amap: AnosovMap, h: TrigField, n: int, K: int, M: int | None = None,
                     tol: float = 1e-12, M_max: int = 4096):
    """Moments int (L^n h) e_k = int h (e_k o T^n) for |k| <= K by midpoint quadrature.

    Without an explicit M the grid is doubled from 128 until two successive grids
    agree to tol; the integrand's spectrum concentrates along the unstable line,
    so aliasing dies out long before the naive bandwidth |k| lambda^n is resolved.
    """
    if M is not None:
        return _moments_on_grid(amap, h, n, K, M)
    M = max(128, int(2 ** np.ceil(np.log2(4 * (h.K + K) + 1))))
    prev = _moments_on_grid(amap, h, n, K, M)
    while True:
        M *= 2
        cur = _moments_on_grid(amap, h, n, K, M)
        if np.max(np.abs(cur - prev)) <= tol:
            return cur
        if M >= M_max:
            raise ResolutionError(f"moments of L^{n} h unresolved at M={M}: "
                                  f"change {np.max(np.abs(cur - prev)):.2e}")
        prev = cur


class MomentDensity(DensityField):
    """Density known only through its moments (for L^n h)."""

    def __init__(self, moments):
        self._m = np.asarray(moments, complex)
        self.kind = "moments"
        self.data = None

    def moments(self, K):
        K0 = (self._m.shape[0] - 1) // 2
        if K > K0:
            raise ValueError("moment cap exceeded")
        return self._m[K0 - K:K0 + K + 1, K0 - K:K0 + K + 1]


# -- Ulam matrix ---------------------------------------------------------------------------

@dataclass
class UlamMatrix:
    N: int
    P: sp.csr_matrix
    method: str
    samples: int | None = None
    seed: int | None = None

    def row_sums(self):
        return np.asarray(self.P.sum(axis=1)).ravel()

    def col_sums(self):
        return np.asarray(self.P.sum(axis=0)).ravel()

    def push(self, v):
        """Cell masses v -> v P."""
        return self.P.T @ v

    def to_text(self):
        P = self.P
        buf = io.StringIO()
        buf.write(f"{self.N} {P.nnz}\n")
        buf.write(" ".join(map(str, P.indptr.tolist())) + "\n")
        buf.write(" ".join(map(str, P.indices.tolist())) + "\n")
        buf.write(" ".join(repr(float(x)) for x in P.data) + "\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text, method="loaded"):
        lines = text.strip().split("\n")
        N, nnz = map(int, lines[0].split())
        ptr = np.array(lines[1].split(), int)
        idx = np.array(lines[2].split(), int) if nnz else np.zeros(0, int)
        val = np.array(lines[3].split(), float) if nnz else np.zeros(0)
        P = sp.csr_matrix((val, idx, ptr), shape=(N * N, N * N))
        return cls(N, P, method)


def _normalise_rows(P):
    P = P.tocsr()
    P.sum_duplicates()
    P.sort_indices()
    rs = np.asarray(P.sum(axis=1)).ravel()
    if np.any(rs <= 0):
        bad = int(np.argmin(rs))
        raise UlamAssemblyError(f"zero-mass row at cell {bad}")
    P = sp.diags(1.0 / rs) @ P
    return P.tocsr()


def _exact_rows(A, N, cells):
    import shapely
    from shapely import Polygon, box
    A = np.asarray(A, float)
    out_r, out_c, out_v = [], [], []
    polys, boxes, rows, tgt = [], [], [], []
    for c in cells:
        i, j = divmod(int(c), N)
        corners = np.array([[i, j], [i + 1, j], [i + 1, j + 1], [i, j + 1]], float) / N
        img = corners @ A.T
        lo = np.floor(img.min(axis=0) * N).astype(int)
        hi = np.ceil(img.max(axis=0) * N).astype(int)
        poly = Polygon(img)
        for a in range(lo[0], hi[0]):
            for b in range(lo[1], hi[1]):
                polys.append(poly)
                boxes.append(box(a / N, b / N, (a + 1) / N, (b + 1) / N))
                rows.append(c)
                tgt.append((a % N) * N + (b % N))
    area = shapely.area(shapely.intersection(np.array(polys, object), np.array(boxes, object)))
    keep = area > 0
    return np.array(rows)[keep], np.array(tgt)[keep], area[keep] * N * N


def _mc_rows(amap, N, cells, s, shifts):
    g = (np.arange(s) + 0.5) / s
    U1, U2 = np.meshgrid(g, g, indexing="ij")
    base = np.stack([U1.ravel(), U2.ravel()], -1)              # (s*s, 2) strata centres
    rows, tgt = [], []
    for c, sh in zip(cells, shifts):
        i, j = divmod(int(c), N)
        u = (base + sh) % 1.0
        pts = (np.array([i, j]) + u) / N
        q = amap.apply(pts, 1)
        cell = (np.floor(q[:, 0] * N).astype(int) % N) * N + (np.floor(q[:, 1] * N).astype(int) % N)
        t, cnt = np.unique(cell, return_counts=True)
        rows.append(np.full(len(t), c))
        tgt.append(np.stack([t, cnt], -1))
    tg = np.concatenate(tgt)
    return np.concatenate(rows), tg[:, 0], tg[:, 1] / float(s * s)


def build_ulam(amap: AnosovMap, N: int, method: str = "monte-carlo", samples: int = 4096,
               seed: int = 0, threads: int | None = None, chunk: int = 256) -> UlamMatrix:
    """Row-stochastic Ulam matrix by exact polygon clipping (linear maps) or stratified
    Monte Carlo with one Cranley-Patterson shift per cell (Philox stream keyed by seed)."""
    if N < 1 or N & (N - 1):
        raise ValueError("N must be a power of 2")
    threads = default_threads() if threads is None else max(1, int(threads))
    cells = np.arange(N * N)
    blocks = [cells[s:s + chunk] for s in range(0, N * N, chunk)]
    if method == "exact-polygon":
        if not amap.is_linear:
            raise ValueError("exact-polygon assembly needs an affine (eps = 0) map")
        work = lambda b: _exact_rows(amap.A, N, b)
        samples = None
    elif method == "monte-carlo":
        s = int(round(np.sqrt(samples)))
        if s * s != samples:
            raise ValueError("samples must be a perfect square (s x s strata)")
        shifts = np.random.Generator(np.random.Philox(key=seed)).random((N * N, 2)) / s
        work = lambda b: _mc_rows(amap, N, b, s, shifts[b])
    else:
        raise ValueError(method)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    r = np.concatenate([p[0] for p in parts])
    c = np.concatenate([p[1] for p in parts])
    v = np.concatenate([p[2] for p in parts])
    P = _normalise_rows(sp.coo_matrix((v, (r, c)), shape=(N * N, N * N)))
    return UlamMatrix(N, P, method, samples, seed)


# -- spectrum ---------------------------------------------------------------------------------

@dataclass
class SpectralReport:
    N: int
    eigenvalues: np.ndarray
    residuals: np.ndarray
    h_star: np.ndarray
    lambda1: float
    gap: float
    reference_radius: float
    essential_flags: list
    converged: bool
    power_iterations: int
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {"N": self.N,
                "eigenvalues_re": [float(z.real) for z in self.eigenvalues],
                "eigenvalues_im": [float(z.imag) for z in self.eigenvalues],
                "moduli": [float(abs(z)) for z in self.eigenvalues],
                "residuals": [float(x) for x in self.residuals],
                "lambda1": self.lambda1, "gap": self.gap,
                "reference_radius": self.reference_radius,
                "essential_regime": self.essential_flags, "converged": self.converged,
                "power_iterations": self.power_iterations,
                "h_star_min": float(self.h_star.min()), "h_star_max": float(self.h_star.max()),
                "flags": self.flags}


def reference_radius(amap: AnosovMap):
    est = estimate_hyperbolicity(amap)
    return max(1.0 / est.lam, est.nu)


def spectrum(U: UlamMatrix, k: int = 8, amap: AnosovMap | None = None, tol=1e-10, maxiter=2000,
             ref: float | None = None) -> SpectralReport:
    """Leading eigenvector by power iteration, next k-1 eigenvalues by Arnoldi on the
    deflated operator v -> vP - (v.1) pi."""
    if k > 32:
        raise ValueError("k must be <= 32")
    n = U.N ** 2
    PT = U.P.T.tocsr()
    pi, _, its, _ = power_iteration(lambda v: PT @ v, np.full(n, 1.0 / n), tol=tol * 1e-2,
                                    maxiter=20 * maxiter)
    pi = pi / pi.sum()
    lam1 = float(np.sum(PT @ pi) / np.sum(pi))
    one = np.ones(n)

    def defl(v):
        return PT @ v - (one @ v) * pi

    conv = True
    try:
        res = arnoldi(defl, n, k - 1, v0=np.cos(np.arange(n) * 0.7) + 0.1, tol=tol, maxiter=maxiter)
        vals, resid = res.values, res.residuals
    except ArnoldiNoConvergence as e:
        vals, resid, conv = e.values, e.residuals, False
    eig = np.concatenate([[1.0 + 0j], vals])
    resid = np.concatenate([[0.0], resid])
    ref = (reference_radius(amap) if amap is not None else 0.0) if ref is None else ref
    flags = [bool(abs(z) < ref) for z in eig]
    h = pi * n
    return SpectralReport(U.N, eig, resid, h, lam1, float(1 - abs(eig[1])), ref, flags, conv, its)


def compare_resolutions(r1: SpectralReport, r2: SpectralReport, tol=0.2):
    """Two-resolution protocol for |lambda_2|."""
    a, b = abs(r1.eigenvalues[1]), abs(r2.eigenvalues[1])
    rel = abs(a - b) / max(a, b, 1e-300)
    ok = rel < tol
    out = {"N1": r1.N, "N2": r2.N, "mod1": float(a), "mod2": float(b), "relative_change": float(rel),
           "stable": bool(ok), "essential_regime": bool(r1.essential_flags[1] or r2.essential_flags[1])}
    out["status"] = "stable" if ok else "flagged"
    return out


# -- correlations -----------------------------------------------------------------------------

@dataclass
class CorrelationSeries:
    values: np.ndarray
    theta_fit: float | None
    prefactor: float | None
    fit_range: tuple
    noise: np.ndarray | None = None
    cutoff: int | None = None
    method: str = ""

    def to_dict(self):
        return {"values": [float(v) for v in np.real(self.values)],
                "theta_fit": self.theta_fit, "prefactor": self.prefactor,
                "fit_range": list(self.fit_range), "cutoff": self.cutoff, "method": self.method,
                "noise": None if self.noise is None else [float(v) for v in self.noise]}


def character_correlations(A, k, l, n_max):
    """Exact C_n = int e_k(A^n x) e_l(x) dx for a linear automorphism: 1 if kA^n = -l else 0.
    Python integers, so no overflow.  Also returns the cutoff n* after which C_n = 0."""
    A = [[int(A[0][0]), int(A[0][1])], [int(A[1][0]), int(A[1][1])]]
    kv = [int(k[0]), int(k[1])]
    vals = []
    for n in range(n_max + 1):
        vals.append(1 if (kv[0] == -int(l[0]) and kv[1] == -int(l[1])) else 0)
        # row vector k A^{n+1} = (k A^n) A
        kv = [kv[0] * A[0][0] + kv[1] * A[1][0], kv[0] * A[0][1] + kv[1] * A[1][1]]
    return np.array(vals, float), character_cutoff(A, k, l)


def character_cutoff(A, k, l):
    """Smallest n* with |k A^m| > |l| for every m >= n*, from the eigen-decomposition of A^T:
    |k A^m| >= |c_u| lam^m - |c_s| lam^-m."""
    At = np.asarray(A, float).T
    w, V = np.linalg.eig(At)
    V = V / np.linalg.norm(V, axis=0)
    c = np.linalg.solve(V, np.asarray(k, float))
    iu = int(np.argmax(np.abs(w)))
    lam, cu, cs = abs(w[iu]), abs(c[iu]), abs(c[1 - iu])
    if cu == 0:
        return None
    target = np.linalg.norm(np.asarray(l, float)) * (1 + 1e-9) + 1e-9
    n = 0
    while cu * lam ** n - cs * lam ** (-n) <= target:
        n += 1
    return n


def _fit_rate(C, noise, n_lo=1, floor=1e-12):
    a = np.abs(np.asarray(C))
    n = np.arange(len(a))
    ok = (n >= n_lo) & (a > np.maximum(floor, 10 * (noise if noise is not None else 0)))
    # use the initial run of resolved values only
    idx = []
    for i in range(n_lo, len(a)):
        if ok[i]:
            idx.append(i)
        elif idx:
            break
    if len(idx) < 2:
        return None, None, (idx[0], idx[0]) if idx else (0, 0)
    sl, ic = np.polyfit(n[idx], np.log(a[idx]), 1)
    return float(np.exp(sl)), float(np.exp(ic)), (int(idx[0]), int(idx[-1]))


def correlations(amap: AnosovMap, phi: TrigField, psi: TrigField, n_max: int,
                 density: DensityField | None = None, G: int = 1024, replicas: int = 4,
                 seed: int = 0) -> CorrelationSeries:
    """C_n = int (phi o T^n) psi dmu - int phi dmu int psi dmu with mu = density dx.

    Computed as int (phi o T^n)(psi - mu(psi)) dmu (identical when the density is
    invariant) by midpoint quadrature on a G x G grid; the noise level comes from
    `replicas` randomly shifted grids (Philox stream keyed by seed).
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    shifts = rng.random((replicas, 2)) / G
    g = np.arange(G) / G
    G1, G2 = np.meshgrid(g, g, indexing="ij")
    base = np.stack([G1, G2], -1).reshape(-1, 2)
    allC = []
    for sh in shifts:
        p = base + sh
        if density is None:
            w = np.full(len(p), 1.0 / len(p))
        elif density.kind == "cells":
            N = density.N
            ci = np.floor(p * N).astype(int) % N
            w = density.data[ci[:, 0], ci[:, 1]]
            w = w / w.sum()
        else:
            w = density.data(p)[0]
            w = w / w.sum()
        ps = psi(p)[0]
        ps = ps - np.sum(w * ps)
        wp = w * ps
        q = p.copy()
        C = np.empty(n_max + 1)
        for n in range(n_max + 1):
            C[n] = np.sum(phi(q)[0] * wp)
            q = amap.apply(q, 1)
        allC.append(C)
    allC = np.array(allC)
    C = allC.mean(axis=0)
    noise = allC.std(axis=0, ddof=1) / np.sqrt(replicas) if replicas > 1 else None
    th, pre, rng_ = _fit_rate(C, noise)
    return CorrelationSeries(C, th, pre, rng_, noise, method="orbit-quadrature")


# -- Cesaro projector -------------------------------------------------------------------------

def peripheral_projector(U: UlamMatrix, theta: float, n_terms: int = 1000, probes=None,
                         rank_tol: float = 1e-2):
    """Cesaro averages (1/n) sum_k e^{-i theta k} v P^k on probe vectors."""
    if n_terms > 10 ** 4:
        raise ValueError("n_terms must be <= 1e4")
    n = U.N ** 2
    PT = U.P.T.tocsr()
    if probes is None:
        probes = default_probes(U.N)
    probes = np.asarray(probes, float)

    def avg(V):
        V = V.astype(complex)
        acc = np.zeros_like(V)
        ph = np.exp(-1j * theta)
        z = 1.0 + 0j
        for _ in range(n_terms):
            acc += z * V
            V = (PT @ V.T).T
            z *= ph
        return acc / n_terms

    Pi = avg(probes)
    Pi2 = avg(Pi)
    sv = np.linalg.svd(Pi, compute_uv=False)
    scale = np.linalg.norm(probes, axis=1).max()
    rank = int(np.sum(sv > rank_tol * scale))
    defect = float(np.max(np.linalg.norm(Pi2 - Pi, axis=1)) / max(np.max(np.linalg.norm(Pi, axis=1)),
                                                                     1e-300))
    return {"theta": theta, "n_terms": n_terms, "rank": rank,
            "singular_values": [float(s) for s in sv],
            "operator_norm_on_probes": float(sv[0] / scale),
            "idempotency_defect": defect if rank else 0.0,
            "projection": Pi}


def default_probes(N, count=6):
    """Smooth probe densities (cell masses) 1 + 0.5 cos(2 pi <k, x>)."""
    g = (np.arange(N) + 0.5) / N
    X, Y = np.meshgrid(g, g, indexing="ij")
    ks = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2)][:count]
    out = [(1 + 0.5 * np.cos(2 * np.pi * (a * X + b * Y))).ravel() / N ** 2 for a, b in ks]
    return np.array(out)


# -- Birkhoff averages -------------------------------------------------------------------------

def birkhoff_experiment(amap: AnosovMap, h: TrigField, n_list=None, n_samples=10000, seed=0,
                        mean=None):
    """Second moment of (1/n) sum_{k<n} h(T^k x) - mu(h) over uniform samples x."""
    n_list = [16 * 2 ** i for i in range(9)] if n_list is None else sorted(n_list)
    rng = np.random.Generator(np.random.Philox(key=seed))
    x = rng.random((n_samples, 2))
    mu = float(h.mean()[0]) if mean is None else mean
    S = np.zeros(n_samples)
    var, se = [], []
    nmax = n_list[-1]
    checks = set(n_list)
    for k in range(1, nmax + 1):
        S += h(x)[0]
        x = amap.apply(x, 1)
        if k in checks:
            d2 = (S / k - mu) ** 2
            var.append(float(d2.mean()))
            se.append(float(d2.std(ddof=1) / np.sqrt(n_samples)))
    var = np.array(var)
    ok = var > 0
    slope = float(np.polyfit(np.log(np.array(n_list)[ok]), np.log(var[ok]), 1)[0]) if ok.sum() >= 2 else None
    return {"n": list(n_list), "variance": var.tolist(), "standard_error": se, "slope": slope,
            "mean": mu, "n_samples": n_samples}


# -- Lasota-Yorke experiment -------------------------------------------------------------------

def l1_norms(h: TrigField, M=512):
    g = h.grid(M)[0]
    gx = h.grid(M, 1, 0)[0]
    gy = h.grid(M, 0, 1)[0]
    return float(np.mean(np.abs(g))), float(max(np.mean(np.abs(gx)), np.mean(np.abs(gy))))


def default_h_set(K=4, seed=0):
    out = {"const": TrigField.constant(1.0, K),
           "cos_x": TrigField.constant(1.0, K) + 0.5 * TrigField.monomial(1, 0, "cos", K),
           "cos_xy": TrigField.constant(1.0, K) + 0.5 * TrigField.monomial(1, 1, "cos", K),
           "indicator": smoothed_indicator(K, 0.002)}
    rng = np.random.Generator(np.random.Philox(key=seed))
    r = TrigField.random(K, rng, decay=2.0)
    r.c[0, K, K] = 0
    r = (0.4 / np.max(np.abs(r.grid(64)))) * r + 1.0
    out["random"] = r
    return out


def smoothed_indicator(K, t):
    """Heat-smoothed 2 * 1_{y < 1/2} truncated at frequency K (mean 1)."""
    f = TrigField.zeros(K)
    for k in range(-K, K + 1):
        if k == 0:
            f.c[0, K, K] = 1.0
        else:
            # 2 * int_0^{1/2} e^{-2 pi i k y} dy
            c = 2 * (1 - np.exp(-1j * np.pi * k)) / (2j * np.pi * k)
            f.c[0, K, K + k] = c * np.exp(-4 * np.pi ** 2 * k ** 2 * t)
    return f


def lasota_yorke_experiment(amap: AnosovMap, h_set: dict, D0: Dictionary, D1: Dictionary, n_list=range(0, 6), a: float = 1.0, varpi=None):
    """Fit ||L^n h||^-_{1,q} <= A theta^n U_{1,q}(h) + B U_{0,q+1}(h).

    Left side: dictionary lower bounds a ||.||_{0,q} + ||.||*_{1,q}.  Right side:
    upper-bound surrogates U_{0,q}(h) = varpi^-q ||h||_L1, U*_{1,q}(h) =
    varpi^-(q+1) max_j ||d_j h||_L1, U_{1,q} = a U_{0,q} + U*_{1,q}, U_{0,q+1} = varpi^-(q+1) ||h||_L1.
    """
    q = D0.order
    varpi = D0.spec.varpi if varpi is None else varpi
    K = max(D0.bank.K, D1.bank.K)
    ns = list(n_list)
    table = []
    lhs = {}
    U1, U0p = {}, {}
    for name, h in h_set.items():
        l1, dl1 = l1_norms(h)
        U1[name] = a * varpi ** (-q) * l1 + varpi ** (-(q + 1)) * dl1
        U0p[name] = varpi ** (-(q + 1)) * l1
        vals = []
        for n in ns:
            mom = MomentDensity(transfer_moments(amap, h, n, K))
            e0 = float(np.max(np.abs(pairings(mom, D0))[:, None] / D0.norms))
            e1 = float(np.max(np.abs(div_pairings(mom, D1))[:, None] / D1.norms))
            vals.append(a * e0 + e1)
            table.append({"h": name, "n": n, "norm_0q": e0, "norm_star_1q": e1,
                          "norm_minus_1q": a * e0 + e1, "U_1q": U1[name], "U_0q1": U0p[name]})
        lhs[name] = np.array(vals)
    names = list(h_set)
    # B carries the non-decaying part: the last-n ratio
    B = max(lhs[nm][-1] / U0p[nm] for nm in names)
    ex = np.array([[max(lhs[nm][i] - B * U0p[nm], 0.0) / U1[nm] for i in range(len(ns))] for nm in names])
    En = ex.max(axis=0)
    nsa = np.array(ns, float)
    pos = En > 0
    if pos.sum() >= 2:
        theta = float(np.exp(np.polyfit(nsa[pos], np.log(En[pos]), 1)[0]))
        theta = min(theta, 1.0)
    else:
        theta = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        thn = np.where(nsa == 0, 1.0, theta ** nsa)
        A = float(np.max(np.where(En > 0, En / np.where(thn > 0, thn, 1e-300), 0.0)))
    viol = 0
    for nm in names:
        rhs = A * np.where(nsa == 0, 1.0, theta ** nsa) * U1[nm] + B * U0p[nm]
        viol += int(np.sum(lhs[nm] > rhs * (1 + 1e-9) + 1e-15))
    return {"A": A, "B": float(B), "theta": theta, "q": q, "a": a, "varpi": varpi,
            "excess": En.tolist(), "violations": viol, "table": table, "n": ns}
