"""
Torus Anosov maps: hyperbolic integer matrix plus a trigonometric perturbation.

Points are stored as arrays whose last axis has length 2.  The map acts on the
lift R^2 as T(p) = A p + g(p) with g periodic, so T(p + k) = T(p) + A k for
integer k.  Frame coordinates are z = P (p - c) where P sends the unstable and
stable eigendirections of A to the x and y axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NEWTON_TOL = 1e-12
NEWTON_MAXIT = 50


class NewtonError(RuntimeError):
    """Newton iteration failed; carries the worst point and its residual."""

    def __init__(self, msg, point=None, residual=None):
        super().__init__(msg)
        self.point = point
        self.residual = residual


class ConeViolation(RuntimeError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


@dataclass(frozen=True)
class TrigTerm:
    """amplitude * sin(2 pi <freq, p> + phase) added to one component."""
    component: int
    amplitude: float
    freq: tuple
    phase: float = 0.0

    @classmethod
    def from_dict(cls, d):
        comp = d.get("component", "x")
        comp = {"x": 0, "y": 1}.get(comp, comp)
        if comp not in (0, 1):
            raise ValueError(f"perturbation component must be 'x' or 'y', got {d.get('component')!r}")
        freq = tuple(int(k) for k in d["freq"])
        if len(freq) != 2:
            raise ValueError("perturbation freq must have two integer entries")
        return cls(int(comp), float(d["amplitude"]), freq, float(d.get("phase", 0.0)))

    def to_dict(self):
        return {"component": "xy"[self.component], "amplitude": self.amplitude,
                "freq": list(self.freq), "phase": self.phase}


def adapted_frame(A):
    """Return (P, mu_u, mu_s): P maps unstable -> x axis, stable -> y axis."""
    A = np.asarray(A, dtype=float)
    w, V = np.linalg.eig(A)
    w = w.real
    V = V.real
    iu = int(np.argmax(np.abs(w)))
    is_ = 1 - iu
    eu = V[:, iu] / np.linalg.norm(V[:, iu])
    es = V[:, is_] / np.linalg.norm(V[:, is_])
    if eu[0] < 0:
        eu = -eu
    if es[1] < 0:
        es = -es
    B = np.column_stack([eu, es])
    P = np.linalg.inv(B)
    return P, float(w[iu]), float(w[is_])


@dataclass(frozen=True)
class ConeField:
    theta: float = 1.0
    frame: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not (0.0 < self.theta <= 1.0):
            raise ValueError("cone opening must lie in (0, 1]")


@dataclass
class ConeReport:
    holds: bool
    measured_eta: float
    witness: list
    grid: int
    iterate: int

    def to_dict(self):
        return {"holds": bool(self.holds), "measured_eta": float(self.measured_eta),
                "witness": self.witness, "grid": self.grid, "iterate": self.iterate}


@dataclass
class HyperbolicityEstimate:
    lam: float
    nu: float
    c_zero: float
    eta: float
    lambda_plus: float
    sample_count: int
    horizon_n: int
    low_confidence: tuple = ("c_zero",)

    def to_dict(self):
        return {"lambda": self.lam, "nu": self.nu, "c_zero": self.c_zero, "eta": self.eta,
                "lambda_plus": self.lambda_plus, "sample_count": self.sample_count,
                "horizon_n": self.horizon_n, "low_confidence": list(self.low_confidence)}


def wrap(p):
    """Reduce coordinates to [0, 1)."""
    q = np.mod(p, 1.0)
    return np.where(q >= 1.0, 0.0, q)


def torus_distance(p, q):
    d = np.asarray(p, float) - np.asarray(q, float)
    d = d - np.round(d)
    return np.sqrt(np.sum(d * d, axis=-1))


class AnosovMap:
    """Invertible torus map T(p) = A p + sum of trigonometric terms (mod 1)."""

    def __init__(self, matrix, terms: Sequence[TrigTerm] = (), check: bool = True,
                 eta_max: float = 0.95, probe: int = 32):
        A = np.asarray(matrix)
        if A.shape != (2, 2) or not np.all(np.asarray(A) == np.round(A)):
            raise ValueError("linear part must be a 2x2 integer matrix")
        A = np.round(A).astype(np.int64)
        det = int(round(np.linalg.det(A)))
        if abs(det) != 1:
            raise ValueError(f"linear part must have determinant +-1 (got {det})")
        tr = int(A[0, 0] + A[1, 1])
        if abs(tr) <= 2:
            raise ValueError(f"linear part must satisfy |trace| > 2 (got trace {tr})")
        self.A = A
        self.Af = A.astype(float)
        Ainv = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]], dtype=np.int64) * det
        self.Ainv = Ainv
        self.Ainvf = Ainv.astype(float)
        self.det_linear = det
        self.terms = tuple(terms)
        self.P, self.mu_u, self.mu_s = adapted_frame(A)
        self.Pinv = np.linalg.inv(self.P)
        self.lam_linear = abs(self.mu_u)
        # packed perturbation arrays
        if self.terms:
            self._comp = np.array([t.component for t in self.terms])
            self._amp = np.array([t.amplitude for t in self.terms], float)
            self._k = np.array([t.freq for t in self.terms], float)
            self._ph = np.array([t.phase for t in self.terms], float)
        else:
            self._comp = np.zeros(0, int)
            self._amp = np.zeros(0)
            self._k = np.zeros((0, 2))
            self._ph = np.zeros(0)
        self._E = np.zeros((len(self.terms), 2))
        self._E[np.arange(len(self.terms)), self._comp] = 1.0
        self.eta = None
        if check:
            self.validate(eta_max=eta_max, probe=probe)

    # -- construction ------------------------------------------------------
    @classmethod
    def from_spec(cls, spec: dict, **kw):
        terms = [TrigTerm.from_dict(t) for t in spec.get("perturbation", [])]
        return cls(spec["matrix"], terms, **kw)

    @classmethod
    def cat(cls, eps: float = 0.0, **kw):
        return cls([[2, 1], [1, 1]], perturbed_cat_terms(eps), **kw)

    def to_spec(self):
        return {"matrix": self.A.tolist(), "perturbation": [t.to_dict() for t in self.terms]}

    @property
    def is_linear(self):
        return not np.any(self._amp != 0.0)

    def validate(self, eta_max=0.95, probe=32):
        g = probe_grid(probe)
        rep = check_cone_invariance(self, ConeField(1.0, self.P), probe)
        self.eta = rep.measured_eta
        if rep.measured_eta >= eta_max:
            raise ConeViolation(
                f"cone invariance too weak: measured eta {rep.measured_eta:.4f} >= {eta_max}",
                rep.witness)
        back = self.apply(self.apply(g, 1), -1)
        err = float(np.max(torus_distance(back, g)))
        if err > 1e-10:
            raise ValueError(f"forward/inverse round trip error {err:.3e} exceeds 1e-10")
        dets = np.linalg.det(self.dT(g))
        if np.min(np.abs(dets)) < 1e-8:
            raise ValueError("Jacobian determinant vanishes on probe grid")
        return rep

    # -- pointwise evaluation ----------------------------------------------
    def _phase(self, p):
        return 2 * np.pi * (p @ self._k.T) + self._ph

    def pert(self, p):
        p = np.asarray(p, float)
        if not len(self.terms):
            return np.zeros_like(p)
        s = self._amp * np.sin(self._phase(p))
        return s @ self._E

    def pert_diff(self, c, d):
        """g(c + d) - g(c) computed without cancellation."""
        c = np.asarray(c, float)
        d = np.asarray(d, float)
        if not len(self.terms):
            return np.zeros(np.broadcast(c, d).shape)
        th = self._phase(c)
        de = 2 * np.pi * (d @ self._k.T)
        s = self._amp * 2 * np.cos(th + 0.5 * de) * np.sin(0.5 * de)
        return s @ self._E

    def forward_lift(self, p):
        p = np.asarray(p, float)
        return p @ self.Af.T + self.pert(p)

    def dT(self, p):
        """Single-step Jacobian, shape (..., 2, 2)."""
        p = np.asarray(p, float)
        J = np.broadcast_to(self.Af, p.shape[:-1] + (2, 2)).copy()
        if len(self.terms):
            c = 2 * np.pi * self._amp * np.cos(self._phase(p))  # (..., m)
            # J[i, l] += sum_t c_t E[t, i] k[t, l]
            J += np.einsum("...t,ti,tl->...il", c, self._E, self._k)
        return J

    def d2T(self, p):
        """Second derivatives H[..., i, k, l] = d_l d_k T_i."""
        p = np.asarray(p, float)
        H = np.zeros(p.shape[:-1] + (2, 2, 2))
        if len(self.terms):
            s = -4 * np.pi ** 2 * self._amp * np.sin(self._phase(p))
            H += np.einsum("...t,ti,tk,tl->...ikl", s, self._E, self._k, self._k)
        return H

    def inverse_lift(self, p):
        """Solve A q + g(q) = p by Newton from q = A^{-1} p."""
        p = np.asarray(p, float)
        q = p @ self.Ainvf.T
        if not len(self.terms):
            return q
        for it in range(NEWTON_MAXIT):
            res = self.forward_lift(q) - p
            err = np.max(np.abs(res)) if res.size else 0.0
            if err <= NEWTON_TOL:
                # one polishing step
                q = q - np.linalg.solve(self.dT(q), res[..., None])[..., 0]
                return q
            q = q - np.linalg.solve(self.dT(q), res[..., None])[..., 0]
        res = self.forward_lift(q) - p
        k = np.unravel_index(np.argmax(np.abs(res)), res.shape)[:-1]
        raise NewtonError(f"inverse map Newton did not converge (residual {np.max(np.abs(res)):.3e})",
                          point=np.asarray(p)[k].tolist(), residual=float(np.max(np.abs(res))))

    def apply(self, p, n: int = 1):
        """T^n(p) reduced mod 1."""
        q = wrap(np.asarray(p, float))
        if n >= 0:
            for _ in range(n):
                q = wrap(self.forward_lift(q))
        else:
            for _ in range(-n):
                q = wrap(self.inverse_lift(q))
        return q

    def orbit(self, p, n: int):
        """Points p, T p, ..., T^n p (n >= 0) or p, T^-1 p, ... (n < 0); shape (|n|+1, ..., 2)."""
        pts = [wrap(np.asarray(p, float))]
        for _ in range(abs(n)):
            pts.append(self.apply(pts[-1], 1 if n > 0 else -1))
        return np.stack(pts)

    def jacobian(self, p, n: int = 1):
        """D_p T^n as a product of single-step Jacobians along the orbit."""
        p = wrap(np.asarray(p, float))
        J = np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)).copy()
        q = p
        if n >= 0:
            for _ in range(n):
                J = self.dT(q) @ J
                q = self.apply(q, 1)
        else:
            for _ in range(-n):
                q = self.apply(q, -1)
                J = np.linalg.inv(self.dT(q)) @ J
        return J

    # -- frame-coordinate local maps -----------------------------------------
    def to_frame(self, v):
        return np.asarray(v, float) @ self.P.T

    def from_frame(self, z):
        return np.asarray(z, float) @ self.Pinv.T

    def forward_displacement(self, c, d):
        """T(c + d) - T(c) without cancellation (lifted coordinates)."""
        return np.asarray(d, float) @ self.Af.T + self.pert_diff(c, d)

    def inverse_displacement(self, c, d):
        """d' with T(c + d') - T(c) = d, Newton from A^{-1} d with relative tolerance."""
        d = np.asarray(d, float)
        x = d @ self.Ainvf.T
        if not len(self.terms):
            return x
        c = np.asarray(c, float)
        scale = np.maximum(np.max(np.abs(d), axis=-1, keepdims=True), 1e-300)
        for it in range(NEWTON_MAXIT):
            res = self.forward_displacement(c, x) - d
            rel = np.max(np.abs(res) / scale) if res.size else 0.0
            step = np.linalg.solve(self.dT(c + x), res[..., None])[..., 0]
            x = x - step
            if rel <= NEWTON_TOL:
                return x
        raise NewtonError(f"inverse displacement Newton did not converge (rel residual {rel:.3e})",
                          residual=float(rel))

    def local_inverse(self, zeta_orbit, z):
        """S = T^{-n} in frame coordinates.

        zeta_orbit: forward orbit (zeta, T zeta, ..., T^n zeta), shape (n+1, ..., 2).
        z: frame displacement at T^n zeta.  Returns (frame displacement at zeta,
        list of lifted displacements d_k at zeta_k, k = n .. 0).
        """
        n = zeta_orbit.shape[0] - 1
        d = self.from_frame(z)
        ds = [d]
        for k in range(n - 1, -1, -1):
            d = self.inverse_displacement(zeta_orbit[k], d)
            ds.append(d)
        return self.to_frame(d), ds

    def local_forward(self, zeta_orbit, z):
        """S^{-1} = T^n in frame coordinates from chart at zeta to chart at T^n zeta."""
        n = zeta_orbit.shape[0] - 1
        d = self.from_frame(z)
        for k in range(n):
            d = self.forward_displacement(zeta_orbit[k], d)
        return self.to_frame(d)

    def local_inverse_jacobian(self, zeta_orbit, ds):
        """Frame Jacobian of S = T^{-n} at the source point, from displacements of local_inverse."""
        n = zeta_orbit.shape[0] - 1
        # ds[j] is displacement at zeta_{n-j}
        J = None
        for j in range(n):
            k = n - 1 - j  # preimage index
            Jk = self.dT(zeta_orbit[k] + ds[j + 1])
            J = Jk if J is None else J @ Jk
        # J = DT^n at the preimage point; DS = P J^{-1} P^{-1}
        if J is None:
            return np.broadcast_to(np.eye(2), np.shape(ds[0])[:-1] + (2, 2)).copy()
        return self.P @ np.linalg.inv(J) @ self.Pinv

    def frame_jacobian(self, p, n=1):
        return self.P @ self.jacobian(p, n) @ self.Pinv


def perturbed_cat_terms(eps: float):
    """Default perturbation family used throughout (two smooth terms of size eps)."""
    if eps == 0.0:
        return ()
    a = eps / (2 * np.pi)
    return (TrigTerm(0, a, (1, 0), 0.0), TrigTerm(1, a, (1, 1), 0.7))


def probe_grid(m: int, offset: float = 0.5):
    t = (np.arange(m) + offset) / m
    X, Y = np.meshgrid(t, t, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=-1)


def check_cone_invariance(amap: AnosovMap, cone: ConeField | None = None, grid: int = 32,
                          iterate: int = 1) -> ConeReport:
    """Sup of slope contraction of DT^{-n} on the boundary of K_theta = {|x| <= theta |y|}."""
    if cone is None:
        cone = ConeField(1.0, amap.P)
    P = amap.P if cone.frame is None else np.asarray(cone.frame, float)
    Pinv = np.linalg.inv(P)
    pts = probe_grid(grid)
    # D T^{-n} at pts: inverse of D T^n at T^{-n} pts
    # D T^{-n} at T^n p is the inverse of D_p T^n; avoids inverse-map solves
    M = np.linalg.inv(amap.jacobian(pts, iterate))
    Mf = P @ M @ Pinv
    th = cone.theta
    eta = np.zeros(len(pts))
    for sgn in (1.0, -1.0):
        v = np.array([sgn * th, 1.0])
        w = Mf @ v
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(np.abs(w[:, 1]) > 0, np.abs(w[:, 0] / w[:, 1]), np.inf)
        eta = np.maximum(eta, slope / th)
    meas = float(np.max(eta))
    bad = np.nonzero(eta >= 1.0)[0]
    witness = [{"point": pts[i].tolist(), "ratio": float(eta[i])} for i in bad[:8]]
    if not witness and not np.isfinite(meas):
        witness = [{"point": pts[int(np.argmax(eta))].tolist(), "ratio": meas}]
    return ConeReport(bool(meas < 1.0), meas, witness, grid, iterate)


def estimate_hyperbolicity(amap: AnosovMap, horizon: int = 8, samples: int = 2048,
                           seed: int = 0, grid: int = 32) -> HyperbolicityEstimate:
    """Sampled inf/sup growth rates with the sup norm in adapted-frame coordinates."""
    rep = check_cone_invariance(amap, ConeField(1.0, amap.P), grid)
    if not rep.holds:
        raise ConeViolation("cone invariance violated; hyperbolicity undefined", rep.witness)
    rng = np.random.Generator(np.random.Philox(key=seed))
    u = rng.random((samples, 3))
    pts = u[:, :2]
    t = 2 * u[:, 2] - 1
    vu = np.column_stack([np.ones(samples), t])        # outside (or on) the stable cone
    vs = np.column_stack([t, np.ones(samples)])        # inside the stable cone
    P, Pinv = amap.P, amap.Pinv

    def supn(v):
        return np.max(np.abs(v), axis=-1)

    ru = np.empty((horizon, samples))
    rs = np.empty((horizon, samples))
    lam_plus = 0.0
    wf = (vu @ Pinv.T)
    q = pts.copy()
    for k in range(horizon):
        J = amap.dT(q)
        lam_plus = max(lam_plus, float(np.max(np.linalg.norm(J, 2, axis=(-2, -1)))),
                       float(np.max(np.linalg.norm(np.linalg.inv(J), 2, axis=(-2, -1)))))
        wf = np.einsum("pij,pj->pi", J, wf)
        q = amap.apply(q, 1)
        ru[k] = supn(wf @ P.T) / supn(vu)
    ws = (vs @ Pinv.T)
    q = pts.copy()
    for k in range(horizon):
        q = amap.apply(q, -1)
        Jinv = np.linalg.inv(amap.dT(q))
        ws = np.einsum("pij,pj->pi", Jinv, ws)
        rs[k] = supn(ws @ P.T) / supn(vs)
    n = horizon
    lam = float(np.min(ru[-1] ** (1.0 / n)))
    nu = float(np.max(rs[-1] ** (-1.0 / n)))
    ks = np.arange(1, horizon + 1)[:, None]
    c0u = np.min(ru / lam ** ks)
    c0s = np.min(rs * nu ** ks)
    c0 = float(min(1.0, c0u, c0s))
    return HyperbolicityEstimate(lam, nu, c0, rep.measured_eta, max(lam_plus, lam), samples, horizon)
