"""
Adapted foliations as local graphs x = F(x', y) over the stable coordinate.

Each chart lives on a window [-h, h]^2 (h = delta0 / 2) in adapted-frame
coordinates centred at a torus point; the leaf with label x' is
{(F(x', y), y)}.  F is stored as a tensor Chebyshev series.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cheb import Cheb1, Cheb2, RangeError, lobatto

JF_STEPS_PER_WINDOW = 200     # RK4 step = delta0 / 200
JF_BLOWUP = 1e6


class SingularFoliation(RuntimeError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class IntegratorBlowup(RuntimeError):
    pass


@dataclass(frozen=True)
class ChartWindow:
    center: tuple
    half: float
    frame: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if not (0 < self.half <= 1.0 / 16 + 1e-15):
            raise ValueError("window half-width must lie in (0, 1/16] (delta0 <= 1/8)")

    @property
    def delta0(self):
        return 2 * self.half

    def to_physical(self, z):
        """Frame coordinates -> torus point (unreduced)."""
        Pinv = np.linalg.inv(self.frame)
        return np.asarray(self.center, float) + np.asarray(z, float) @ Pinv.T


class FoliationChart:
    """Graph chart F on a window, with invariants checked at construction."""

    def __init__(self, window: ChartWindow, F: Cheb2, check=True, label=""):
        self.window = window
        self.F = F
        self.label = label
        if check:
            self.check()

    @property
    def half(self):
        return self.window.half

    @classmethod
    def from_function(cls, f: Callable, window: ChartWindow, deg=16, **kw):
        h = window.half
        return cls(window, Cheb2.from_function(f, -h, h, -h, h, deg), **kw)

    def check(self, tol=1e-10):
        x, y = self.F.nodes()
        F0 = self.F(x, np.zeros_like(x))
        err = float(np.max(np.abs(F0 - x))) if len(x) else 0.0
        if err > tol * max(1.0, self.half):
            raise ValueError(f"chart normalization F(x,0)=x violated by {err:.3e}")
        Fy = self.F.grid(x, y, 0, 1)
        if np.max(np.abs(Fy)) > 1 + 1e-12:
            raise ValueError(f"chart not adapted to the cone: max|dF/dy| = {np.max(np.abs(Fy)):.4f}")
        Fx = self.F.grid(x, y, 1, 0)
        if np.min(Fx) <= 0:
            i, j = np.unravel_index(np.argmin(Fx), Fx.shape)
            raise SingularFoliation("dF/dx not positive", witness=[float(x[i]), float(y[j])])

    def eval_F(self, x, y, orders=(0, 0), strict=True):
        return self.F(x, y, orders[0], orders[1], strict=strict)

    def nodes(self):
        return self.F.nodes()

    def leaf_points(self, xl, y):
        """Frame coordinates of leaf points (F(xl, y), y)."""
        return np.stack(np.broadcast_arrays(self.F(xl, y, strict=False), y), axis=-1)

    def leaf_label(self, x, y, tol=1e-14):
        """x' with F(x', y) = x (Newton from x)."""
        xl = np.array(x, float, copy=True)
        for _ in range(60):
            r = self.F(xl, y, strict=False) - x
            xl = xl - r / self.F(xl, y, 1, 0, strict=False)
            if np.max(np.abs(r)) <= tol * max(self.half, 1e-300):
                break
        return xl

    def to_dict(self):
        return {"center": list(map(float, self.window.center)), "half": self.window.half,
                "frame": np.asarray(self.window.frame).ravel().tolist(), "F": self.F.to_dict(),
                "label": self.label}

    @classmethod
    def from_dict(cls, d, check=False):
        w = ChartWindow(tuple(d["center"]), d["half"], np.asarray(d["frame"]).reshape(2, 2))
        return cls(w, Cheb2.from_dict(d["F"]), check=check, label=d.get("label", ""))


def compute_HF(chart: FoliationChart) -> Cheb2:
    """H^F = d_x d_y F / d_x F fitted on the chart nodes."""
    Fx = chart.F.on_nodes(1, 0)
    Fxy = chart.F.on_nodes(1, 1)
    if np.min(Fx) <= 0:
        x, y = chart.nodes()
        i, j = np.unravel_index(np.argmin(Fx), Fx.shape)
        raise SingularFoliation("dF/dx vanishes; H^F undefined", witness=[float(x[i]), float(y[j])])
    F = chart.F
    return Cheb2.from_values(Fxy / Fx, F.xa, F.xb, F.ya, F.yb)


@dataclass
class HolonomyJacobian:
    values: np.ndarray
    x: np.ndarray
    y: np.ndarray
    step: float
    order: int = 4

    def field(self, h):
        return Cheb2.from_values(self.values, -h, h, -h, h)


def compute_JF(chart: FoliationChart, hf: Cheb2 | None = None) -> HolonomyJacobian:
    """Integrate dJ/dy = J * H^F(x, y), J(x, 0) = 1, with classical RK4.

    Every node (x_i, y_j) is reached from y = 0 in M equal steps with
    |y_j| / M <= delta0 / 200.
    """
    if hf is None:
        hf = compute_HF(chart)
    x, y = chart.nodes()
    h = chart.half
    hmax = chart.window.delta0 / JF_STEPS_PER_WINDOW
    M = int(np.ceil(np.max(np.abs(y)) / hmax - 1e-9))
    M = max(M, 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    dy = Y / M
    J = np.ones_like(X)
    yc = np.zeros_like(X)

    def rhs(yy, JJ):
        return JJ * hf(X, yy, strict=False)

    for m in range(M):
        k1 = rhs(yc, J)
        k2 = rhs(yc + 0.5 * dy, J + 0.5 * dy * k1)
        k3 = rhs(yc + 0.5 * dy, J + 0.5 * dy * k2)
        k4 = rhs(yc + dy, J + dy * k3)
        J = J + dy / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        yc = yc + dy
        if np.max(np.abs(J)) > JF_BLOWUP:
            i = int(np.unravel_index(np.argmax(np.abs(J)), J.shape)[0])
            raise IntegratorBlowup(f"J^F integration blew up on x-line x = {x[i]:.6g}")
    del h
    return HolonomyJacobian(J, x, y, float(np.max(np.abs(dy))), 4)


def jf_direct(chart: FoliationChart):
    """Direct-determinant route: d_xF(x, y) / d_xF(x, 0) on nodes."""
    x, y = chart.nodes()
    Fx = chart.F.grid(x, y, 1, 0)
    Fx0 = chart.F(x, np.zeros_like(x), 1, 0)
    return Fx / Fx0[:, None]


# -- families -----------------------------------------------------------------

def center_grid(delta0, stride=1, offset=(0.0, 0.0)):
    """Chart centres on the torus with spacing delta0/4 (every stride-th one)."""
    sp = delta0 / 4
    m = int(round(1.0 / sp))
    idx = np.arange(0, m, stride)
    t = (idx * sp) % 1.0
    X, Y = np.meshgrid(t + offset[0], t + offset[1], indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=-1) % 1.0


class FoliationFamily:
    """Charts at a set of centres, plus a generator giving the chart at any centre."""

    def __init__(self, charts, centers, generation=0, generator=None, name="", frame=None,
                 params=None):
        self.charts = list(charts)
        self.centers = np.asarray(centers, float)
        self.generation = generation
        self.generator = generator
        self.name = name
        self.frame = frame
        self.params = params or {}

    def chart_at(self, center):
        if self.generator is None:
            raise ValueError("family has no generator for off-grid centres")
        return self.generator(np.asarray(center, float))

    @classmethod
    def from_generator(cls, generator, centers, name="", frame=None, params=None):
        charts = [generator(c) for c in np.asarray(centers, float)]
        return cls(charts, centers, 0, generator, name, frame, params)

    def __len__(self):
        return len(self.charts)

    def to_json(self):
        return json.dumps({"name": self.name, "generation": self.generation,
                           "params": self.params,
                           "charts": [c.to_dict() for c in self.charts]}, sort_keys=True)


def analytic_family(kind, frame, delta0=0.1, centers=None, deg=16, slope=0.0, a=0.0,
                    stride=8, name=None):
    """Vertical (F = x), constant-slope (F = x + c y) or curvature (F = x + a x y) family."""
    h = delta0 / 2
    if centers is None:
        centers = center_grid(delta0, stride)
    frame = np.asarray(frame, float)
    if kind == "vertical":
        f = lambda x, y: x + 0 * y
    elif kind == "slope":
        f = lambda x, y: x + slope * y
    elif kind == "curvature":
        f = lambda x, y: x + a * x * y
    else:
        raise ValueError(kind)
    label = name or (kind if kind == "vertical" else f"{kind}:{slope if kind == 'slope' else a:+g}")

    def gen(c):
        return FoliationChart.from_function(f, ChartWindow(tuple(map(float, c)), h, frame), deg,
                                            label=label)

    return FoliationFamily.from_generator(gen, centers, label, frame,
                                          {"kind": kind, "slope": slope, "a": a, "delta0": delta0,
                                           "deg": deg})


def recentering_defect(chart_xi: FoliationChart, chart_zeta: FoliationChart, x_shift, npts=9):
    """sup |F_zeta(u, y) - (F_xi(x + u, y) - x)| over a sub-window of overlap."""
    h = min(chart_xi.half, chart_zeta.half)
    lim = h - abs(x_shift)
    if lim <= 0:
        raise ValueError("windows do not overlap")
    u = lim * lobatto(npts - 1) * 0.999
    y = h * lobatto(npts - 1) * 0.999
    U, Y = np.meshgrid(u, y, indexing="ij")
    a = chart_zeta.F(U, Y)
    b = chart_xi.F(x_shift + U, Y, strict=False) - x_shift
    return float(np.max(np.abs(a - b)))


# -- budget --------------------------------------------------------------------

@dataclass
class RegularityBudget:
    L: float
    r: int
    deriv_sup: dict
    hf_sup: dict
    passes: bool
    checked: list = field(default_factory=list)

    def thresholds(self, L=None):
        L = self.L if L is None else L
        return ({k: L ** ((k - 1) ** 2) for k in self.deriv_sup},
                {k: L ** ((k + 1) ** 2) for k in self.hf_sup})

    def passes_at(self, L):
        td, th = self.thresholds(L)
        return all(self.deriv_sup[k] <= td[k] for k in td) and all(self.hf_sup[k] <= th[k] for k in th)

    def to_dict(self):
        return {"L": self.L, "r": self.r, "deriv_sup": {str(k): v for k, v in self.deriv_sup.items()},
                "hf_sup": {str(k): v for k, v in self.hf_sup.items()}, "passes": self.passes,
                "checked": self.checked}


def chart_sups(chart: FoliationChart, r: int, hf: Cheb2 | None = None):
    if hf is None:
        hf = compute_HF(chart)
    ds = {k: float(np.max(np.abs(chart.F.on_nodes(0, k)))) for k in range(2, r + 1)}
    hs = {k: float(np.max(np.abs(hf.on_nodes(0, k)))) for k in range(0, r - 1)}
    return ds, hs


def check_membership(family, L: float, r: int, hfs=None) -> RegularityBudget:
    if r < 2:
        raise ValueError("r must be at least 2")
    ds = {k: 0.0 for k in range(2, r + 1)}
    hs = {k: 0.0 for k in range(0, r - 1)}
    charts = family.charts if isinstance(family, FoliationFamily) else list(family)
    for i, ch in enumerate(charts):
        if min(ch.F.deg) < r + 2:
            raise ValueError(f"chart {i} fitted below degree r+2")
        d, h = chart_sups(ch, r, None if hfs is None else hfs[i])
        for k in ds:
            ds[k] = max(ds[k], d[k])
        for k in hs:
            hs[k] = max(hs[k], h[k])
    b = RegularityBudget(L, r, ds, hs, False,
                         checked=["F(x,0)=x", "|dF/dy|<=1", "dF/dx>0", "deriv budget", "H^F budget"])
    b.passes = b.passes_at(L)
    return b


def holonomy_map(chart: FoliationChart, from_y, to_y, x, hol: HolonomyJacobian | None = None):
    """Slide x at height from_y along leaves to height to_y.

    Returns (image, jacobian) where jacobian = J(x', to_y) / J(x', from_y) for
    the leaf label x'.
    """
    h = chart.half
    if abs(from_y) > h * (1 + 1e-12) or abs(to_y) > h * (1 + 1e-12):
        raise RangeError("transversal height outside the window")
    x = np.asarray(x, float)
    y0 = np.full_like(x, from_y)
    xl = chart.leaf_label(x, y0)
    if np.any(np.abs(xl) > h * (1 + 1e-9)):
        raise RangeError("leaf label exits the window")
    img = chart.F(xl, np.full_like(x, to_y))
    if hol is None:
        hol = compute_JF(chart)
    Jf = hol.field(h)
    jac = Jf(xl, np.full_like(x, to_y)) / Jf(xl, y0)
    return img, jac
