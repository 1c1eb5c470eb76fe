"""
Chebyshev interpolants on symmetric (or shifted) intervals and truncated Taylor
series arithmetic used for chain-rule derivatives along leaves.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C


class RangeError(ValueError):
    pass


def lobatto(n):
    """Chebyshev-Lobatto nodes on [-1, 1], ascending, n+1 points."""
    return -np.cos(np.pi * np.arange(n + 1) / n)


def _inv_vander(n):
    V = C.chebvander(lobatto(n), n)
    return np.linalg.inv(V)


_VINV = {}


def inv_vander(n):
    if n not in _VINV:
        _VINV[n] = _inv_vander(n)
    return _VINV[n]


@lru_cache(maxsize=64)
def lobatto_interp(n, nf):
    """Matrix taking values on n+1 Lobatto nodes to the interpolant on nf+1 Lobatto nodes."""
    return C.chebvander(lobatto(nf), n) @ inv_vander(n)


CHOP = 1e-15


def chop_coeffs(c, tol):
    """Zero coefficients below tol * max|c| (roundoff floor); keeps spectral
    derivatives from amplifying noise on small windows."""
    if not tol:
        return c
    m = np.max(np.abs(c)) if c.size else 0.0
    return np.where(np.abs(c) < tol * m, 0.0, c)


class Cheb1:
    """1-D Chebyshev series on [a, b]."""

    def __init__(self, coeffs, a, b):
        self.c = np.asarray(coeffs, float)
        self.a, self.b = float(a), float(b)

    @property
    def deg(self):
        return len(self.c) - 1

    @property
    def mid(self):
        return 0.5 * (self.a + self.b)

    @property
    def half(self):
        return 0.5 * (self.b - self.a)

    def nodes(self, n=None):
        n = self.deg if n is None else n
        return self.mid + self.half * lobatto(n)

    @classmethod
    def from_values(cls, vals, a, b, chop=CHOP):
        n = len(vals) - 1
        return cls(chop_coeffs(inv_vander(n) @ np.asarray(vals, float), chop), a, b)

    @classmethod
    def from_function(cls, f, a, b, deg):
        x = 0.5 * (a + b) + 0.5 * (b - a) * lobatto(deg)
        return cls.from_values(f(x), a, b)

    @classmethod
    def from_points(cls, x, y, deg, a=None, b=None):
        x = np.asarray(x, float)
        a = np.min(x) if a is None else a
        b = np.max(x) if b is None else b
        t = (x - 0.5 * (a + b)) / (0.5 * (b - a))
        V = C.chebvander(t, deg)
        c, *_ = np.linalg.lstsq(V, np.asarray(y, float), rcond=None)
        return cls(c, a, b)

    def _t(self, x, strict=True, slack=1e-9):
        t = (np.asarray(x, float) - self.mid) / self.half
        if strict and np.any(np.abs(t) > 1 + slack):
            raise RangeError(f"point outside interpolation interval [{self.a}, {self.b}]")
        return t

    def __call__(self, x, d=0, strict=True):
        c = self.c
        if d:
            c = C.chebder(c, d, scl=1.0 / self.half)
        return C.chebval(self._t(x, strict), c)

    def deriv(self, d=1):
        return Cheb1(C.chebder(self.c, d, scl=1.0 / self.half), self.a, self.b)

    def inverse(self, v, x0=None, tol=1e-14, maxit=60):
        """Solve f(x) = v for monotone f by safeguarded Newton."""
        v = np.asarray(v, float)
        lo = np.full(v.shape, self.a)
        hi = np.full(v.shape, self.b)
        flo = self(lo) - v
        inc = self(self.b) > self(self.a)
        x = np.clip(self.mid + 0 * v if x0 is None else np.asarray(x0, float), self.a, self.b)
        for _ in range(maxit):
            fx = self(x) - v
            # maintain bracket
            left = (fx < 0) == inc
            lo = np.where(left, x, lo)
            hi = np.where(left, hi, x)
            dfx = self(x, 1)
            xn = x - fx / np.where(dfx == 0, 1e-300, dfx)
            bad = (xn <= lo) | (xn >= hi) | ~np.isfinite(xn)
            xn = np.where(bad, 0.5 * (lo + hi), xn)
            if np.all(np.abs(xn - x) <= tol * max(self.half, 1e-300)):
                x = xn
                break
            x = xn
        del flo
        return x


class Cheb2:
    """Tensor Chebyshev series on [xa, xb] x [ya, yb]."""

    def __init__(self, coeffs, xa, xb, ya, yb):
        self.c = np.asarray(coeffs, float)
        self.xa, self.xb, self.ya, self.yb = map(float, (xa, xb, ya, yb))

    @classmethod
    def square(cls, coeffs, h):
        return cls(coeffs, -h, h, -h, h)

    @property
    def deg(self):
        return (self.c.shape[0] - 1, self.c.shape[1] - 1)

    @property
    def hx(self):
        return 0.5 * (self.xb - self.xa)

    @property
    def hy(self):
        return 0.5 * (self.yb - self.ya)

    @property
    def mx(self):
        return 0.5 * (self.xa + self.xb)

    @property
    def my(self):
        return 0.5 * (self.ya + self.yb)

    def nodes(self):
        nx, ny = self.deg
        return self.mx + self.hx * lobatto(nx), self.my + self.hy * lobatto(ny)

    @classmethod
    def from_values(cls, vals, xa, xb, ya, yb, chop=CHOP):
        vals = np.asarray(vals, float)
        nx, ny = vals.shape[0] - 1, vals.shape[1] - 1
        c = inv_vander(nx) @ vals @ inv_vander(ny).T
        return cls(chop_coeffs(c, chop), xa, xb, ya, yb)

    @classmethod
    def from_function(cls, f, xa, xb, ya, yb, deg):
        nx, ny = (deg, deg) if np.isscalar(deg) else deg
        x = 0.5 * (xa + xb) + 0.5 * (xb - xa) * lobatto(nx)
        y = 0.5 * (ya + yb) + 0.5 * (yb - ya) * lobatto(ny)
        X, Y = np.meshgrid(x, y, indexing="ij")
        return cls.from_values(f(X, Y), xa, xb, ya, yb)

    def _coef(self, dx, dy):
        c = self.c
        if dx:
            c = C.chebder(c, dx, scl=1.0 / self.hx, axis=0)
        if dy:
            c = C.chebder(c, dy, scl=1.0 / self.hy, axis=1)
        if c.size == 0:
            c = np.zeros((1, 1))
        return c

    def _tt(self, x, y, strict, slack=1e-9):
        tx = (np.asarray(x, float) - self.mx) / self.hx
        ty = (np.asarray(y, float) - self.my) / self.hy
        if strict and (np.any(np.abs(tx) > 1 + slack) or np.any(np.abs(ty) > 1 + slack)):
            raise RangeError("point outside chart window")
        return tx, ty

    def __call__(self, x, y, dx=0, dy=0, strict=True):
        tx, ty = self._tt(x, y, strict)
        return C.chebval2d(tx, ty, self._coef(dx, dy))

    def grid(self, x, y, dx=0, dy=0, strict=True):
        tx, ty = self._tt(x, y, strict)
        return C.chebgrid2d(tx, ty, self._coef(dx, dy))

    def deriv(self, dx=0, dy=0):
        return Cheb2(self._coef(dx, dy), self.xa, self.xb, self.ya, self.yb)

    def on_nodes(self, dx=0, dy=0):
        x, y = self.nodes()
        return self.grid(x, y, dx, dy)

    def to_dict(self):
        return {"domain": [self.xa, self.xb, self.ya, self.yb], "shape": list(self.c.shape),
                "coeffs": self.c.ravel(order="C").tolist()}

    @classmethod
    def from_dict(cls, d):
        c = np.asarray(d["coeffs"], float).reshape(d["shape"])
        return cls(c, *d["domain"])


def cheb_diff_matrix(n, h=1.0):
    """Spectral differentiation matrix on ascending Lobatto nodes of [-h, h]."""
    Vinv = inv_vander(n)
    x = lobatto(n)
    D = np.zeros((n + 1, n + 1))
    for j in range(n + 1):
        e = np.zeros(n + 1)
        e[j] = 1.0
        D[:, j] = C.chebval(x, C.chebder(Vinv @ e))
    return D / h


# -- truncated Taylor series -------------------------------------------------
# A series is an array s[..., m] with s[..., j] = f^{(j)}(y0) / j!.

def taylor_mul(a, b):
    m = a.shape[-1]
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    for j in range(m):
        out[..., j:] += a[..., j:j + 1] * b[..., : m - j]
    return out


def taylor_exp(a):
    """exp of a truncated series (complex allowed) via e' = a' e."""
    m = a.shape[-1]
    e = np.zeros(a.shape, dtype=np.result_type(a, float))
    e[..., 0] = np.exp(a[..., 0])
    for j in range(1, m):
        acc = 0
        for k in range(1, j + 1):
            acc = acc + k * a[..., k] * e[..., j - k]
        e[..., j] = acc / j
    return e


def taylor_compose(outer, inner):
    """outer(y0 + delta) with outer given by Taylor coefficients at y0 and delta = inner - inner[0]."""
    m = inner.shape[-1]
    d = inner.copy()
    d[..., 0] = 0
    out = np.zeros(np.broadcast_shapes(outer.shape[:-1], inner.shape[:-1]) + (m,),
                   dtype=np.result_type(outer, inner))
    pw = np.zeros_like(out)
    pw[..., 0] = 1
    for j in range(m):
        out += outer[..., j:j + 1] * pw
        pw = taylor_mul(pw, d)
    return out


def derivs_to_taylor(derivs):
    """Stack f, f', ..., f^(m-1) along the last axis and divide by factorials."""
    d = np.stack(derivs, axis=-1)
    fac = np.cumprod(np.r_[1.0, np.arange(1, d.shape[-1])])
    return d / fac


def taylor_to_derivs(t):
    fac = np.cumprod(np.r_[1.0, np.arange(1, t.shape[-1])])
    return t * fac
