"""
Band-limited trigonometric fields on the torus [0,1)^2.

A field stores complex coefficients c[comp, k1 + K, k2 + K] for |k1|, |k2| <= K;
value(p) = sum_k c_k exp(2 pi i <k, p>).  Real fields are Hermitian-symmetric and
evaluate to real arrays.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d


class TrigField:
    def __init__(self, coeffs, real=True):
        c = np.asarray(coeffs, complex)
        if c.ndim == 2:
            c = c[None]
        if c.shape[1] != c.shape[2] or c.shape[1] % 2 == 0:
            raise ValueError("coefficient block must be (ncomp, 2K+1, 2K+1)")
        self.c = c
        self.real = real

    @property
    def K(self):
        return (self.c.shape[1] - 1) // 2

    @property
    def ncomp(self):
        return self.c.shape[0]

    @property
    def freqs(self):
        return np.arange(-self.K, self.K + 1)

    # -- constructors -------------------------------------------------------
    @classmethod
    def zeros(cls, K, ncomp=1):
        return cls(np.zeros((ncomp, 2 * K + 1, 2 * K + 1), complex))

    @classmethod
    def constant(cls, value, K=0):
        f = cls.zeros(K)
        f.c[0, K, K] = value
        return f

    @classmethod
    def monomial(cls, k1, k2, kind="cos", K=None, amp=1.0, ncomp=1, comp=0):
        K = max(abs(k1), abs(k2)) if K is None else K
        f = cls.zeros(K, ncomp)
        if k1 == 0 and k2 == 0:
            f.c[comp, K, K] = amp if kind == "cos" else 0.0
            return f
        if kind == "cos":
            f.c[comp, K + k1, K + k2] += amp / 2
            f.c[comp, K - k1, K - k2] += amp / 2
        elif kind == "sin":
            f.c[comp, K + k1, K + k2] += amp / 2j
            f.c[comp, K - k1, K - k2] -= amp / 2j
        else:
            raise ValueError(kind)
        return f

    @classmethod
    def random(cls, K, rng, ncomp=1, decay=1.0):
        """Real random field with coefficients damped like (1 + |k|)^-decay."""
        k = np.arange(-K, K + 1)
        K1, K2 = np.meshgrid(k, k, indexing="ij")
        w = (1.0 + np.hypot(K1, K2)) ** (-decay)
        z = (rng.standard_normal((ncomp, 2 * K + 1, 2 * K + 1))
             + 1j * rng.standard_normal((ncomp, 2 * K + 1, 2 * K + 1))) * w
        z = 0.5 * (z + np.conj(z[:, ::-1, ::-1]))
        return cls(z)

    @classmethod
    def from_grid(cls, vals, K):
        """Fit from samples on the uniform M x M grid (M > 2K) by FFT."""
        vals = np.asarray(vals)
        if vals.ndim == 2:
            vals = vals[None]
        M = vals.shape[-1]
        F = np.fft.fft2(vals, axes=(-2, -1)) / (M * M)
        idx = np.arange(-K, K + 1) % M
        c = F[:, idx][:, :, idx]
        return cls(c, real=np.isrealobj(vals))

    def copy(self):
        return TrigField(self.c.copy(), self.real)

    def to_K(self, K):
        if K == self.K:
            return self.copy()
        out = TrigField.zeros(K, self.ncomp)
        m = min(K, self.K)
        out.c[:, K - m:K + m + 1, K - m:K + m + 1] = self.c[:, self.K - m:self.K + m + 1,
                                                            self.K - m:self.K + m + 1]
        return out

    # -- algebra --------------------------------------------------------------
    def __add__(self, other):
        if np.isscalar(other):
            f = self.copy()
            f.c[:, self.K, self.K] += other
            return f
        K = max(self.K, other.K)
        return TrigField(self.to_K(K).c + other.to_K(K).c, self.real and other.real)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rmul__(self, a):
        return TrigField(a * self.c, self.real and np.isrealobj(a))

    def __mul__(self, other):
        if np.isscalar(other):
            return other * self
        oc = other.c if other.ncomp == self.ncomp else [other.c[0]] * self.ncomp
        out = np.stack([convolve2d(a, b) for a, b in zip(self.c, oc)])
        return TrigField(out, self.real and other.real)

    def component(self, i):
        return TrigField(self.c[i:i + 1].copy(), self.real)

    def deriv(self, a=0, b=0):
        k = 2j * np.pi * self.freqs
        m = np.outer(k ** a, k ** b)
        return TrigField(self.c * m, self.real)

    def div(self):
        if self.ncomp != 2:
            raise ValueError("divergence needs a 2-vector field")
        return TrigField(self.component(0).deriv(1, 0).c + self.component(1).deriv(0, 1).c, self.real)

    def heat_x(self, t):
        m = np.exp(-4 * np.pi ** 2 * self.freqs ** 2 * t)
        return TrigField(self.c * m[:, None], self.real)

    def mean(self):
        return self.c[:, self.K, self.K].real if self.real else self.c[:, self.K, self.K]

    # -- evaluation ---------------------------------------------------------
    def grid(self, M, a=0, b=0):
        """Values on the M x M uniform grid (x_i = i / M); shape (ncomp, M, M)."""
        K = self.K
        if M <= 2 * K:
            raise ValueError("grid too coarse for band limit")
        c = self.c if (a == 0 and b == 0) else self.deriv(a, b).c
        F = np.zeros((self.ncomp, M, M), complex)
        idx = np.arange(-K, K + 1) % M
        F[:, idx[:, None], idx[None, :]] = c
        v = np.fft.ifft2(F, axes=(-2, -1)) * (M * M)
        return v.real if self.real else v

    def __call__(self, p, a=0, b=0):
        """Values at points p[..., 2]; shape (ncomp, ...)."""
        p = np.asarray(p, float)
        k = self.freqs
        e1 = np.exp(2j * np.pi * p[..., 0, None] * k)
        e2 = np.exp(2j * np.pi * p[..., 1, None] * k)
        if a or b:
            kk = 2j * np.pi * k
            e1 = e1 * kk ** a
            e2 = e2 * kk ** b
        v = np.einsum("...a,cab,...b->c...", e1, self.c, e2)
        return v.real if self.real else v

    def integrate(self, other=None):
        """int f (or int f g) over the torus, per component."""
        if other is None:
            return self.mean()
        K = min(self.K, other.K)
        a = self.to_K(K).c
        b = other.to_K(K).c
        # sum_k a_k b_{-k}
        v = np.sum(a * b[:, ::-1, ::-1], axis=(-2, -1))
        return v.real if (self.real and other.real) else v

    def to_dict(self):
        return {"K": self.K, "ncomp": self.ncomp,
                "re": self.c.real.ravel().tolist(), "im": self.c.imag.ravel().tolist()}

    @classmethod
    def from_dict(cls, d):
        n = 2 * d["K"] + 1
        c = (np.asarray(d["re"]) + 1j * np.asarray(d["im"])).reshape(d["ncomp"], n, n)
        return cls(c)


def axis_exps(X, K, m):
    """Series of exp(2 pi i k X_j(t)) for |k| <= K along jets X[..., 2, m]:
    two arrays of shape (..., 2K+1, m)."""
    from .cheb import taylor_exp
    k = np.arange(-K, K + 1, dtype=float)
    X = np.asarray(X, float)
    e1 = taylor_exp(2j * np.pi * k[:, None] * X[..., 0, None, :])
    e2 = taylor_exp(2j * np.pi * k[:, None] * X[..., 1, None, :])
    return e1, e2


def taylor_along_curve(field, X, m, E=None):
    """Taylor coefficients of field(X(t)) at t = 0 for a curve given by Taylor
    coefficients X[..., 2, m]; returns array (ncomp, ..., m).

    Uses exp(2 pi i <k, X(t)>) = exp(2 pi i k1 X1(t)) exp(2 pi i k2 X2(t)) so the
    sum over (k1, k2) factorises; E = axis_exps(X, K', m) with K' >= field.K may be
    passed to share the exponentials between fields.
    """
    from .cheb import taylor_mul
    if E is None:
        E = axis_exps(X, field.K, m)
    e1, e2 = E
    Ke = (e1.shape[-2] - 1) // 2
    sl = slice(Ke - field.K, Ke + field.K + 1)
    e1, e2 = e1[..., sl, :], e2[..., sl, :]
    X = np.asarray(X)
    out = np.zeros((field.ncomp,) + X.shape[:-2] + (m,), complex)
    e2t = np.swapaxes(e2, -1, -2)                          # (..., m, b)
    flat = e2t.reshape(-1, e2t.shape[-1])
    for comp in range(field.ncomp):
        # S[..., a, m] = sum_b c[a, b] e2[..., b, m]
        S = np.swapaxes((flat @ field.c[comp].T).reshape(e2t.shape), -1, -2)
        out[comp] = np.sum(taylor_mul(e1, S), axis=-2)
    return out.real if field.real else out


class DensityField:
    """Density on the torus: a scalar TrigField ('trig') or cell averages on an
    N x N grid ('cells', values[i, j] on [i/N, (i+1)/N) x [j/N, (j+1)/N)).

    Pairings with trigonometric test functions are exact in both representations
    through the moments m_k = int h exp(2 pi i <k, p>).
    """

    def __init__(self, data, kind):
        if kind not in ("trig", "cells"):
            raise ValueError(kind)
        self.kind = kind
        self.data = data if kind == "trig" else np.asarray(data, float)

    @classmethod
    def trig(cls, field):
        return cls(field, "trig")

    @classmethod
    def cells(cls, values):
        v = np.asarray(values, float)
        if v.ndim == 1:
            N = int(round(np.sqrt(v.size)))
            v = v.reshape(N, N)
        return cls(v, "cells")

    @property
    def N(self):
        return self.data.shape[0] if self.kind == "cells" else None

    def moments(self, K):
        k = np.arange(-K, K + 1)
        if self.kind == "trig":
            f = self.data
            out = np.zeros((2 * K + 1, 2 * K + 1), complex)
            m = min(K, f.K)
            # int h e_k = h_{-k}
            blk = f.c[0, f.K - m:f.K + m + 1, f.K - m:f.K + m + 1][::-1, ::-1]
            out[K - m:K + m + 1, K - m:K + m + 1] = blk
            return out
        h = self.data
        N = h.shape[0]
        S = np.fft.ifft2(h) * (N * N)
        idx = k % N
        ph = np.exp(1j * np.pi * k / N) * np.sinc(k / N) / N
        return S[idx[:, None], idx[None, :]] * np.outer(ph, ph)

    def integral(self):
        return float(self.moments(0)[0, 0].real)

    def pair(self, phi: TrigField):
        """int h * phi per component of phi."""
        m = self.moments(phi.K)
        v = np.einsum("cab,ab->c", phi.c, m)
        return v.real if phi.real else v

    def pair_div(self, phi: TrigField):
        return self.pair(phi.div())[0]

    def to_dict(self):
        if self.kind == "trig":
            return {"kind": "trig", "field": self.data.to_dict()}
        return {"kind": "cells", "N": self.N, "values": self.data.ravel().tolist()}
