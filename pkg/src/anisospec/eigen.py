"""
Power iteration and implicitly restarted Arnoldi over a matrix-vector product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ArnoldiNoConvergence(RuntimeError):
    def __init__(self, msg, values=None, residuals=None):
        super().__init__(msg)
        self.values = values
        self.residuals = residuals


def power_iteration(matvec, v0, tol=1e-10, maxiter=2000, norm=lambda v: np.sum(np.abs(v))):
    """Dominant eigenvector of a nonnegative operator; v normalised in the given norm."""
    v = np.asarray(v0, float)
    v = v / norm(v)
    for it in range(1, maxiter + 1):
        w = matvec(v)
        lam = norm(w)
        w = w / lam
        d = norm(w - v)
        v = w
        if d <= tol:
            return v, lam, it, d
    return v, lam, maxiter, d


@dataclass
class ArnoldiResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    restarts: int
    converged: bool


def _extend(matvec, V, H, j0, m):
    """Grow an Arnoldi factorisation from column j0 to m (classical Gram-Schmidt, one
    reorthogonalisation pass)."""
    for j in range(j0, m):
        w = matvec(V[:, j])
        h = V[:, : j + 1].conj().T @ w
        w = w - V[:, : j + 1] @ h
        h2 = V[:, : j + 1].conj().T @ w
        w = w - V[:, : j + 1] @ h2
        h = h + h2
        beta = np.linalg.norm(w)
        H[: j + 1, j] = h
        H[j + 1, j] = beta
        if beta < 1e-300:
            # invariant subspace: continue with a fresh orthogonal direction
            r = np.cos(np.arange(V.shape[0]) * (j + 1.618))
            r = r - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ r)
            V[:, j + 1] = r / np.linalg.norm(r)
            H[j + 1, j] = 0.0
        else:
            V[:, j + 1] = w / beta


def _keep_pairs(theta, k, m, rtol=1e-6):
    """Grow the kept set so that no near-conjugate partner of a kept Ritz value is used
    as a shift (for real operators an exact shift at one member of a pair would purge
    an eigenvalue that belongs to the wanted set)."""
    kk = k
    cap = k + (m - k) // 2                 # keep at least half of the unwanted Ritz values as shifts
    scale = np.maximum(np.abs(theta), 1e-300)
    j = 0
    while j < kk:
        z = theta[j]
        if abs(z.imag) > rtol * scale[j]:
            d = np.abs(theta - np.conj(z)) / scale[j]
            d[j] = np.inf
            i = int(np.argmin(d))
            if d[i] < rtol ** 0.5 and kk <= i < cap:
                kk = i + 1
        j += 1
    return kk


def arnoldi(matvec, n, k, m=None, v0=None, tol=1e-10, maxiter=2000):
    """k largest-modulus eigenvalues of a linear operator on C^n by implicitly restarted
    Arnoldi with exact shifts.

    Three extra Ritz values are converged internally (restart dimension m defaults
    to three times that padded count) so that a modulus cluster straddling
    position k is not split.
    """
    kout = k
    k = k + 3
    m = min(3 * k, n) if m is None else min(max(m, k + 2), n)
    if k >= m:
        raise ValueError("need k < m <= n")
    V = np.zeros((n, m + 1), complex)
    H = np.zeros((m + 1, m), complex)
    v = np.ones(n) if v0 is None else np.asarray(v0, complex)
    V[:, 0] = v / np.linalg.norm(v)
    _extend(matvec, V, H, 0, m)
    for it in range(maxiter):
        theta, Y = np.linalg.eig(H[:m, :m])
        order = np.lexsort((np.angle(theta), -np.round(np.abs(theta), 13)))
        theta, Y = theta[order], Y[:, order]
        res = np.abs(H[m, m - 1]) * np.abs(Y[m - 1, :k])
        scale = np.maximum(np.abs(theta[:k]), np.finfo(float).eps ** (2 / 3))
        if np.all(res <= tol * scale):
            vecs = V[:, :m] @ Y[:, :kout]
            return ArnoldiResult(theta[:kout], vecs, res[:kout], it, True)
        kk = _keep_pairs(theta, k, m)
        Q = np.eye(m, dtype=complex)
        Hm = H[:m, :m].copy()
        for mu in theta[kk:]:
            q, r = np.linalg.qr(Hm - mu * np.eye(m))
            Hm = r @ q + mu * np.eye(m)
            Q = Q @ q
        fm = V[:, m] * H[m, m - 1]
        fk = V[:, :m] @ Q[:, kk] * Hm[kk, kk - 1] + fm * Q[m - 1, kk - 1]
        V[:, :kk] = V[:, :m] @ Q[:, :kk]
        H[:, :] = 0
        H[:kk, :kk] = Hm[:kk, :kk]
        beta = np.linalg.norm(fk)
        H[kk, kk - 1] = beta
        V[:, kk] = fk / beta if beta > 1e-300 else V[:, kk]
        _extend(matvec, V, H, kk, m)
    raise ArnoldiNoConvergence("Arnoldi did not converge", theta[:kout], res[:kout])
