"""Independent reference computations used by the tests."""
import itertools

import numpy as np


def check(r, alpha):
    return np.where(r < 0, (alpha - 1.0) * r, alpha * r)


def qr_objective(P, y, theta, alpha, w):
    return float(np.sum(w * check(y - P @ theta, alpha)))


def qr_grid_oracle_1d(y, alpha, w=None, step=1e-4):
    """Intercept-only check-loss minimum by scanning [min y, max y]."""
    y = np.asarray(y, float)
    w = np.ones_like(y) if w is None else np.asarray(w, float)
    grid = np.arange(y.min(), y.max() + step / 2, step)
    vals = np.array([np.sum(w * check(y - g, alpha)) for g in grid])
    return float(vals.min()), float(grid[vals.argmin()])


def qr_vertex_oracle(P, y, alpha, w):
    """Global minimum over the finite candidate grid of elemental fits.

    A linear-programming basic solution interpolates k observations, so the
    minimum of the check-loss objective is attained at one of the
    (n choose k) exact fits through k rows.
    """
    n, k = P.shape
    best, arg = np.inf, None
    for rows in itertools.combinations(range(n), k):
        A = P[list(rows)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        t = np.linalg.solve(A, y[list(rows)])
        v = qr_objective(P, y, t, alpha, w)
        if v < best:
            best, arg = v, t
    return best, arg


def support_by_enumeration(x, z, t0, t1, q, w=None):
    """max over phi in prod_i {t0_i, t1_i} of q' (E[x z'])^{-1} E[z phi]."""
    n = x.shape[0]
    w = np.ones(n) if w is None else np.asarray(w, float)
    M = (x * w[:, None]).T @ z / w.sum()
    a = q @ np.linalg.inv(M)
    best = -np.inf
    for pick in itertools.product((0, 1), repeat=n):
        phi = np.where(np.array(pick) == 1, t1, t0)
        best = max(best, float(a @ ((z * (w * phi)[:, None]).sum(axis=0) / w.sum())))
    return best


def support_by_enumeration_fast(x, z, t0, t1, q, w=None):
    """Same maximum as :func:`support_by_enumeration`, with all 2^n
    selections evaluated as one matrix product."""
    n = x.shape[0]
    w = np.ones(n) if w is None else np.asarray(w, float)
    M = (x * w[:, None]).T @ z / w.sum()
    a = np.linalg.solve(M.T, q)
    coef = w * (z @ a) / w.sum()
    picks = ((np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)
    phi = np.where(picks, t1[None, :], t0[None, :])
    return float(np.max(phi @ coef))
