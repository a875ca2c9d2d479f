"""Weighted convex fitting routines behind every bounding-function estimator.

All three solvers take observation weights so that the same code path serves
the point estimate (unit weights) and the Bayesian bootstrap (normalized
exponential weights).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import lsq_linear
from scipy.special import expit, log_ndtr, ndtri

from .errors import ParameterError, SeparationError

PROB_CLIP = 1e-12
LINKS = ("logit", "probit")


@dataclass(frozen=True)
class FitResult:
    theta: np.ndarray
    objective: float
    iterations: int
    converged: bool
    ridge_used: bool = False
    foc_residual: float = 0.0


def _check_inputs(P, y, w):
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    y = np.asarray(y, dtype=float).reshape(-1)
    n, k = P.shape
    w = np.ones(n) if w is None else np.asarray(w, dtype=float).reshape(-1)
    if len(y) != n or len(w) != n:
        raise ParameterError("P, y and w must have matching row counts")
    if k > n:
        raise ParameterError(f"k={k} exceeds n={n}")
    if np.any(w < 0) or not np.any(w > 0):
        raise ParameterError("weights must be nonnegative and not all zero")
    return P, y, w


def _solve_gram(G, b):
    """Solve G t = b for symmetric PSD G, adding a tiny ridge if singular."""
    k = G.shape[0]
    try:
        c = scipy.linalg.cho_factor(G, check_finite=False)
        t = scipy.linalg.cho_solve(c, b, check_finite=False)
        d = np.abs(np.diag(c[0]))
        rc = (d.min() / d.max()) ** 2 if d.max() > 0 else 0.0     # cheap 1/cond estimate
        if np.all(np.isfinite(t)) and rc > 1e-14:
            return t, False
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        pass
    lam = 1e-10 * np.trace(G) / k
    t = scipy.linalg.solve(G + lam * np.eye(k), b, assume_a="pos")
    return t, True


# ------------------------------------------------------------ least squares

def weighted_least_squares(P, y, w=None) -> FitResult:
    """Minimize sum_i w_i (y_i - p_i't)^2 through the normal equations."""
    P, y, w = _check_inputs(P, y, w)
    Pw = P * w[:, None]
    G = Pw.T @ P
    t, ridge = _solve_gram(G, Pw.T @ y)
    r = y - P @ t
    foc = np.max(np.abs(Pw.T @ r)) if len(t) else 0.0
    return FitResult(t, float(np.sum(w * r * r)), 1, True, ridge, float(foc))


# -------------------------------------------------------- quantile regression

def check_loss(r, alpha):
    r = np.asarray(r, dtype=float)
    return r * (alpha - (r < 0))


def quantile_objective(P, y, theta, alpha, w=None):
    P, y, w = _check_inputs(P, y, w)
    return float(np.sum(w * check_loss(y - P @ theta, alpha)))


def _qr_foc_residual(P, y, w, theta, alpha, scale):
    """Distance of zero from the subdifferential of the check-loss objective.

    Rows with (numerically) zero residual may take any subgradient in
    [alpha - 1, alpha]; the remaining rows contribute alpha - 1{r < 0}.
    """
    r = y - P @ theta
    zero = np.abs(r) <= 1e-10 * scale
    psi = alpha - (r < 0)
    g_fixed = P[~zero].T @ (w[~zero] * psi[~zero])
    if not np.any(zero):
        return float(np.linalg.norm(g_fixed))
    A = P[zero].T * w[zero]
    sol = lsq_linear(A, -g_fixed, bounds=(alpha - 1.0, alpha), method="bvls")
    return float(np.linalg.norm(A @ sol.x + g_fixed))


def _vertex_from(P, y, w, theta, scale, return_basis=False):
    """Interpolate the k rows with the smallest residuals that form a
    nonsingular system (a basic solution of the LP)."""
    k = P.shape[1]
    r = np.abs(y - P @ theta)
    r[w <= 0] = np.inf
    order = np.argsort(r, kind="stable")
    chosen = []
    for i in order:
        if not np.isfinite(r[i]):
            break
        cand = chosen + [i]
        if np.linalg.matrix_rank(P[cand], tol=1e-10 * max(1.0, np.abs(P[cand]).max())) == len(cand):
            chosen = cand
            if len(chosen) == k:
                break
    if len(chosen) < k:
        return (None, None) if return_basis else None
    try:
        t = np.linalg.solve(P[chosen], y[chosen])
    except np.linalg.LinAlgError:
        t, chosen = None, None
    return (t, chosen) if return_basis else t


def _edge_descent(P, y, w, basis, alpha, scale, max_pivots=500):
    """Simplex-type descent over basic solutions of the check-loss LP.

    From the vertex interpolating rows ``basis``, every edge frees one basis
    row; the exact minimizer along the steepest descending edge is a
    weighted-median breakpoint, whose row enters the basis.  Stops when no
    edge descends.
    """
    n, k = P.shape
    h = list(basis)
    theta = np.linalg.solve(P[h], y[h])
    rtol = 1e-12 * scale
    stol = 1e-12 * float(np.sum(w * np.linalg.norm(P, axis=1)))
    for _ in range(max_pivots):
        r = y - P @ theta
        r[h] = 0.0
        G = P @ np.linalg.inv(P[h])              # column j: p_i'd for the edge freeing h_j
        best = None
        for j in range(k):
            for s in (1.0, -1.0):
                g = s * G[:, j]
                u = np.where(np.abs(r) > rtol, r, -g)
                psi = np.where(u > 0, alpha, alpha - 1.0)
                slope = -np.sum(w * g * psi * (u != 0))
                if slope < -stol and (best is None or slope < best[0]):
                    best = (slope, j, s, g)
        if best is None:
            return theta, h
        slope, j, s, g = best
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where((np.abs(r) > rtol) & (r * g > 0), r / g, np.inf)
        cand = np.flatnonzero(np.isfinite(t))
        cand = cand[np.argsort(t[cand], kind="stable")]
        jumps = np.cumsum(w[cand] * np.abs(g[cand]))
        stop = np.searchsorted(slope + jumps >= 0, True)
        if stop >= len(cand):
            return theta, h                      # unbounded edge: leave to the caller's checks
        i = int(cand[stop])
        h[j] = i
        theta = np.linalg.solve(P[h], y[h])
    return theta, h


DESCENT_MIN_N = 400


def weighted_quantile_regression(P, y, alpha, w=None, tol=1e-8, max_iter=2000) -> FitResult:
    """Minimize sum_i w_i rho_alpha(y_i - p_i't).

    Samples larger than ``DESCENT_MIN_N`` start with simplex-type pivoting
    from the vertex nearest the least-squares fit.  Otherwise, or if that
    does not certify optimality, a majorize-minimize iteration on the
    smoothed check loss (smoothing parameter driven from 1e-2 down to 1e-8,
    relative to the scale of y) gets close to the optimum; the iterate is
    then polished to the neighbouring basic solution.  A solution is
    accepted when it satisfies the subgradient optimality condition.
    """
    P, y, w = _check_inputs(P, y, w)
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")
    n, k = P.shape
    yscale = max(np.max(np.abs(y - np.median(y))), 1e-300)
    fscale = float(np.sum(w * np.linalg.norm(P, axis=1)))
    ftol = max(tol, 1e-9) * max(fscale, 1.0)

    Pw = P * w[:, None]
    theta, _ = _solve_gram(Pw.T @ P, Pw.T @ y)
    if n > DESCENT_MIN_N:
        vert, h = _vertex_from(P, y, w, theta, yscale, return_basis=True)
        if vert is not None:
            cand, _ = _edge_descent(P, y, w, h, alpha, yscale, max_pivots=20 * n)
            foc = _qr_foc_residual(P, y, w, cand, alpha, yscale)
            if foc <= ftol:
                return FitResult(np.asarray(cand, float), quantile_objective(P, y, cand, alpha, w),
                                 0, True, False, foc)
    lin = (2 * alpha - 1) * (P.T @ w)
    it = 0
    ridge = False
    for eps_rel in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8):
        eps = eps_rel * yscale
        obj_old = np.inf
        for _ in range(max_iter):
            it += 1
            r = y - P @ theta
            v = w / (eps + np.abs(r))
            Pv = P * v[:, None]
            theta_new, rd = _solve_gram(Pv.T @ P, Pv.T @ y + lin)
            ridge |= rd
            obj = np.sum(w * (check_loss(y - P @ theta_new, alpha)))
            step = np.max(np.abs(theta_new - theta))
            theta = theta_new
            if step <= 1e-12 * (1 + np.max(np.abs(theta))) or obj_old - obj <= tol * eps_rel * (1 + abs(obj)):
                break
            obj_old = obj
            if it % 20 == 0:
                # the iterate is often already next to the optimal vertex
                best, best_obj, foc = _polish(P, y, w, theta, alpha, yscale)
                if foc <= ftol:
                    return FitResult(np.asarray(best, float), best_obj, it, True, ridge, foc)
        best, best_obj, foc = _polish(P, y, w, theta, alpha, yscale)
        if foc <= ftol:
            return FitResult(np.asarray(best, float), best_obj, it, True, ridge, foc)
        if eps_rel <= 1e-4:
            # large samples: finish with exact pivoting from the nearby vertex
            vert, h = _vertex_from(P, y, w, theta, yscale, return_basis=True)
            if vert is not None:
                cand, _ = _edge_descent(P, y, w, h, alpha, yscale)
                c_obj = quantile_objective(P, y, cand, alpha, w)
                c_foc = _qr_foc_residual(P, y, w, cand, alpha, yscale)
                if c_foc <= ftol and c_obj <= best_obj + 1e-12 * (1 + abs(best_obj)):
                    return FitResult(np.asarray(cand, float), c_obj, it, True, ridge, c_foc)
    return FitResult(np.asarray(best, float), best_obj, it, False, ridge, foc)


def _polish(P, y, w, theta, alpha, yscale):
    obj_mm = quantile_objective(P, y, theta, alpha, w)
    foc_mm = _qr_foc_residual(P, y, w, theta, alpha, yscale)
    vert = _vertex_from(P, y, w, theta, yscale)
    if vert is not None:
        obj_v = quantile_objective(P, y, vert, alpha, w)
        if obj_v <= obj_mm + 1e-12 * (1 + abs(obj_mm)):
            foc_v = _qr_foc_residual(P, y, w, vert, alpha, yscale)
            if foc_v <= foc_mm or obj_v < obj_mm:
                return vert, obj_v, foc_v
    return theta, obj_mm, foc_mm


# ---------------------------------------------------- distribution regression

def _loglik_parts(eta, link):
    """Per-row log P(b=1), log P(b=0), and their first and second derivatives."""
    if link == "logit":
        l1 = -np.logaddexp(0.0, -eta)
        l0 = -np.logaddexp(0.0, eta)
        p = expit(eta)
        d1, d0 = 1.0 - p, -p
        h = -p * (1.0 - p)
        return l1, l0, d1, d0, h, h
    l1 = log_ndtr(eta)
    l0 = log_ndtr(-eta)
    logphi = -0.5 * eta * eta - 0.5 * np.log(2 * np.pi)
    lam1 = np.exp(logphi - l1)          # phi / Phi
    lam0 = np.exp(logphi - l0)          # phi / (1 - Phi)
    d1, d0 = lam1, -lam0
    h1 = -lam1 * (eta + lam1)
    h0 = -lam0 * (lam0 - eta)
    return l1, l0, d1, d0, h1, h0


def distribution_loglik(P, b, theta, link, w=None):
    P = np.asarray(P, float)
    b = np.asarray(b, float)
    w = np.ones(len(b)) if w is None else np.asarray(w, float)
    l1, l0, *_ = _loglik_parts(P @ theta, link)
    return float(np.sum(w * (b * l1 + (1 - b) * l0)))


def distribution_gradient(P, b, theta, link, w=None):
    P = np.asarray(P, float)
    b = np.asarray(b, float)
    w = np.ones(len(b)) if w is None else np.asarray(w, float)
    _, _, d1, d0, _, _ = _loglik_parts(P @ theta, link)
    return P.T @ (w * (b * d1 + (1 - b) * d0))


def link_cdf(eta, link):
    p = expit(eta) if link == "logit" else np.exp(log_ndtr(eta))
    return np.clip(p, PROB_CLIP, 1 - PROB_CLIP)


def link_inverse(p, link):
    p = np.clip(np.asarray(p, float), PROB_CLIP, 1 - PROB_CLIP)
    return np.log(p) - np.log1p(-p) if link == "logit" else ndtri(p)


def weighted_distribution_regression(P, b, link="logit", w=None, tol=1e-10,
                                     max_iter=200) -> FitResult:
    """Maximize the weighted Bernoulli log-likelihood with link ``link``.

    Newton iterations with step halving, so the log-likelihood never
    decreases.  Returns the coefficients of the linear index.
    """
    P, b, w = _check_inputs(P, b, w)
    if link not in LINKS:
        raise ParameterError(f"unknown link '{link}'")
    if not np.all(np.isin(b, (0.0, 1.0))):
        raise ParameterError("b must be binary")
    active = w > 0
    if np.all(b[active] == 0) or np.all(b[active] == 1):
        raise SeparationError("binary outcome is constant; the likelihood has no maximizer")
    n, k = P.shape
    wsum = np.sum(w)
    theta = np.zeros(k)
    pbar = np.sum(w * b) / wsum
    if np.allclose(P[:, 0], 1.0):
        theta[0] = float(link_inverse(pbar, link))
    ll = distribution_loglik(P, b, theta, link, w)
    gscale = max(1.0, float(np.sum(w * np.linalg.norm(P, axis=1))))
    converged = False
    ridge = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = P @ theta
        _, _, d1, d0, h1, h0 = _loglik_parts(eta, link)
        g = P.T @ (w * (b * d1 + (1 - b) * d0))
        if np.max(np.abs(g)) <= tol * gscale:
            converged = True
            break
        curv = -(w * (b * h1 + (1 - b) * h0))
        H = (P * curv[:, None]).T @ P
        step, rd = _solve_gram(H, g)
        ridge |= rd
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            ll_c = distribution_loglik(P, b, cand, link, w)
            if np.isfinite(ll_c) and ll_c >= ll:
                break
            t *= 0.5
        else:
            break
        theta, ll = cand, ll_c
        if np.linalg.norm(theta) > 1e6:
            raise SeparationError("coefficients diverge (|theta| > 1e6): complete separation")
    sat = 27.6 if link == "logit" else 7.0
    eta = P @ theta
    if np.any(np.abs(eta[active]) > sat) and np.linalg.norm(theta) > 10:
        raise SeparationError("fitted probabilities saturate at 0 or 1: (quasi-)complete separation")
    g = distribution_gradient(P, b, theta, link, w)
    return FitResult(theta, float(-ll), it, converged, ridge, float(np.max(np.abs(g))))
