"""Bounding functions theta_0(x, a) <= f(x, a) <= theta_1(x, a).

Every constructor returns a :class:`BoundingSurface` holding fitted values at
the rows of the dataset for each index level on the grid.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import BasisMatrix, BasisSpec, build_basis, evaluate_basis
from .dataset import Dataset, build_restricted_tilde_y1, build_tilde_y
from .errors import (ConvergenceError, InformativenessError, ParameterError,
                     SeparationError)
from .solvers import (weighted_distribution_regression, weighted_least_squares,
                      weighted_quantile_regression)

METHODS = ("mean_interval", "quantile_interval", "distribution_interval",
           "selection_quantile", "interval_regressor")


@dataclass(frozen=True)
class IndexGrid:
    values: np.ndarray
    kind: str = "quantile"

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", v)
        if self.kind not in ("quantile", "threshold", "mean"):
            raise ParameterError(f"unknown grid kind '{self.kind}'")
        if len(v) == 0 or np.any(np.diff(v) <= 0) or not np.all(np.isfinite(v)):
            raise ParameterError("index grid must be finite and strictly increasing")
        if self.kind == "quantile" and (v[0] <= 0 or v[-1] >= 1):
            raise ParameterError("quantile levels must lie in (0, 1)")
        if self.kind == "mean" and len(v) != 1:
            raise ParameterError("a mean-regression grid is a singleton")

    @classmethod
    def mean(cls) -> "IndexGrid":
        return cls(np.array([0.0]), "mean")

    def __len__(self):
        return len(self.values)

    def same_as(self, other: "IndexGrid") -> bool:
        return self.kind == other.kind and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class BoundMethod:
    """Which bound construction to use, with its parameters."""

    name: str
    link: str = "logit"
    y_lo: float = -np.inf
    y_hi: float = np.inf
    direction: str = "nondecreasing"

    def __post_init__(self):
        if self.name not in METHODS:
            raise ParameterError(f"unknown bound method '{self.name}'")
        if self.direction not in ("nondecreasing", "nonincreasing"):
            raise ParameterError("direction must be nondecreasing or nonincreasing")

    def to_dict(self):
        return {"name": self.name, "link": self.link, "y_lo": _fmt_inf(self.y_lo),
                "y_hi": _fmt_inf(self.y_hi), "direction": self.direction}


def _fmt_inf(v):
    return str(v) if not np.isfinite(v) else float(v)


@dataclass(frozen=True)
class BoundingSurface:
    theta0: np.ndarray
    theta1: np.ndarray
    grid: IndexGrid
    method: str
    coef0: np.ndarray | None = None     # |grid| x k
    coef1: np.ndarray | None = None
    basis: BasisMatrix | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t0 = np.asarray(self.theta0, dtype=float)
        t1 = np.asarray(self.theta1, dtype=float)
        if t0.ndim == 1:
            t0, t1 = t0[:, None], t1[:, None]
        if t0.shape != t1.shape or t0.shape[1] != len(self.grid):
            raise ParameterError("bound matrices must be n x |grid| and of equal shape")
        if not (np.all(np.isfinite(t0)) and np.all(np.isfinite(t1))):
            raise InformativenessError("bounding surface has non-finite entries")
        object.__setattr__(self, "theta0", t0)
        object.__setattr__(self, "theta1", t1)

    @property
    def n(self) -> int:
        return self.theta0.shape[0]

    @property
    def crossing_count(self) -> int:
        return int(np.sum(self.theta0 > self.theta1))

    def to_long_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "alpha", "theta0", "theta1"])
            for i in range(self.n):
                for a, al in enumerate(self.grid.values):
                    w.writerow([i, repr(float(al)), repr(float(self.theta0[i, a])),
                                repr(float(self.theta1[i, a]))])


# ------------------------------------------------------------------ helpers

def _fit_side(P, target, alpha, solver, w, link="logit"):
    if solver == "ls":
        res = weighted_least_squares(P, target, w)
    elif solver == "qr":
        res = weighted_quantile_regression(P, target, alpha, w)
    else:
        res = weighted_distribution_regression(P, target, link, w)
    return res


def _require(ds, *roles):
    for r in roles:
        if not ds.has(r):
            raise ParameterError(f"method requires role '{r}'")


def _informative_region_check(ds, grid, y_lo, y_hi, w):
    u = ds.column("selection_u")
    p1 = float(np.sum(w * u) / np.sum(w))
    for a in grid.values:
        if not np.isfinite(y_lo) and not a > 1 - p1:
            raise InformativenessError(
                f"lower bound at alpha={a:g} equals the infinite logical bound; restrict "
                f"the grid to the informative region {1 - p1:.4f} < alpha < {p1:.4f}")
        if not np.isfinite(y_hi) and not a < p1:
            raise InformativenessError(
                f"upper bound at alpha={a:g} equals the infinite logical bound; restrict "
                f"the grid to the informative region {1 - p1:.4f} < alpha < {p1:.4f}")


def _surrogates(y_obs, y_lo, y_hi):
    span = float(np.ptp(y_obs)) + 1.0
    lo = y_lo if np.isfinite(y_lo) else float(np.min(y_obs)) - 1e3 * span
    hi = y_hi if np.isfinite(y_hi) else float(np.max(y_obs)) + 1e3 * span
    return lo, hi, span


def _selection_targets(ds, method, grid, w):
    _require(ds, "y", "selection_u")
    sel = ds.column("selection_u") == 1
    y_obs = ds.column("y")[sel]
    _informative_region_check(ds, grid, method.y_lo, method.y_hi, w)
    lo, hi, span = _surrogates(y_obs, method.y_lo, method.y_hi)
    t0, t1 = build_tilde_y(ds, lo, hi)
    guard = None
    if not (np.isfinite(method.y_lo) and np.isfinite(method.y_hi)):
        guard = (float(np.min(y_obs)) - 10 * span, float(np.max(y_obs)) + 10 * span)
    return t0, t1, guard


def _guard(fitted, guard, side, alpha):
    if guard is None:
        return
    if side == 0 and np.any(fitted < guard[0]):
        raise InformativenessError(
            f"lower bound at alpha={alpha:g} is driven by the infinite logical bound "
            "at some x; restrict the grid to the informative region")
    if side == 1 and np.any(fitted > guard[1]):
        raise InformativenessError(
            f"upper bound at alpha={alpha:g} is driven by the infinite logical bound "
            "at some x; restrict the grid to the informative region")


def _fit_grid(P, targets, grid, solver, w, link="logit", guard=None, P_eval=None,
              threshold_targets=None):
    """Fit both sides at each grid level; returns coef arrays |grid| x k."""
    k = P.shape[1]
    coefs = [np.empty((len(grid), k)), np.empty((len(grid), k))]
    for a, alpha in enumerate(grid.values):
        for side in (0, 1):
            tgt = targets[side] if threshold_targets is None else threshold_targets(side, alpha)
            try:
                res = _fit_side(P, tgt, alpha, solver, w, link)
            except SeparationError as exc:
                raise SeparationError(f"side {side}, alpha={alpha:g}: {exc}") from None
            if not res.converged:
                raise ConvergenceError(f"solver failed at side {side}, alpha={alpha:g}")
            coefs[side][a] = res.theta
            if guard is not None:
                _guard((P if P_eval is None else P_eval) @ res.theta, guard, side, alpha)
    return coefs


# ------------------------------------------------------------ constructors

def fit_bounding_surface(ds: Dataset, basis: BasisMatrix, grid: IndexGrid,
                         method: BoundMethod | str, weights=None) -> BoundingSurface:
    """Series estimates of both bounding functions on the grid."""
    if isinstance(method, str):
        method = BoundMethod(method)
    n = ds.n
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    P = basis.P
    if P.shape[0] != n:
        raise ParameterError("basis rows do not match the dataset")
    guard = None
    threshold_targets = None
    if method.name == "mean_interval":
        _require(ds, "y_lower", "y_upper")
        if grid.kind != "mean":
            raise ParameterError("mean_interval needs the mean grid")
        targets, solver = (ds.column("y_lower"), ds.column("y_upper")), "ls"
    elif method.name == "quantile_interval":
        _require(ds, "y_lower", "y_upper")
        targets, solver = (ds.column("y_lower"), ds.column("y_upper")), "qr"
    elif method.name == "distribution_interval":
        _require(ds, "y_lower", "y_upper")
        if grid.kind != "threshold":
            raise ParameterError("distribution_interval needs a threshold grid")
        ylo, yhi = ds.column("y_lower"), ds.column("y_upper")
        # theta_l is the link-inverse of the distribution of y_{1-l}
        src = (yhi, ylo)

        def threshold_targets(side, alpha):
            return (src[side] <= alpha).astype(float)
        targets, solver = None, "dr"
    elif method.name == "selection_quantile":
        t0, t1, guard = _selection_targets(ds, method, grid, w)
        targets, solver = (t0, t1), "qr"
    else:
        raise ParameterError("interval_regressor bounds use fit_interval_regressor_bounds")

    coef0, coef1 = _fit_grid(P, targets, grid, solver, w, method.link, guard,
                             threshold_targets=threshold_targets)
    return BoundingSurface(P @ coef0.T, P @ coef1.T, grid, method.name, coef0, coef1,
                           basis, {"method": method.to_dict()})


def evaluate_surface(bs: BoundingSurface, x_new) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate a series-fitted surface at new regressor rows."""
    if bs.coef0 is None or bs.basis is None:
        raise ParameterError("this surface has no coefficients (envelope-type bounds)")
    Pn = np.atleast_2d(evaluate_basis(bs.basis, x_new))
    return Pn @ bs.coef0.T, Pn @ bs.coef1.T


def _with_v(X: np.ndarray, v_cols, value) -> np.ndarray:
    Xv = X.copy()
    Xv[:, v_cols] = value
    return Xv


def xv_block(ds: Dataset) -> tuple[np.ndarray, list[int]]:
    """Regressor block (x, v) and the positions of the v columns in it."""
    X = ds.x
    V = ds.block("v")
    return np.column_stack([X, V]), list(range(X.shape[1], X.shape[1] + V.shape[1]))


def intersect_over_instrument(ds: Dataset, basis: BasisMatrix, grid: IndexGrid,
                              v_support=None, method: BoundMethod | None = None,
                              weights=None) -> BoundingSurface:
    """Tighten selection bounds with an excluded instrument ``v``.

    ``basis`` must be built on :func:`xv_block`.  Conditional support of v
    given x is taken to be the global sample support (rectangular support).
    """
    if method is None:
        method = BoundMethod("selection_quantile")
    if method.name != "selection_quantile":
        raise ParameterError("intersection bounds are defined for selection_quantile")
    Xv, v_cols = xv_block(ds)
    if v_support is None:
        v_support = np.unique(ds.block("v"), axis=0)
    v_support = [np.atleast_1d(np.asarray(v, dtype=float)) for v in v_support]
    if not v_support:
        raise ParameterError("v_support is empty")
    w = np.ones(ds.n) if weights is None else np.asarray(weights, dtype=float)
    P = basis.P
    t0, t1, guard = _selection_targets(ds, method, grid, w)
    P_eval = [evaluate_basis(basis, _with_v(Xv, v_cols, v)) for v in v_support]
    coef0, coef1 = _fit_grid(P, (t0, t1), grid, "qr", w, guard=None)
    per_v0 = np.stack([Pe @ coef0.T for Pe in P_eval])   # |V| x n x |grid|
    per_v1 = np.stack([Pe @ coef1.T for Pe in P_eval])
    arg0 = np.argmax(per_v0, axis=0)
    arg1 = np.argmin(per_v1, axis=0)
    theta0 = np.take_along_axis(per_v0, arg0[None], 0)[0]
    theta1 = np.take_along_axis(per_v1, arg1[None], 0)[0]
    if guard is not None:
        for a, alpha in enumerate(grid.values):
            _guard(theta0[:, a], guard, 0, alpha)
            _guard(theta1[:, a], guard, 1, alpha)
    meta = {"method": method.to_dict(), "v_support": [v.tolist() for v in v_support],
            "argmax_v": arg0, "argmin_v": arg1, "rectangular_support": True}
    return BoundingSurface(theta0, theta1, grid, "selection_quantile_intersection",
                           coef0, coef1, basis, meta)


def apply_selection_restriction(bs: BoundingSurface, restriction: dict, ds: Dataset,
                                basis: BasisMatrix, grid: IndexGrid,
                                weights=None) -> BoundingSurface:
    """Tighten the upper selection bound.

    ``restriction`` is ``{"kind": "stochastic_dominance"}`` or
    ``{"kind": "quantile_restriction", "alpha0": a0, "alpha1": a1}``.
    The lower surface is returned unchanged.  A restriction only adds
    information, so the new upper surface is intersected with the old one;
    the number of cells where the old surface was already tighter is kept
    in ``meta["restriction_slack_cells"]``.
    """
    if not bs.method.startswith("selection_quantile"):
        raise ParameterError("restrictions apply to selection bounds only")
    if not grid.same_as(bs.grid):
        raise ParameterError("grid does not match the bounding surface")
    kind = restriction.get("kind")
    w = np.ones(ds.n) if weights is None else np.asarray(weights, dtype=float)
    sel = ds.column("selection_u") == 1
    y = ds.column("y")
    P = basis.P
    Psel, ysel, wsel = P[sel], y[sel], w[sel]
    if "v_support" in bs.meta:
        Xv, v_cols = xv_block(ds)
        P_eval = [evaluate_basis(basis, _with_v(Xv, v_cols, np.asarray(v)))
                  for v in bs.meta["v_support"]]
    else:
        P_eval = [P]

    def envelope_min(coef):
        return np.min(np.stack([Pe @ coef.T for Pe in P_eval]), axis=0)

    if kind == "stochastic_dominance":
        coef = np.empty((len(grid), P.shape[1]))
        for a, alpha in enumerate(grid.values):
            res = weighted_quantile_regression(Psel, ysel, alpha, wsel)
            if not res.converged:
                raise ConvergenceError(f"observed-sample quantile fit failed at alpha={alpha:g}")
            coef[a] = res.theta
        theta1 = envelope_min(coef)
    elif kind == "quantile_restriction":
        a0, a1 = float(restriction["alpha0"]), float(restriction["alpha1"])
        if not (0 < a0 < 1 and 0 < a1 < 1):
            raise ParameterError("restriction levels must lie in (0, 1)")
        mdict = bs.meta.get("method", {})
        y_hi = float(mdict.get("y_hi", np.inf))
        if not np.isfinite(y_hi):
            raise InformativenessError("quantile restriction needs a finite upper logical bound")
        res = weighted_quantile_regression(Psel, ysel, a1, wsel)
        if not res.converged:
            raise ConvergenceError(f"observed-sample quantile fit failed at alpha1={a1:g}")
        qvals = P @ res.theta
        pseudo = build_restricted_tilde_y1(ds, a0, a1, qvals, y_hi, weights=w)
        Pp = P[pseudo.source_row]
        coef = np.empty((len(grid), P.shape[1]))
        for a, alpha in enumerate(grid.values):
            r = weighted_quantile_regression(Pp, pseudo.values, alpha, pseudo.weights)
            if not r.converged:
                raise ConvergenceError(f"restricted upper fit failed at alpha={alpha:g}")
            coef[a] = r.theta
        theta1 = envelope_min(coef)
    else:
        raise ParameterError(f"unknown restriction '{kind}'")
    meta = dict(bs.meta)
    meta["restriction"] = {k: v for k, v in restriction.items()}
    looser = theta1 > bs.theta1
    meta["restriction_slack_cells"] = int(np.count_nonzero(looser))
    theta1 = np.minimum(theta1, bs.theta1)
    coef1 = coef if len(P_eval) == 1 and not looser.any() else None
    return replace(bs, theta1=theta1, coef1=coef1, meta=meta)


# ------------------------------------------------------- interval regressor

def interval_regressor_envelopes(x0, x1, m_hat, eval_points, direction="nondecreasing",
                                 logical_bounds=None):
    """Monotone envelopes of a fitted conditional mean over sample rows.

    Nondecreasing: lower(x) = max{m_i : x1_i <= x}, upper(x) = min{m_i : x0_i >= x}.
    The nonincreasing case swaps which interval end enters each side.
    """
    x0, x1, m_hat = (np.asarray(a, dtype=float) for a in (x0, x1, m_hat))
    ev = np.atleast_1d(np.asarray(eval_points, dtype=float))
    lo = np.empty(len(ev))
    hi = np.empty(len(ev))
    for j, x in enumerate(ev):
        if direction == "nondecreasing":
            in_lo, in_hi = x1 <= x, x0 >= x
        else:
            in_lo, in_hi = x0 >= x, x1 <= x
        if np.any(in_lo):
            lo[j] = np.max(m_hat[in_lo])
        elif logical_bounds is not None:
            lo[j] = logical_bounds[0]
        else:
            raise InformativenessError(f"no row bounds the function from below at x={x:g}")
        if np.any(in_hi):
            hi[j] = np.min(m_hat[in_hi])
        elif logical_bounds is not None:
            hi[j] = logical_bounds[1]
        else:
            raise InformativenessError(f"no row bounds the function from above at x={x:g}")
    return lo, hi


def fit_interval_regressor_bounds(ds: Dataset, conditioning_spec: BasisSpec, eval_points,
                                  direction="nondecreasing", logical_bounds=None,
                                  weights=None) -> BoundingSurface:
    """Bounds on E(y|x) when only an interval [x_lower, x_upper] of the scalar
    regressor is observed and E(y|x) is monotone in x."""
    _require(ds, "y", "x_lower", "x_upper")
    x0, x1 = ds.column("x_lower"), ds.column("x_upper")
    W = np.column_stack([np.ones(ds.n), x0, x1])
    basis = build_basis(W, conditioning_spec)
    res = weighted_least_squares(basis.P, ds.column("y"), weights)
    m_hat = basis.P @ res.theta
    lo, hi = interval_regressor_envelopes(x0, x1, m_hat, eval_points, direction, logical_bounds)
    return BoundingSurface(lo[:, None], hi[:, None], IndexGrid.mean(), "interval_regressor",
                           meta={"direction": direction, "m_hat": m_hat})


# ---------------------------------------------------------- combinations

def combine_treatment_effect(bs_T: BoundingSurface, bs_C: BoundingSurface) -> BoundingSurface:
    """Bounds on the treated-minus-control difference of the bounded functions."""
    if not bs_T.grid.same_as(bs_C.grid):
        raise ParameterError("treatment and control grids differ")
    if bs_T.theta0.shape != bs_C.theta0.shape:
        raise ParameterError("treatment and control surfaces are evaluated at different rows")
    return BoundingSurface(bs_T.theta0 - bs_C.theta1, bs_T.theta1 - bs_C.theta0, bs_T.grid,
                           "treatment_effect", meta={"arms": [bs_T.method, bs_C.method]})


def crossing_diagnostic(bs: BoundingSurface) -> dict:
    gap = bs.theta0 - bs.theta1
    cells = np.argwhere(gap > 0)
    return {
        "cells": [{"row": int(i), "alpha": float(bs.grid.values[a])} for i, a in cells],
        "count": int(len(cells)),
        "max_violation": float(gap.max()) if len(cells) else 0.0,
        "fraction": float(len(cells) / gap.size),
    }


def sort_crossings(bs: BoundingSurface) -> BoundingSurface:
    """Opt-in repair: order each (theta0, theta1) pair."""
    lo = np.minimum(bs.theta0, bs.theta1)
    hi = np.maximum(bs.theta0, bs.theta1)
    return replace(bs, theta0=lo, theta1=hi, meta={**bs.meta, "sorted": True})
