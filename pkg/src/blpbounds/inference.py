"""Bayesian bootstrap and the inferential procedures built on it."""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import BlpError, ConvergenceError, ParameterError, ResolutionError
from .pipeline import Pipeline, prepare
from .support import SupportSurface

log = logging.getLogger(__name__)

SD_FLOOR = 1e-12
FUNCTIONALS = ("kolmogorov", "directed_kolmogorov", "cramer_von_mises")


def draw_generator(seed: int, b: int) -> np.random.Generator:
    """Counter-based stream for draw ``b``; independent of scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(b)])))


def bootstrap_weights(n: int, seed: int, b: int) -> np.ndarray:
    e = draw_generator(seed, b).exponential(1.0, n)
    return e / e.mean()


@dataclass
class BootstrapEnsemble:
    base: SupportSurface
    draws: np.ndarray            # B_ok x |Q| x |grid|
    B: int
    seed: int
    draw_index: np.ndarray       # which b survived
    failures: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def deviations(self) -> np.ndarray:
        """sqrt(n) * (bootstrap draw - estimate)."""
        return np.sqrt(self.n) * (self.draws - self.base.sigma[None])

    def sd(self) -> np.ndarray:
        return self.draws.std(axis=0, ddof=1)


def bayesian_bootstrap(ds: Dataset, pipeline: Pipeline, B: int, seed: int, threads: int = 1,
                       weight_scheme: str = "exponential", prepared=None,
                       min_draws: int = 50) -> BootstrapEnsemble:
    """Re-estimate the whole pipeline under B exponential reweightings.

    ``weight_scheme="unit"`` replaces the exponential weights by ones (every
    draw then reproduces the estimate); it exists for testing.
    """
    if B < min_draws:
        raise ParameterError(f"B must be at least {min_draws}")
    prep = prepared or prepare(ds, pipeline)
    _, base = prep.fit()

    def one(b):
        w = np.ones(ds.n) if weight_scheme == "unit" else bootstrap_weights(ds.n, seed, b)
        try:
            return prep.fit(w)[1].sigma
        except (BlpError, np.linalg.LinAlgError) as exc:
            log.debug("bootstrap draw %d failed: %s", b, exc)
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(B)))
    else:
        results = [one(b) for b in range(B)]
    ok = [b for b, r in enumerate(results) if r is not None]
    failures = B - len(ok)
    if failures > 0.05 * B:
        raise ConvergenceError(f"{failures} of {B} bootstrap draws failed")
    draws = np.stack([results[b] for b in ok])
    return BootstrapEnsemble(base, draws, B, seed, np.asarray(ok), failures,
                             {"weight_scheme": weight_scheme})


# -------------------------------------------------------------- reports

@dataclass
class ConfidenceReport:
    kind: str
    level: float
    grid: list
    directions: list
    cells: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise ParameterError("level must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "level": self.level, "grid": self.grid,
                "directions": self.directions, "cells": self.cells, "meta": self.meta}


def _meta(ens: BootstrapEnsemble) -> dict:
    return {"B": ens.B, "seed": ens.seed, "failures": ens.failures, "n": ens.n}


def _pair_indices(ens, q):
    dirs = ens.base.directions
    i, j = dirs.index(q), dirs.index(-np.asarray(q, dtype=float))
    if i is None or j is None:
        raise ParameterError("both q and -q must be in the direction set")
    return i, j


def _as_direction(ens, q):
    if isinstance(q, (int, np.integer)):
        e = np.zeros(ens.base.directions.d)
        e[q] = 1.0
        return e
    return np.asarray(q, dtype=float)


# ------------------------------------------------------ pointwise intervals

def pointwise_ci(ens: BootstrapEnsemble, q, alpha_index: int = 0, level: float = 0.95) -> dict:
    """Interval covering the bound [-sigma(-q), sigma(q)] with prob. ``level``.

    The bootstrap pair (L* - L, U* - U) with L = -sigma(-q), U = sigma(q) is
    calibrated jointly: the largest lam is found by bisection such that a
    fraction >= level of draws has first coordinate above its lam/2 quantile
    and second below its 1 - lam/2 quantile.  The interval is
    [L + c_lo, U + c_hi] with those two quantiles.
    """
    tau = 1 - level
    nd = ens.draws.shape[0]
    if nd * tau < 5 - 1e-9:          # 1 - level carries rounding error
        raise ResolutionError(f"B={nd} draws are too few for level {level}")
    q = _as_direction(ens, q)
    i, j = _pair_indices(ens, q)
    base = ens.base.sigma
    d1 = -ens.draws[:, j, alpha_index] + base[j, alpha_index]
    d2 = ens.draws[:, i, alpha_index] - base[i, alpha_index]

    def coverage(lam):
        c_lo = np.quantile(d1, lam / 2)
        c_hi = np.quantile(d2, 1 - lam / 2)
        return np.mean((d1 >= c_lo) & (d2 <= c_hi)), c_lo, c_hi

    lo_lam, hi_lam = 0.0, 2.0
    if coverage(hi_lam)[0] >= level:
        lo_lam = hi_lam
    else:
        for _ in range(60):
            mid = 0.5 * (lo_lam + hi_lam)
            if coverage(mid)[0] >= level:
                lo_lam = mid
            else:
                hi_lam = mid
    cov, c_lo, c_hi = coverage(lo_lam)
    L, U = -base[j, alpha_index], base[i, alpha_index]
    return {"lower": float(L + c_lo), "upper": float(U + c_hi), "estimate": (float(L), float(U)),
            "lam": float(lo_lam), "shift_lower": float(c_lo), "shift_upper": float(c_hi),
            "draw_coverage": float(cov)}


# -------------------------------------------------------------- functionals

def _weights_for(ens, weight, cells_mask):
    if weight == "one":
        return np.ones_like(ens.base.sigma)
    if weight != "inv_sd":
        raise ParameterError(f"unknown weighting '{weight}'")
    sd = ens.sd()
    if np.any(sd[cells_mask] < SD_FLOOR):
        warnings.warn("bootstrap sd below floor on the subset; using unit weights",
                      RuntimeWarning, stacklevel=3)
        return np.ones_like(ens.base.sigma)
    return sd


def functional_statistic(s, kind: str, weight=None, subset=None) -> float:
    """Kolmogorov, directed Kolmogorov, or Cramer-von Mises functional of the
    cell values ``s`` with weights ``weight`` (the uniform discrete measure
    on the grid is used for the integral)."""
    s = np.asarray(s, dtype=float)
    wt = np.ones_like(s) if weight is None else np.asarray(weight, dtype=float)
    if subset is not None:
        s, wt = s[subset], wt[subset]
    if s.size == 0:
        raise ParameterError("empty subset")
    if kind == "kolmogorov":
        return float(np.max(np.abs(s) / wt))
    if kind == "directed_kolmogorov":
        return float(np.max(np.maximum(-s, 0.0) / wt))
    if kind == "cramer_von_mises":
        return float(np.mean(s * s / wt))
    raise ParameterError(f"unknown functional '{kind}'")


def _subset_mask(ens, directions=None, alphas=None):
    nq, ng = ens.base.sigma.shape
    mask = np.zeros((nq, ng), dtype=bool)
    qi = range(nq) if directions is None else directions
    ai = range(ng) if alphas is None else alphas
    for i in qi:
        for a in ai:
            mask[i, a] = True
    if not mask.any():
        raise ParameterError("empty subset")
    return mask


def bootstrap_critical_value(ens: BootstrapEnsemble, kind: str, level: float,
                             weight=None, subset=None) -> float:
    """(level)-quantile of f(sqrt(n) (draw - estimate)) over surviving draws."""
    dev = ens.deviations
    stats = np.array([functional_statistic(dev[b], kind, weight, subset)
                      for b in range(dev.shape[0])])
    return float(np.quantile(stats, level))


def uniform_band(ens: BootstrapEnsemble, directions=None, alphas=None, level: float = 0.95,
                 weight: str = "inv_sd") -> ConfidenceReport:
    """sigma_hat +- c * w with c the bootstrap quantile of the sup statistic."""
    mask = _subset_mask(ens, directions, alphas)
    wt = _weights_for(ens, weight, mask)
    dev = ens.draws - ens.base.sigma[None]
    sup = np.max(np.abs(dev[:, mask]) / wt[mask][None], axis=1)
    c = float(np.quantile(sup, level))
    sig = ens.base.sigma
    cells = []
    for i, a in np.argwhere(mask):
        cells.append({"q": ens.base.directions.Q[i].tolist(),
                      "alpha": float(ens.base.grid.values[a]),
                      "estimate": float(sig[i, a]),
                      "lo": float(sig[i, a] - c * wt[i, a]),
                      "hi": float(sig[i, a] + c * wt[i, a])})
    return ConfidenceReport("uniform", level, ens.base.grid.values.tolist(),
                            ens.base.directions.Q.tolist(), cells,
                            {**_meta(ens), "critical_value": c, "weight": weight})


# ---------------------------------------------------------------- tests

def _sign_functional(s_plus, s_minus, rho_plus, rho_minus):
    """sup over alpha of the evidence that the coefficient is nonzero:
    lower bound -s(-q) above 0, or upper bound s(q) below 0."""
    a = np.where(-s_minus > 0, np.abs(s_minus) * rho_minus, 0.0)
    b = np.where(s_plus < 0, np.abs(s_plus) * rho_plus, 0.0)
    return float(np.max(np.maximum(a, b)))


def sign_positivity_test(ens: BootstrapEnsemble, j: int, level: float = 0.95,
                         weight: str = "inv_sd") -> dict:
    """Test H0: 0 lies in the bound for coefficient j at every grid level.

    Critical values come from the least-favourable null (both bounds zero),
    under which the bootstrap deviations stand in for the estimator.
    """
    q = _as_direction(ens, j)
    i, k = _pair_indices(ens, q)
    mask = np.zeros_like(ens.base.sigma, dtype=bool)
    mask[[i, k], :] = True
    if weight == "inv_sd":
        sd = ens.sd()
        if np.any(sd[mask] < SD_FLOOR):
            warnings.warn("degenerate bootstrap sd; using unit weights", RuntimeWarning,
                          stacklevel=2)
            rho = np.ones_like(sd)
        else:
            rho = 1.0 / sd
    else:
        rho = np.ones_like(ens.base.sigma)
    rn = np.sqrt(ens.n)
    sig = ens.base.sigma
    T = rn * _sign_functional(sig[i], sig[k], rho[i], rho[k])
    dev = ens.deviations
    stats = np.array([_sign_functional(dev[b, i], dev[b, k], rho[i], rho[k])
                      for b in range(dev.shape[0])])
    crit = float(np.quantile(stats, level))
    per_alpha = [{"alpha": float(a), "lower": float(-sig[k, t]), "upper": float(sig[i, t])}
                 for t, a in enumerate(ens.base.grid.values)]
    return {"statistic": float(T), "critical_value": crit, "reject": bool(T > crit),
            "level": level, "coefficient": int(j), "per_alpha": per_alpha, "meta": _meta(ens)}


def pointwise_report(ens: BootstrapEnsemble, qs, level: float) -> ConfidenceReport:
    cells = []
    for q in qs:
        qv = _as_direction(ens, q)
        for a, al in enumerate(ens.base.grid.values):
            ci = pointwise_ci(ens, qv, a, level)
            cells.append({"q": qv.tolist(), "alpha": float(al), "lo": ci["lower"],
                          "hi": ci["upper"], "bound_lo": ci["estimate"][0],
                          "bound_hi": ci["estimate"][1]})
    return ConfidenceReport("pointwise", level, ens.base.grid.values.tolist(),
                            ens.base.directions.Q.tolist(), cells, _meta(ens))
