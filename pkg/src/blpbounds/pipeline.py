"""End-to-end estimation: data -> bounding surface -> support surface.

A :class:`Pipeline` is the full recipe.  :func:`prepare` does the
weight-independent work once (basis construction, instrument block);
:meth:`Prepared.fit` then re-estimates everything under observation weights,
which is exactly what a Bayesian-bootstrap draw needs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisMatrix, BasisSpec, build_basis, evaluate_basis
from .bounds import (BoundingSurface, BoundMethod, IndexGrid,
                     apply_selection_restriction, combine_treatment_effect,
                     fit_bounding_surface, fit_interval_regressor_bounds,
                     intersect_over_instrument, sort_crossings, xv_block)
from .dataset import Dataset
from .errors import ParameterError
from .support import (DirectionSet, SupportSurface, compute_support_surface,
                      effective_instrument)


@dataclass(frozen=True)
class Pipeline:
    method: BoundMethod
    grid: IndexGrid
    basis: BasisSpec = field(default_factory=BasisSpec)
    directions: DirectionSet | None = None
    restriction: dict | None = None
    intersect_v: bool = False
    v_support: tuple | None = None
    W: np.ndarray | None = None
    treatment_effect: bool = False
    sort_crossings: bool = False
    logical_bounds: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        return {
            "method": self.method.to_dict(),
            "grid": {"kind": self.grid.kind, "values": self.grid.values.tolist()},
            "basis": self.basis.to_dict(),
            "directions": None if self.directions is None else self.directions.descriptor,
            "restriction": self.restriction,
            "intersect_v": self.intersect_v,
            "treatment_effect": self.treatment_effect,
            "sort_crossings": self.sort_crossings,
        }


@dataclass
class _Arm:
    ds: Dataset
    rows: np.ndarray
    basis: BasisMatrix
    eval_P: list          # basis evaluated at every full-data row (one per v value)


@dataclass
class Prepared:
    ds: Dataset
    pipeline: Pipeline
    z: np.ndarray
    directions: DirectionSet
    arms: list = field(default_factory=list)

    def bounds(self, weights=None) -> BoundingSurface:
        p = self.pipeline
        if p.method.name == "interval_regressor":
            bs = fit_interval_regressor_bounds(self.ds, p.basis, self.ds.x[:, 1],
                                               p.method.direction, p.logical_bounds, weights)
        elif p.treatment_effect:
            t, c = (self._arm_surface(arm, weights) for arm in self.arms)
            bs = combine_treatment_effect(t, c)
        else:
            bs = self._arm_surface(self.arms[0], weights)
        if p.sort_crossings:
            bs = sort_crossings(bs)
        return bs

    def _arm_surface(self, arm: _Arm, weights) -> BoundingSurface:
        p = self.pipeline
        w = None if weights is None else np.asarray(weights)[arm.rows]
        if p.intersect_v:
            bs = intersect_over_instrument(arm.ds, arm.basis, p.grid, p.v_support, p.method, w)
        else:
            bs = fit_bounding_surface(arm.ds, arm.basis, p.grid, p.method, w)
        if p.restriction:
            bs = apply_selection_restriction(bs, p.restriction, arm.ds, arm.basis, p.grid, w)
        if len(arm.rows) == self.ds.n and arm.eval_P is None:
            return bs
        # re-evaluate at every row of the full sample
        t0 = np.max(np.stack([P @ bs.coef0.T for P in arm.eval_P]), axis=0)
        t1 = np.min(np.stack([P @ bs.coef1.T for P in arm.eval_P]), axis=0)
        return BoundingSurface(t0, t1, bs.grid, bs.method, bs.coef0, bs.coef1, bs.basis, bs.meta)

    def fit(self, weights=None) -> tuple[BoundingSurface, SupportSurface]:
        bs = self.bounds(weights)
        ss = compute_support_surface(self.ds, self.z, bs, self.directions, obs_weights=weights,
                                     instrument=self._instrument_tag())
        return bs, ss

    def _instrument_tag(self) -> str:
        if self.ds.has("z_tilde"):
            return "x*(zt'W zt)"
        return "x_jitter" if self.ds.has("x_jitter") else "x"


def prepare(ds: Dataset, pipeline: Pipeline) -> Prepared:
    z = effective_instrument(ds, pipeline.W)
    directions = pipeline.directions or DirectionSet.default(ds.d)
    prep = Prepared(ds, pipeline, z, directions)
    if pipeline.method.name == "interval_regressor":
        if ds.d != 2:
            raise ParameterError("interval regressor bounds need x = (1, x1)")
        return prep
    if pipeline.treatment_effect:
        if pipeline.restriction:
            raise ParameterError("restrictions are not combined with treatment effects")
        tr = ds.column("treatment")
        groups = [np.flatnonzero(tr == 1), np.flatnonzero(tr == 0)]
    else:
        groups = [np.arange(ds.n)]
    for rows in groups:
        sub = ds if len(rows) == ds.n else ds.subset(rows)
        if pipeline.intersect_v:
            Xv, v_cols = xv_block(sub)
            basis = build_basis(Xv, pipeline.basis)
        else:
            basis = build_basis(sub.x, pipeline.basis)
        eval_P = None
        if len(rows) != ds.n:
            eval_P = _full_eval(ds, basis, pipeline)
        prep.arms.append(_Arm(sub, rows, basis, eval_P))
    return prep


def _full_eval(ds, basis, pipeline):
    if not pipeline.intersect_v:
        return [evaluate_basis(basis, ds.x)]
    Xv, v_cols = xv_block(ds)
    support = pipeline.v_support
    if support is None:
        support = np.unique(ds.block("v"), axis=0)
    out = []
    for v in support:
        X = Xv.copy()
        X[:, v_cols] = np.atleast_1d(np.asarray(v, dtype=float))
        out.append(evaluate_basis(basis, X))
    return out


def run_pipeline(ds: Dataset, pipeline: Pipeline, weights=None):
    """Unweighted (or weighted) estimate: returns (BoundingSurface, SupportSurface)."""
    return prepare(ds, pipeline).fit(weights)
