import warnings

import numpy as np
import pytest

from blpbounds.errors import ParameterError
from blpbounds.inference import bayesian_bootstrap
from blpbounds.mc import (DGPSpec, coverage_experiment, default_pipeline,
                          population_support_oracle, replication_seeds, simulate_dgp)
from blpbounds.pipeline import run_pipeline


def test_zero_width_is_point_identified():
    for kind in ("interval_mean", "interval_quantile"):
        ds = simulate_dgp(DGPSpec(kind=kind, half_width=0.0), 50, 1)
        np.testing.assert_array_equal(ds.column("y_lower"), ds.column("y_upper"))


def test_brackets_contain_latent_outcome():
    ds = simulate_dgp(DGPSpec(kind="interval_mean", half_width=0.7), 500, 2)
    assert np.all(ds.column("y_lower") <= ds.column("y_upper"))
    width = ds.column("y_upper") - ds.column("y_lower")
    assert width.max() <= 4 * 0.7 + 1e-12


def test_same_seed_same_data():
    spec = DGPSpec(kind="selection", noise="uniform", v_levels=(0.0, 1.0), v_probs=(0.6, 0.9))
    a, b = simulate_dgp(spec, 80, 3), simulate_dgp(spec, 80, 3)
    for name in a.columns:
        np.testing.assert_array_equal(a.columns[name], b.columns[name])
    c = simulate_dgp(spec, 80, 4)
    assert not np.array_equal(a.column("selection_u"), c.column("selection_u"))


def test_full_selection_all_ones():
    ds = simulate_dgp(DGPSpec(kind="selection", p_select=1.0), 100, 5)
    np.testing.assert_array_equal(ds.column("selection_u"), 1.0)
    assert np.all(np.isfinite(ds.column("y")))


def test_spec_validation():
    with pytest.raises(ParameterError):
        DGPSpec(kind="tobit")
    with pytest.raises(ParameterError):
        DGPSpec(half_width=-1)
    with pytest.raises(ParameterError):
        DGPSpec(x_law="none", beta=(1.0, 2.0))
    with pytest.raises(ParameterError):
        simulate_dgp(DGPSpec(), 0, 1)


# ---------------------------------------------------------------- oracle

def test_oracle_point_identified_is_linear():
    spec = DGPSpec(kind="interval_mean", beta=(1.0, -2.0), half_width=0.0)
    for q in ([1.0, 0.0], [0.0, -1.0], [0.6, 0.8]):
        assert population_support_oracle(spec, q) == float(np.dot(q, spec.beta))


def test_oracle_intercept_only_constant_band():
    spec = DGPSpec(kind="interval_mean", beta=(1.5,), x_law="none", half_width=0.4)
    assert population_support_oracle(spec, [1.0]) == pytest.approx(1.5 + 0.4, abs=1e-14)
    assert population_support_oracle(spec, [-1.0]) == pytest.approx(-1.5 + 0.4, abs=1e-14)


def test_oracle_slope_closed_form_uniform_x():
    # constant band c and x1 ~ U(0,1): slope bound beta1 + c E|x1 - 1/2| / Var(x1) = beta1 + 3c
    spec = DGPSpec(kind="interval_mean", beta=(1.0, 0.5), half_width=0.2)
    assert population_support_oracle(spec, [0.0, 1.0]) == pytest.approx(0.5 + 0.6, abs=1e-6)
    assert population_support_oracle(spec, [0.0, -1.0]) == pytest.approx(-0.5 + 0.6, abs=1e-6)


def test_oracle_quadrature_stable_when_doubled():
    spec = DGPSpec(kind="interval_quantile", half_width=0.3)
    for q in ([0.0, 1.0], [0.6, -0.8]):
        a = population_support_oracle(spec, q, 0.25, n_oracle=10 ** 6)
        b = population_support_oracle(spec, q, 0.25, n_oracle=2 * 10 ** 6)
        assert abs(a - b) <= 5e-5 * abs(b)


def test_oracle_rejects_infinite_bounds():
    spec = DGPSpec(kind="selection", p_select=0.6)
    with pytest.raises(ParameterError):
        population_support_oracle(spec, [0.0, 1.0], 0.1)


def test_selection_bounds_shrink_with_more_instrument_values():
    one = DGPSpec(kind="selection", noise="uniform", p_select=0.8)
    many = DGPSpec(kind="selection", noise="uniform", v_levels=(0.0, 1.0), v_probs=(0.8, 0.9))
    lo1, hi1 = one.bounds_at(np.array([0.5]), 0.5)
    lo2, hi2 = many.bounds_at(np.array([0.5]), 0.5)
    assert lo2[0] >= lo1[0] and hi2[0] <= hi1[0]


@pytest.mark.slow
@pytest.mark.parametrize("spec", [DGPSpec(kind="interval_mean"),
                                  DGPSpec(kind="interval_quantile", half_width=0.3)],
                         ids=["mean", "quantile"])
def test_estimate_matches_oracle_in_large_sample(spec):
    """sigma_hat at n = 200,000 is within 3 standard errors of the oracle in
    every cell; the standard error is the bootstrap sd at n = 2,000 rescaled
    by sqrt(2,000 / 200,000)."""
    p = default_pipeline(spec)
    _, ss = run_pipeline(simulate_dgp(spec, 200_000, 1), p)
    ens = bayesian_bootstrap(simulate_dgp(spec, 2000, 2), p, 100, seed=3)
    se = ens.sd() * np.sqrt(2000 / 200_000)
    alphas = [None] if p.grid.kind == "mean" else list(p.grid.values)
    oracle = np.array([[population_support_oracle(spec, q, a) for a in alphas]
                       for q in p.directions.Q])
    assert np.all(np.abs(ss.sigma - oracle) <= 3 * se)


# ----------------------------------------------------------- experiments

def test_replication_seeds_distinct():
    seeds = {replication_seeds(7, r) for r in range(50)}
    assert len(seeds) == 50
    assert replication_seeds(7, 3) == replication_seeds(7, 3)


def test_single_replication_report():
    with pytest.warns(UserWarning, match="too small"):
        rep = coverage_experiment(DGPSpec(), R=1, n=100, B=50, level=0.9, seed=1)
    assert rep["completed"] == 1 and rep["failures"] == 0
    assert set(rep["pointwise"]) == {"hits"} and len(rep["pointwise"]["hits"]) == 1
    with pytest.raises(ParameterError):
        coverage_experiment(DGPSpec(), R=0, n=100, B=50, level=0.9, seed=1)


def test_report_reproducible():
    kw = dict(R=4, n=100, B=50, level=0.9, seed=9)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = coverage_experiment(DGPSpec(), **kw)
        b = coverage_experiment(DGPSpec(), **kw)
        c = coverage_experiment(DGPSpec(), **{**kw, "seed": 10})
    assert a == b and a != c
    assert a["oracle_bound"][0] <= a["oracle_bound"][1]


def test_width_increases_with_band():
    kw = dict(R=5, n=200, B=60, level=0.9, seed=2, uniform=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        narrow = coverage_experiment(DGPSpec(half_width=0.2), **kw)
        wide = coverage_experiment(DGPSpec(half_width=0.6), **kw)
    assert wide["mean_width"] > narrow["mean_width"]
    assert wide["oracle_bound"][1] - wide["oracle_bound"][0] > \
        narrow["oracle_bound"][1] - narrow["oracle_bound"][0]


def test_default_pipelines():
    assert default_pipeline(DGPSpec()).grid.kind == "mean"
    q = default_pipeline(DGPSpec(kind="interval_quantile"))
    np.testing.assert_array_equal(q.grid.values, [0.25, 0.5, 0.75])
    s = default_pipeline(DGPSpec(kind="selection", noise="uniform"))
    assert np.isfinite(s.method.y_lo) and np.isfinite(s.method.y_hi)
