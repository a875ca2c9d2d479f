import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blpbounds.errors import ConvergenceError, ParameterError, ResolutionError, SeparationError
from blpbounds.inference import (BootstrapEnsemble, ConfidenceReport, bayesian_bootstrap,
                                 bootstrap_critical_value, bootstrap_weights,
                                 functional_statistic, pointwise_ci, pointwise_report,
                                 sign_positivity_test, uniform_band)
from blpbounds.mc import DGPSpec, default_pipeline, simulate_dgp
from blpbounds.pipeline import prepare, run_pipeline

POINT = DGPSpec(kind="interval_mean", half_width=0.0)
BAND = DGPSpec(kind="interval_mean", half_width=0.5)


@pytest.fixture(scope="module")
def point_ens():
    ds = simulate_dgp(POINT, 200, 1)
    return ds, bayesian_bootstrap(ds, default_pipeline(POINT), 200, seed=7)


@pytest.fixture(scope="module")
def band_ens():
    spec = DGPSpec(kind="interval_quantile", half_width=0.3)
    ds = simulate_dgp(spec, 200, 2)
    return bayesian_bootstrap(ds, default_pipeline(spec), 120, seed=8)


# ----------------------------------------------------------------- draws

def test_bootstrap_weights_normalized_and_keyed():
    a = bootstrap_weights(50, 3, 0)
    assert a.mean() == pytest.approx(1.0) and np.all(a > 0)
    np.testing.assert_array_equal(a, bootstrap_weights(50, 3, 0))
    assert not np.array_equal(a, bootstrap_weights(50, 3, 1))
    assert not np.array_equal(a, bootstrap_weights(50, 4, 0))


def test_unit_weights_reproduce_estimate():
    ds = simulate_dgp(BAND, 100, 3)
    ens = bayesian_bootstrap(ds, default_pipeline(BAND), 50, seed=0, weight_scheme="unit")
    for b in range(ens.draws.shape[0]):
        np.testing.assert_array_equal(ens.draws[b], ens.base.sigma)


def test_same_seed_bit_identical_any_thread_count():
    ds = simulate_dgp(BAND, 150, 4)
    p = default_pipeline(BAND)
    a = bayesian_bootstrap(ds, p, 60, seed=11)
    b = bayesian_bootstrap(ds, p, 60, seed=11, threads=4)
    assert a.draws.tobytes() == b.draws.tobytes()
    c = bayesian_bootstrap(ds, p, 60, seed=12)
    assert not np.array_equal(a.draws, c.draws)


def test_too_few_draws_rejected():
    ds = simulate_dgp(BAND, 50, 5)
    with pytest.raises(ParameterError):
        bayesian_bootstrap(ds, default_pipeline(BAND), 49, seed=0)


def test_slope_sd_matches_ols_standard_error(point_ens):
    ds, ens = point_ens
    i = ens.base.directions.index([0.0, 1.0])
    x1, y = ds.x[:, 1], ds.column("y_lower")
    coef = np.linalg.lstsq(ds.x, y, rcond=None)[0]
    resid = y - ds.x @ coef
    se = np.sqrt(resid @ resid / (ds.n - 2) / np.sum((x1 - x1.mean()) ** 2))
    sd = ens.draws[:, i, 0].std(ddof=1)
    assert abs(sd / se - 1) <= 0.30


def test_draws_are_centered_on_estimate(point_ens):
    _, ens = point_ens
    dev = ens.draws - ens.base.sigma[None]
    bound = 3 * ens.sd() / np.sqrt(ens.draws.shape[0])
    assert np.all(np.abs(dev.mean(axis=0)) <= bound)


class _Flaky:
    """Prepared-pipeline stand-in whose refit fails when the first weight is large."""

    def __init__(self, prep, cut):
        self.prep, self.cut = prep, cut

    def fit(self, w=None):
        if w is not None and w[0] > self.cut:
            raise SeparationError("injected")
        return self.prep.fit(w)


def test_failed_draws_are_counted_and_excluded():
    ds = simulate_dgp(BAND, 80, 6)
    p = default_pipeline(BAND)
    prep = prepare(ds, p)
    ens = bayesian_bootstrap(ds, p, 100, seed=1, prepared=_Flaky(prep, 4.0))
    bad = [b for b in range(100) if bootstrap_weights(ds.n, 1, b)[0] > 4.0]
    assert 0 < ens.failures == len(bad) <= 5
    assert not set(bad) & set(ens.draw_index.tolist())
    assert ens.draws.shape[0] == 100 - len(bad)
    with pytest.raises(ConvergenceError, match="failed"):
        bayesian_bootstrap(ds, p, 100, seed=1, prepared=_Flaky(prep, 1.5))


# ------------------------------------------------------------- pointwise

def test_pointwise_contains_estimate_and_nests(band_ens):
    ens = band_ens
    prev = None
    for level in (0.5, 0.8, 0.9, 0.95):
        ci = pointwise_ci(ens, 1, 1, level)
        L, U = ci["estimate"]
        assert ci["lower"] <= U and ci["upper"] >= L
        assert ci["draw_coverage"] >= level
        if prev:
            assert ci["lower"] <= prev["lower"] + 1e-12 and ci["upper"] >= prev["upper"] - 1e-12
        prev = ci


def test_pointwise_collapses_at_low_level(band_ens):
    # level -> 0: B * tau stays large, the interval tends to the estimated bound
    ci = pointwise_ci(band_ens, 1, 0, 0.001)
    L, U = ci["estimate"]
    sd = band_ens.sd()
    i = band_ens.base.directions.index([0.0, 1.0])
    assert abs(ci["lower"] - L) <= sd[i, 0] and abs(ci["upper"] - U) <= sd[i, 0]


def test_pointwise_symmetric_when_point_identified(point_ens):
    _, ens = point_ens
    ci = pointwise_ci(ens, 1, 0, 0.9)
    L, U = ci["estimate"]
    assert L == pytest.approx(U, abs=1e-12)
    i = ens.base.directions.index([0.0, 1.0])
    assert abs((ci["upper"] - U) - (L - ci["lower"])) <= 2 * ens.sd()[i, 0]


def test_pointwise_resolution_and_direction_checks(point_ens):
    _, ens = point_ens
    with pytest.raises(ResolutionError):
        pointwise_ci(ens, 1, 0, 0.99)          # 200 * 0.01 < 5
    with pytest.raises(ParameterError):
        pointwise_ci(ens, np.array([0.6, 0.8]), 0, 0.9)


def test_pointwise_report_cells(band_ens):
    rep = pointwise_report(band_ens, [0, 1], 0.9)
    assert rep.kind == "pointwise" and len(rep.cells) == 2 * 3
    assert all(c["lo"] <= c["hi"] for c in rep.cells)
    assert set(rep.to_dict()) == {"kind", "level", "grid", "directions", "cells", "meta"}
    with pytest.raises(ParameterError):
        ConfidenceReport("x", 1.0, [], [], [])


# -------------------------------------------------------------- uniform

def test_band_monotone_in_level(band_ens):
    a = uniform_band(band_ens, level=0.90)
    b = uniform_band(band_ens, level=0.95)
    for ca, cb in zip(a.cells, b.cells):
        assert cb["lo"] <= ca["lo"] + 1e-12 and cb["hi"] >= ca["hi"] - 1e-12
        assert ca["lo"] <= ca["estimate"] <= ca["hi"]


def test_band_singleton_is_marginal_quantile(band_ens):
    ens = band_ens
    rep = uniform_band(ens, directions=[2], alphas=[1], level=0.9, weight="one")
    (cell,) = rep.cells
    dev = np.abs(ens.draws[:, 2, 1] - ens.base.sigma[2, 1])
    c = np.quantile(dev, 0.9)
    assert cell["hi"] - cell["estimate"] == pytest.approx(c, rel=1e-12)
    assert cell["estimate"] - cell["lo"] == pytest.approx(c, rel=1e-12)


def test_band_weighting_and_subset_errors(band_ens):
    with pytest.raises(ParameterError):
        uniform_band(band_ens, directions=[], level=0.9)
    with pytest.raises(ParameterError):
        uniform_band(band_ens, level=0.9, weight="sd2")


def test_band_degenerate_sd_falls_back_with_warning():
    ds = simulate_dgp(BAND, 60, 9)
    ens = bayesian_bootstrap(ds, default_pipeline(BAND), 50, seed=0, weight_scheme="unit")
    with pytest.warns(RuntimeWarning, match="floor"):
        rep = uniform_band(ens, level=0.9)
    assert all(c["lo"] == c["estimate"] == c["hi"] for c in rep.cells)


# ---------------------------------------------------------- functionals

def test_functionals_at_zero_and_constant():
    s = np.zeros((5, 3))
    for kind in ("kolmogorov", "directed_kolmogorov", "cramer_von_mises"):
        assert functional_statistic(s, kind) == 0.0
    c = np.full((5, 3), 0.7)
    assert functional_statistic(c, "kolmogorov") == pytest.approx(0.7)
    assert functional_statistic(c, "directed_kolmogorov") == 0.0
    assert functional_statistic(-c, "directed_kolmogorov") == pytest.approx(0.7)
    with pytest.raises(ParameterError):
        functional_statistic(c, "anderson")


def test_cramer_von_mises_direct_sum():
    rng = np.random.default_rng(10)
    s, w = rng.standard_normal((5, 3)), 0.5 + rng.random((5, 3))
    total = sum(s[i, j] ** 2 / w[i, j] for i in range(5) for j in range(3))
    assert functional_statistic(s, "cramer_von_mises", w) == pytest.approx(total / 15, rel=1e-14)


@given(st.integers(0, 10 ** 6), st.floats(0.01, 100))
def test_functional_homogeneity(seed, t):
    rng = np.random.default_rng(seed)
    s, w = rng.standard_normal((4, 3)), 0.1 + rng.random((4, 3))
    for kind, deg in (("kolmogorov", 1), ("directed_kolmogorov", 1), ("cramer_von_mises", 2)):
        assert functional_statistic(t * s, kind, w) == pytest.approx(
            t ** deg * functional_statistic(s, kind, w), rel=1e-10, abs=1e-300)


def test_critical_value_is_quantile_of_draws(band_ens):
    ens = band_ens
    dev = ens.deviations
    mask = np.zeros(ens.base.sigma.shape, bool)
    mask[1, 0] = True
    c = bootstrap_critical_value(ens, "kolmogorov", 0.8, subset=mask)
    assert c == pytest.approx(np.quantile(np.abs(dev[:, 1, 0]), 0.8), rel=1e-12)
    stats = [functional_statistic(dev[b], "cramer_von_mises") for b in range(dev.shape[0])]
    assert bootstrap_critical_value(ens, "cramer_von_mises", 0.5) == pytest.approx(
        np.median(stats), rel=1e-12)


def test_kolmogorov_dominates_marginals(band_ens):
    ens = band_ens
    two = np.zeros(ens.base.sigma.shape, bool)
    two[0, 0] = two[3, 2] = True
    c = bootstrap_critical_value(ens, "kolmogorov", 0.9, subset=two)
    for cell in np.argwhere(two):
        m = np.zeros_like(two)
        m[tuple(cell)] = True
        assert c >= bootstrap_critical_value(ens, "kolmogorov", 0.9, subset=m) - 1e-12


# ------------------------------------------------------------- sign test

def test_sign_test_zero_statistic_when_band_straddles_zero():
    spec = DGPSpec(kind="interval_mean", beta=(1.0, 0.0), half_width=2.0)
    ds = simulate_dgp(spec, 200, 12)
    ens = bayesian_bootstrap(ds, default_pipeline(spec), 100, seed=3)
    res = sign_positivity_test(ens, 1, 0.95)
    assert res["statistic"] == 0.0 and not res["reject"]
    assert res["per_alpha"][0]["lower"] < 0 < res["per_alpha"][0]["upper"]


def test_sign_test_rejects_clear_signal():
    spec = DGPSpec(kind="interval_mean", beta=(1.0, 2.0), half_width=0.1)
    ds = simulate_dgp(spec, 500, 13)
    ens = bayesian_bootstrap(ds, default_pipeline(spec), 100, seed=4)
    res = sign_positivity_test(ens, 1, 0.95)
    assert res["reject"] and res["statistic"] > res["critical_value"] > 0


def test_sign_test_critical_value_from_recentered_draws(band_ens):
    ens = band_ens
    res = sign_positivity_test(ens, 1, 0.9, weight="one")
    i, k = ens.base.directions.index([0, 1.0]), ens.base.directions.index([0, -1.0])
    dev = ens.deviations
    a = np.where(-dev[:, k] > 0, np.abs(dev[:, k]), 0.0)
    b = np.where(dev[:, i] < 0, np.abs(dev[:, i]), 0.0)
    stats = np.maximum(a, b).max(axis=1)
    assert res["critical_value"] == pytest.approx(np.quantile(stats, 0.9), rel=1e-12)


def test_ensemble_deviation_scaling(band_ens):
    ens = band_ens
    assert isinstance(ens, BootstrapEnsemble)
    np.testing.assert_allclose(ens.deviations, np.sqrt(ens.n) * (ens.draws - ens.base.sigma),
                               rtol=1e-14)


def test_run_pipeline_matches_ensemble_base():
    ds = simulate_dgp(BAND, 80, 14)
    p = default_pipeline(BAND)
    _, ss = run_pipeline(ds, p)
    ens = bayesian_bootstrap(ds, p, 50, seed=0)
    np.testing.assert_array_equal(ss.sigma, ens.base.sigma)
