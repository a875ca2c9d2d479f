import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blpbounds.dataset import (Dataset, JitterPlan, build_restricted_tilde_y1, build_tilde_y,
                               discrete_columns, jitter_discrete, load_csv, save_csv,
                               sigma_delta, validate)
from blpbounds.errors import ParameterError, ParseError, RoleError


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


ROLES = {"y_lower": "y0", "y_upper": "y1", "x": ["const", "x1"]}


def test_load_three_rows_synthesizes_intercept(tmp_path):
    p = write(tmp_path / "d.csv", "y0,y1,x1\n0,1,0.5\n1,2,1.5\n2,2,2.5\n")
    ds = load_csv(p, ROLES)
    assert ds.n == 3
    np.testing.assert_array_equal(ds.x[:, 0], 1.0)
    np.testing.assert_array_equal(ds.x[:, 1], [0.5, 1.5, 2.5])
    np.testing.assert_array_equal(ds.column("y_upper"), [1, 2, 2])


def test_load_passes_bound_violation_through_to_validate(tmp_path):
    p = write(tmp_path / "d.csv", "y0,y1,x1\n0,1,0.5\n1,2,1.5\n3,2,2.5\n")
    ds = load_csv(p, ROLES)
    rep = validate(ds)
    assert not rep.ok
    assert rep.violations == [{"row": 2, "rule": "bounds_order"}]


def test_parse_error_names_row_and_column(tmp_path):
    p = write(tmp_path / "d.csv", "y0,y1,x1\n0,1,0.5\n1,2,abc\n")
    with pytest.raises(ParseError) as exc:
        load_csv(p, ROLES)
    assert exc.value.row == 2 and exc.value.column == "x1"
    assert "row 2" in str(exc.value) and "x1" in str(exc.value)


def test_missing_role_column(tmp_path):
    p = write(tmp_path / "d.csv", "y0,x1\n0,0.5\n")
    with pytest.raises(RoleError):
        load_csv(p, ROLES)


def test_empty_cells_read_as_nan_and_allowed_for_unselected_y(tmp_path):
    p = write(tmp_path / "d.csv", "y,u,x1\n1.0,1,0\n,0,1\n2.0,1,2\n")
    ds = load_csv(p, {"y": "y", "selection_u": "u", "x": ["const", "x1"]})
    assert math.isnan(ds.column("y")[1])
    assert validate(ds).ok


def test_validate_clean_is_empty():
    rng = np.random.default_rng(0)
    lo = rng.standard_normal(20)
    ds = Dataset.from_arrays(x=rng.random(20), y_lower=lo, y_upper=lo + 1)
    rep = validate(ds)
    assert rep.violations == [] and rep.warnings == []
    assert rep.x_rank == 2


def test_validate_duplicated_column_warns_with_names():
    rng = np.random.default_rng(1)
    x = rng.random(10)
    ds = Dataset.from_arrays(x=np.column_stack([x, x]), y=rng.random(10))
    rep = validate(ds)
    assert rep.ok
    (w,) = rep.warnings
    assert w["rule"] == "rank_deficient" and set(w["columns"]) == {"x1", "x2"}


def test_validate_selection_binary_row():
    u = np.ones(8)
    u[5] = 2
    ds = Dataset.from_arrays(x=np.arange(8.0), y=np.arange(8.0), selection_u=u)
    assert {"row": 5, "rule": "selection_binary"} in validate(ds).violations


def test_validate_flags_missing_intercept():
    ds = Dataset({"a": np.arange(3.0), "y": np.ones(3)}, {"x": ["a"], "y": "y"})
    assert {"rule": "intercept_missing"} in validate(ds).violations


def test_sigma_delta_closed_form():
    s = sigma_delta(0.1, 1.0, 1.0, 0.5)
    assert s == pytest.approx(0.1 / (math.sqrt(2 / math.pi) * 2.5), rel=1e-14)
    assert s == pytest.approx(0.05013, abs=5e-6)


@given(st.floats(1e-4, 10.0))
def test_sigma_delta_is_linear_in_delta(delta):
    assert sigma_delta(2 * delta, 1.3, 0.7, 0.2) == pytest.approx(2 * sigma_delta(delta, 1.3, 0.7, 0.2),
                                                                  rel=1e-13)


@pytest.mark.parametrize("delta", [0.0, -0.1])
def test_nonpositive_delta_rejected(delta):
    with pytest.raises(ParameterError):
        sigma_delta(delta, 1, 1, 1)
    with pytest.raises(ParameterError):
        JitterPlan(delta, ("x1",), 0.1, 0)


def _discrete_ds(n=200, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 3, n).astype(float)
    y = x + rng.standard_normal(n)
    return Dataset.from_arrays(x=x, y_lower=y - 1, y_upper=y + 1)


def test_jitter_deterministic_and_keeps_x():
    ds = _discrete_ds()
    plan = JitterPlan.from_surface(0.1, np.ones((ds.n, 1)), 2 * np.ones((ds.n, 1)), ["x1"], seed=5)
    a, b = jitter_discrete(ds, plan), jitter_discrete(ds, plan)
    np.testing.assert_array_equal(a.block("x_jitter"), b.block("x_jitter"))
    np.testing.assert_array_equal(a.x, ds.x)
    assert a.meta["jitter"]["sigma_delta"] == plan.sigma_delta
    assert discrete_columns(ds) == ["x1"]


def test_jitter_deviation_bounded_by_noise_draws():
    ds = _discrete_ds()
    plan = JitterPlan(1e-3, ("x1",), 1e-4, 11)
    out = jitter_discrete(ds, plan)
    dev = np.abs(out.block("x_jitter")[:, 1] - ds.x[:, 1])
    eta = np.random.default_rng(11).standard_normal((ds.n, 1))
    assert dev.max() <= 3 * plan.sigma_delta * np.abs(eta).max()


def test_jitter_constant_column_allowed():
    ds = Dataset.from_arrays(x=np.column_stack([np.ones(10) * 2, np.arange(10.0)]), y=np.ones(10))
    out = jitter_discrete(ds, JitterPlan(0.1, ("x1",), 0.01, 0))
    assert np.std(out.block("x_jitter")[:, 1]) > 0


def test_jitter_rejects_intercept_target():
    ds = _discrete_ds()
    with pytest.raises(ParameterError):
        jitter_discrete(ds, JitterPlan(0.1, ("const",), 0.01, 0))


def _sel(y, u):
    return Dataset.from_arrays(x=np.arange(len(y), dtype=float), y=y, selection_u=u)


def test_tilde_y_substitution():
    y0, y1 = build_tilde_y(_sel([2.0, np.nan, 5.0], [1, 0, 1]), 0.0, 10.0)
    np.testing.assert_array_equal(y0, [2, 0, 5])
    np.testing.assert_array_equal(y1, [2, 10, 5])


def test_tilde_y_limits():
    y = np.array([1.0, 3.0, 2.0])
    a, b = build_tilde_y(_sel(y, [1, 1, 1]), -5, 5)
    np.testing.assert_array_equal(a, y)
    np.testing.assert_array_equal(b, y)
    a, b = build_tilde_y(_sel(y, [0, 0, 0]), -5, 5)
    np.testing.assert_array_equal(a, -5)
    np.testing.assert_array_equal(b, 5)


@given(st.lists(st.tuples(st.floats(-5, 5), st.booleans()), min_size=1, max_size=30),
       st.floats(0, 1))
def test_tilde_y_sandwiches_any_imputation(rows, frac):
    y = np.array([r[0] for r in rows])
    u = np.array([float(r[1]) for r in rows])
    lo, hi = -10.0, 10.0
    a, b = build_tilde_y(_sel(np.where(u == 1, y, np.nan), u), lo, hi)
    mid = lo + frac * (hi - lo)
    filled = np.where(u == 1, y, mid)
    assert np.all(a <= filled) and np.all(filled <= b)


def test_restricted_pseudo_rows():
    y = np.array([1.0, np.nan, 3.0])
    ds = _sel(y, [1, 0, 1])
    ps = build_restricted_tilde_y1(ds, 0.3, 0.5, np.array([1.5, 2.5, 3.5]), y_hi=9.0)
    assert len(ps.values) == 4
    rows = ps.source_row == 1
    np.testing.assert_allclose(sorted(ps.weights[rows]), [0.3, 0.7])
    assert sorted(ps.values[rows]) == [2.5, 9.0]
    assert ps.weights.sum() == pytest.approx(ds.n)


def test_restricted_all_selected_is_identity():
    y = np.array([1.0, 2.0, 3.0])
    ps = build_restricted_tilde_y1(_sel(y, [1, 1, 1]), 0.5, 0.5, lambda i: 0.0, y_hi=9.0)
    np.testing.assert_array_equal(ps.values, y)
    np.testing.assert_array_equal(ps.weights, 1.0)


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=20))
def test_csv_roundtrip_bit_identical(tmp_path_factory, vals):
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    v = np.array(vals)
    ds = Dataset.from_arrays(x=v, y_lower=v - 1, y_upper=v + 1)
    save_csv(ds, path)
    back = load_csv(path, ds.roles)
    for name, col in ds.columns.items():
        assert back.columns[name].tobytes() == col.tobytes()
