"""Observation data: loading, validation, the selection transforms and jittering."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import ParameterError, ParseError, RoleError

INTERCEPT = "const"
SCALAR_ROLES = ("y", "y_lower", "y_upper", "selection_u", "weight",
                "x_lower", "x_upper", "treatment")
BLOCK_ROLES = ("x", "v", "z_tilde", "x_jitter")
E_ABS_NORMAL = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class Dataset:
    """Column store with declared roles.

    ``roles`` maps a role name to a column name (scalar roles) or a list of
    column names (``x``, ``v``, ``z_tilde``, ``x_jitter``).  The ``x`` block
    carries the intercept as its first column.
    """

    columns: Mapping[str, np.ndarray]
    roles: Mapping[str, object]
    meta: Mapping[str, object] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def has(self, role: str) -> bool:
        return role in self.roles and bool(self.roles[role])

    def column(self, role: str) -> np.ndarray:
        if not self.has(role):
            raise RoleError(f"role '{role}' is not mapped")
        name = self.roles[role]
        if not isinstance(name, str):
            raise RoleError(f"role '{role}' is a block; use block()")
        return self.columns[name]

    def block(self, role: str) -> np.ndarray:
        if not self.has(role):
            raise RoleError(f"role '{role}' is not mapped")
        names = self.roles[role]
        if isinstance(names, str):
            names = [names]
        return np.column_stack([self.columns[c] for c in names])

    def block_names(self, role: str) -> list[str]:
        names = self.roles.get(role) or []
        return [names] if isinstance(names, str) else list(names)

    @property
    def x(self) -> np.ndarray:
        return self.block("x")

    @property
    def d(self) -> int:
        return len(self.block_names("x"))

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        cols = {k: v[rows] for k, v in self.columns.items()}
        return replace(self, columns=cols)

    def with_columns(self, new: Mapping[str, np.ndarray], **roles) -> "Dataset":
        cols = dict(self.columns)
        cols.update({k: np.asarray(v, dtype=float) for k, v in new.items()})
        r = dict(self.roles)
        r.update(roles)
        return replace(self, columns=cols, roles=r)

    @classmethod
    def from_arrays(cls, *, x=None, y=None, y_lower=None, y_upper=None,
                    selection_u=None, v=None, z_tilde=None, weight=None,
                    x_lower=None, x_upper=None, treatment=None) -> "Dataset":
        """Build a dataset from arrays; ``x`` excludes the intercept, which is
        synthesized as the first column of the ``x`` block."""
        cols: dict[str, np.ndarray] = {}
        roles: dict[str, object] = {}
        n = None
        for name, val in (("y", y), ("y_lower", y_lower), ("y_upper", y_upper),
                          ("selection_u", selection_u), ("weight", weight),
                          ("x_lower", x_lower), ("x_upper", x_upper),
                          ("treatment", treatment)):
            if val is not None:
                arr = np.asarray(val, dtype=float).reshape(-1)
                cols[name] = arr
                roles[name] = name
                n = len(arr)

        def _block(prefix, val):
            arr = np.asarray(val, dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            names = [f"{prefix}{j + 1}" for j in range(arr.shape[1])]
            for j, nm in enumerate(names):
                cols[nm] = arr[:, j].copy()
            return names, arr.shape[0]

        xnames: list[str] = []
        if x is not None:
            xnames, n = _block("x", x)
        if n is None:
            raise ParameterError("no columns supplied")
        cols[INTERCEPT] = np.ones(n)
        xnames = [INTERCEPT] + xnames
        roles["x"] = xnames
        if v is not None:
            roles["v"], _ = _block("v", v)
        if z_tilde is not None:
            roles["z_tilde"], _ = _block("zt", z_tilde)
        return cls(columns=cols, roles=roles)


# ---------------------------------------------------------------- CSV I/O

def _normalize_roles(roles: Mapping[str, object]) -> dict[str, object]:
    out: dict[str, object] = {}
    for k, v in roles.items():
        if k not in SCALAR_ROLES and k not in BLOCK_ROLES:
            raise RoleError(f"unknown role '{k}'")
        if k in BLOCK_ROLES:
            out[k] = [v] if isinstance(v, str) else list(v)
        else:
            out[k] = v
    return out


def load_csv(path, roles: Mapping[str, object]) -> Dataset:
    """Read a headed CSV file and bind columns to roles.

    Empty cells parse as NaN (unobserved outcomes for unselected rows).  The
    intercept column ``const`` is synthesized when named in the ``x`` role but
    absent from the file.
    """
    path = Path(path)
    roles = _normalize_roles(roles)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = list(reader)

    needed: list[str] = []
    for k, v in roles.items():
        needed.extend(v if isinstance(v, list) else [v])
    for name in needed:
        if name not in header and name != INTERCEPT:
            raise RoleError(f"column '{name}' not found in {path.name}")

    columns: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        vals = np.empty(len(rows))
        for i, row in enumerate(rows):
            if len(row) != len(header):
                raise ParseError(f"row {i + 1}: expected {len(header)} fields, got {len(row)}",
                                 row=i + 1)
            cell = row[j].strip()
            if cell == "":
                vals[i] = np.nan
                continue
            try:
                vals[i] = float(cell)
            except ValueError:
                raise ParseError(f"row {i + 1}, column {name}: cannot parse {cell!r}",
                                 row=i + 1, column=name) from None
        columns[name] = vals
    if INTERCEPT in roles.get("x", []) and INTERCEPT not in columns:
        columns[INTERCEPT] = np.ones(len(rows))
    return Dataset(columns=columns, roles=roles, meta={"source": str(path)})


def save_csv(ds: Dataset, path) -> None:
    """Write all columns; floats use the shortest round-tripping repr."""
    names = list(ds.columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(ds.n):
            w.writerow(["" if np.isnan(ds.columns[c][i]) else repr(float(ds.columns[c][i]))
                        for c in names])


# ------------------------------------------------------------- validation

@dataclass
class ValidationReport:
    violations: list[dict] = field(default_factory=list)
    warnings: list[dict] = field(default_factory=list)
    x_rank: int | None = None
    x_columns: int | None = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"violations": self.violations, "warnings": self.warnings,
                "x_rank": self.x_rank, "x_columns": self.x_columns}


def validate(ds: Dataset) -> ValidationReport:
    """List every invariant violation of ``ds``; never raises."""
    rep = ValidationReport()
    n = ds.n
    for role, names in ds.roles.items():
        for name in ([names] if isinstance(names, str) else names):
            if name not in ds.columns:
                rep.violations.append({"rule": "missing_column", "role": role, "column": name})
            elif len(ds.columns[name]) != n:
                rep.violations.append({"rule": "length_mismatch", "role": role, "column": name})
    if rep.violations:
        return rep

    u = ds.column("selection_u") if ds.has("selection_u") else None
    unselected = (u == 0) if u is not None else np.zeros(n, dtype=bool)
    for role, names in ds.roles.items():
        for name in ([names] if isinstance(names, str) else names):
            bad = ~np.isfinite(ds.columns[name])
            if role == "y":
                bad &= ~unselected
            for i in np.flatnonzero(bad):
                rep.violations.append({"row": int(i), "rule": "non_finite", "column": name})

    if ds.has("y_lower") and ds.has("y_upper"):
        lo, hi = ds.column("y_lower"), ds.column("y_upper")
        for i in np.flatnonzero(lo > hi):
            rep.violations.append({"row": int(i), "rule": "bounds_order"})
    if ds.has("x_lower") and ds.has("x_upper"):
        for i in np.flatnonzero(ds.column("x_lower") > ds.column("x_upper")):
            rep.violations.append({"row": int(i), "rule": "regressor_bounds_order"})
    if u is not None:
        for i in np.flatnonzero(~np.isin(u, (0.0, 1.0))):
            rep.violations.append({"row": int(i), "rule": "selection_binary"})

    if ds.has("x"):
        X = ds.x
        names = ds.block_names("x")
        if not np.any(np.all(X == 1.0, axis=0)):
            rep.violations.append({"rule": "intercept_missing"})
        if np.all(np.isfinite(X)):
            rank = int(np.linalg.matrix_rank(X))
            rep.x_rank, rep.x_columns = rank, X.shape[1]
            if rank < X.shape[1]:
                rep.warnings.append({"rule": "rank_deficient", "rank": rank,
                                     "columns": _dependent_columns(X, names, rank)})
    return rep


def _dependent_columns(X, names, rank):
    dup = set()
    for a in range(X.shape[1]):
        for b in range(a + 1, X.shape[1]):
            if np.array_equal(X[:, a], X[:, b]):
                dup.update((names[a], names[b]))
    _, _, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    dup.update(names[j] for j in piv[rank:])
    return sorted(dup, key=names.index)


# ---------------------------------------------------------------- jitter

def discrete_columns(ds: Dataset, max_unique: int = 20) -> list[str]:
    """Non-intercept x columns with at most ``max_unique`` distinct values."""
    return [c for c in ds.block_names("x")[1:]
            if len(np.unique(ds.columns[c])) <= max_unique]


def sigma_delta(delta: float, mean_abs_theta0: float, mean_abs_theta1: float,
                mean_abs_width: float) -> float:
    """Noise scale that keeps the Hausdorff distance of the jittered set
    within ``delta`` of the original."""
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    scale = E_ABS_NORMAL * (mean_abs_theta0 + mean_abs_theta1 + mean_abs_width)
    if not scale > 0:
        raise ParameterError("bounding functions are identically zero; sigma_delta undefined")
    return delta / scale


@dataclass(frozen=True)
class JitterPlan:
    delta: float
    target_columns: tuple[str, ...]
    sigma_delta: float
    seed: int

    def __post_init__(self):
        if not self.delta > 0:
            raise ParameterError(f"delta must be positive, got {self.delta}")
        if not (np.isfinite(self.sigma_delta) and self.sigma_delta > 0):
            raise ParameterError(f"invalid sigma_delta {self.sigma_delta}")

    @classmethod
    def from_surface(cls, delta, theta0, theta1, target_columns, seed=0) -> "JitterPlan":
        """Plug-in plan from fitted bound matrices (n x |grid|): each
        expectation is a sample mean, maximized over the index grid."""
        t0, t1 = np.atleast_2d(np.asarray(theta0).T).T, np.atleast_2d(np.asarray(theta1).T).T
        m0 = np.max(np.mean(np.abs(t0), axis=0))
        m1 = np.max(np.mean(np.abs(t1), axis=0))
        mw = np.max(np.mean(np.abs(t1 - t0), axis=0))
        return cls(delta, tuple(target_columns), sigma_delta(delta, m0, m1, mw), int(seed))


def jitter_discrete(ds: Dataset, plan: JitterPlan) -> Dataset:
    """Add N(0, sigma_delta^2) noise to the target x columns.

    The jittered block is stored under the ``x_jitter`` role (parallel to
    ``x``) and is used as the instrument block; ``x`` itself is untouched.
    """
    xnames = ds.block_names("x")
    for c in plan.target_columns:
        if c not in xnames[1:]:
            raise ParameterError(f"jitter target '{c}' is not a non-intercept x column")
    rng = np.random.default_rng(plan.seed)
    eta = rng.standard_normal((ds.n, len(plan.target_columns)))
    new, jnames = {}, []
    for c in xnames:
        if c in plan.target_columns:
            j = plan.target_columns.index(c)
            new[c + "__jit"] = ds.columns[c] + plan.sigma_delta * eta[:, j]
            jnames.append(c + "__jit")
        else:
            jnames.append(c)
    out = ds.with_columns(new, x_jitter=jnames)
    meta = dict(out.meta)
    meta["jitter"] = {"delta": plan.delta, "sigma_delta": plan.sigma_delta,
                      "seed": plan.seed, "columns": list(plan.target_columns)}
    return replace(out, meta=meta)


# -------------------------------------------------------- selection transforms

def build_tilde_y(ds: Dataset, y_lo: float = -np.inf, y_hi: float = np.inf):
    """Replace unobserved outcomes by the logical bounds.

    Returns ``(tilde_y0, tilde_y1)`` with ``y`` on selected rows and
    ``y_lo`` / ``y_hi`` on unselected rows.
    """
    y = ds.column("y")
    u = ds.column("selection_u")
    sel = u == 1
    if np.any(sel):
        if y_lo > np.min(y[sel]) or y_hi < np.max(y[sel]):
            raise ParameterError("logical bounds must bracket the observed outcomes")
    t0 = np.where(sel, y, y_lo)
    t1 = np.where(sel, y, y_hi)
    return t0, t1


@dataclass(frozen=True)
class PseudoObservations:
    values: np.ndarray
    weights: np.ndarray
    source_row: np.ndarray


def build_restricted_tilde_y1(ds: Dataset, alpha0: float, alpha1: float,
                              q_fit: Callable[[int], float] | Sequence[float],
                              y_hi: float, weights=None) -> PseudoObservations:
    """Upper-bound pseudo-observations under the restriction that the
    ``alpha1`` selected-quantile dominates the ``alpha0`` unselected-quantile.

    Each unselected row becomes two rows: ``y_hi`` with weight ``1 - alpha0``
    and ``q_fit`` (the fitted selected-sample ``alpha1`` quantile at that
    row) with weight ``alpha0``.
    """
    if not (0 < alpha0 < 1 and 0 < alpha1 < 1):
        raise ParameterError("alpha0 and alpha1 must lie in (0, 1)")
    y = ds.column("y")
    u = ds.column("selection_u")
    w = np.ones(ds.n) if weights is None else np.asarray(weights, dtype=float)
    vals, wts, src = [], [], []
    for i in range(ds.n):
        if u[i] == 1:
            vals.append(y[i]); wts.append(w[i]); src.append(i)
            continue
        qi = q_fit(i) if callable(q_fit) else q_fit[i]
        if qi is None or not np.isfinite(qi):
            raise ParameterError(f"conditional quantile undefined at row {i}")
        vals += [y_hi, qi]
        wts += [w[i] * (1 - alpha0), w[i] * alpha0]
        src += [i, i]
    return PseudoObservations(np.asarray(vals, float), np.asarray(wts, float),
                              np.asarray(src, dtype=int))
