"""Series bases p_k(x) for nonparametric estimation of the bounding functions."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import ParameterError

FAMILIES = ("polynomial", "bspline")


@dataclass(frozen=True)
class BasisSpec:
    family: str = "polynomial"
    degree: int = 1
    knots: tuple[float, ...] | None = None
    interactions: int | None = None
    standardize: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown basis family '{self.family}'")
        if self.degree < 0:
            raise ParameterError("degree must be nonnegative")
        if self.knots is not None:
            kn = np.asarray(self.knots, dtype=float)
            if kn.ndim != 1 or len(kn) < 2 or np.any(np.diff(kn) <= 0):
                raise ParameterError("knots must be a strictly increasing vector of length >= 2")
        if self.interactions is not None and self.interactions < 1:
            raise ParameterError("interaction order must be >= 1")

    def to_dict(self) -> dict:
        return {"family": self.family, "degree": self.degree,
                "knots": None if self.knots is None else list(self.knots),
                "interactions": self.interactions, "standardize": self.standardize}

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        d = dict(d)
        if d.get("knots") is not None:
            d["knots"] = tuple(float(v) for v in d["knots"])
        return cls(**d)


@dataclass(frozen=True)
class BasisMatrix:
    """Basis evaluated at the sample points plus what is needed to evaluate it
    elsewhere."""

    P: np.ndarray
    spec: BasisSpec
    active: tuple[int, ...]          # input columns that are expanded
    center: np.ndarray
    scale: np.ndarray
    terms: tuple                     # monomial exponents or spline index tuples
    knots: tuple[np.ndarray, ...] = field(default=())

    @property
    def k(self) -> int:
        return self.P.shape[1]

    @property
    def xi_k(self) -> float:
        return float(np.max(np.linalg.norm(self.P, axis=1)))

    def evaluate(self, x_new) -> np.ndarray:
        return evaluate_basis(self, x_new)


def _terms_polynomial(m: int, degree: int, interactions: int):
    terms = []
    for total in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(m), total):
            if len(set(combo)) > interactions:
                continue
            exps = [0] * m
            for j in combo:
                exps[j] += 1
            terms.append(tuple(exps))
    return terms


def count_polynomial_terms(m: int, degree: int, interactions: int | None = None) -> int:
    """Number of basis columns (intercept included) for ``m`` expanded inputs."""
    inter = m if interactions is None else interactions
    return 1 + len(_terms_polynomial(m, degree, inter))


def _bspline_columns(z: np.ndarray, knots: np.ndarray, degree: int) -> np.ndarray:
    # Clamped knot vector; the first B-spline is dropped because the full set
    # sums to one and would duplicate the intercept.
    t = np.r_[[knots[0]] * degree, knots, [knots[-1]] * degree]
    zc = np.clip(z, knots[0], knots[-1])
    D = BSpline.design_matrix(zc, t, degree, extrapolate=False).toarray()
    return D[:, 1:]


def _expand(Z: np.ndarray, bm_spec: BasisSpec, terms, knots) -> np.ndarray:
    n = Z.shape[0]
    cols = [np.ones(n)]
    if bm_spec.family == "polynomial":
        for exps in terms:
            c = np.ones(n)
            for j, e in enumerate(exps):
                for _ in range(e):
                    c = c * Z[:, j]
            cols.append(c)
        return np.column_stack(cols)
    # bspline: per-coordinate blocks, tensored up to the interaction cap
    blocks = [_bspline_columns(Z[:, j], knots[j], bm_spec.degree) for j in range(Z.shape[1])]
    for term in terms:
        c = np.ones(n)
        for j, b in term:
            c = c * blocks[j][:, b]
        cols.append(c)
    return np.column_stack(cols)


def _bspline_terms(nb: list[int], interactions: int):
    m = len(nb)
    terms = []
    for order in range(1, interactions + 1):
        for coords in itertools.combinations(range(m), order):
            for idx in itertools.product(*[range(nb[j]) for j in coords]):
                terms.append(tuple(zip(coords, idx)))
    return terms


def build_basis(X, spec: BasisSpec) -> BasisMatrix:
    """Expand the regressor block ``X`` (n x d, constant columns allowed).

    Constant columns are absorbed by the leading intercept; remaining columns
    are optionally standardized and expanded.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all(np.isfinite(X)):
        raise ParameterError("regressor block contains non-finite values")
    n = X.shape[0]
    sd = X.std(axis=0)
    active = tuple(int(j) for j in np.flatnonzero(sd > 0))
    m = len(active)
    Xa = X[:, active]
    if spec.standardize and m:
        center = Xa.mean(axis=0)
        scale = Xa.std(axis=0)
    else:
        center, scale = np.zeros(m), np.ones(m)
    Z = (Xa - center) / scale
    inter = m if spec.interactions is None else min(spec.interactions, m)

    knots: tuple[np.ndarray, ...] = ()
    if spec.family == "polynomial":
        terms = tuple(_terms_polynomial(m, spec.degree, inter))
    else:
        if spec.knots is not None:
            knots = tuple(np.asarray(spec.knots, dtype=float) for _ in range(m))
        else:
            knots = tuple(np.array([Z[:, j].min(), Z[:, j].max()]) for j in range(m))
        nb = [len(kn) + spec.degree - 2 for kn in knots]
        terms = tuple(_bspline_terms(nb, inter))

    P = _expand(Z, spec, terms, knots)
    if P.shape[1] > n:
        raise ParameterError(f"basis has k={P.shape[1]} columns but only n={n} observations")
    bm = BasisMatrix(P=P, spec=spec, active=active, center=center, scale=scale,
                     terms=terms, knots=knots)
    if P.shape[1] > 1 and np.linalg.matrix_rank(P) < P.shape[1]:
        warnings.warn("basis columns are collinear after expansion", RuntimeWarning, stacklevel=2)
    return bm


def evaluate_basis(bm: BasisMatrix, x_new) -> np.ndarray:
    """Evaluate ``p_k`` at new regressor rows (a d-vector or an m x d array)."""
    x_new = np.asarray(x_new, dtype=float)
    single = x_new.ndim == 1
    Xn = x_new[None, :] if single else x_new
    Z = (Xn[:, list(bm.active)] - bm.center) / bm.scale
    if bm.spec.family == "bspline":
        for j, kn in enumerate(bm.knots):
            if np.any((Z[:, j] < kn[0]) | (Z[:, j] > kn[-1])):
                warnings.warn("evaluation point outside the knot range; clamped to the boundary",
                              RuntimeWarning, stacklevel=2)
                break
    P = _expand(Z, bm.spec, bm.terms, bm.knots)
    return P[0] if single else P


def recommend_k(n: int, d: int, s: float, family: str = "polynomial", c: float = 1.0) -> int:
    """Series length k = round(c * n**gamma) with gamma the midpoint of
    (d / 2s, 1/3), clamped to [d, n / 5].

    ``d`` counts the non-constant regressors and ``s`` is the assumed
    smoothness of the bounding functions.
    """
    if family not in FAMILIES:
        raise ParameterError(f"unknown basis family '{family}'")
    if n < 10:
        raise ParameterError("recommend_k needs n >= 10")
    lo = d / (2.0 * s) if math.isfinite(s) else 0.0
    if not lo < 1.0 / 3.0:
        raise ParameterError(
            f"smoothness s={s} too low for d={d}: need d/(2s) < 1/3 so that the "
            "undersmoothing interval for k is nonempty")
    gamma = 0.5 * (lo + 1.0 / 3.0)
    k = round(c * n ** gamma)
    return int(min(max(k, d), n // 5))


def degree_for_k(k: int, m: int, interactions: int | None = None, max_degree: int = 12) -> int:
    """Polynomial degree whose column count is nearest to ``k`` (ties go low)."""
    best, gap = 0, abs(1 - k)
    for deg in range(1, max_degree + 1):
        g = abs(count_polynomial_terms(m, deg, interactions) - k)
        if g < gap:
            best, gap = deg, g
    return best
