"""Support function of the identified set of best-linear-approximation
coefficients, its projections, and 2-D set reconstruction."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import ndtri

from .bounds import BoundingSurface, IndexGrid
from .dataset import Dataset
from .errors import ParameterError, ResolutionError, SingularityError


# -------------------------------------------------------------- directions

@dataclass(frozen=True)
class DirectionSet:
    Q: np.ndarray
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        norms = np.linalg.norm(Q, axis=1)
        if np.any(np.abs(norms - 1) > 1e-12):
            raise ParameterError("directions must be unit vectors")
        object.__setattr__(self, "Q", Q)

    @property
    def d(self) -> int:
        return self.Q.shape[1]

    def __len__(self):
        return self.Q.shape[0]

    def index(self, q, tol=1e-12) -> int | None:
        q = np.asarray(q, dtype=float)
        hit = np.flatnonzero(np.max(np.abs(self.Q - q), axis=1) <= tol)
        return int(hit[0]) if len(hit) else None

    @classmethod
    def axes_pm(cls, d: int) -> "DirectionSet":
        eye = np.eye(d)
        Q = np.empty((2 * d, d))
        Q[0::2], Q[1::2] = eye, -eye
        return cls(Q, {"kind": "axes_pm"})

    @classmethod
    def circle(cls, K: int = 64) -> "DirectionSet":
        """K equally spaced directions in the plane plus the signed axes."""
        ang = 2 * np.pi * np.arange(K) / K
        Q = np.column_stack([np.cos(ang), np.sin(ang)])
        for j, e in enumerate(([1, 0], [0, 1], [-1, 0], [0, -1])):
            if K % 4 == 0:
                Q[j * K // 4] = e
        ds = _merge([cls.axes_pm(2).Q, Q])
        return cls(ds, {"kind": "circle", "K": K})

    @classmethod
    def sphere_sample(cls, d: int, K: int, seed: int = 0) -> "DirectionSet":
        """Signed axes plus K quasi-uniform points on the sphere.

        Points come from an additive-recurrence lattice (irrational rotation)
        with a seeded random shift, pushed through the inverse normal CDF and
        normalized.
        """
        phi = 2.0
        for _ in range(64):
            phi = (1 + phi) ** (1.0 / (d + 1))
        alpha = (1.0 / phi) ** np.arange(1, d + 1)
        shift = np.random.default_rng(seed).random(d)
        U = (shift + np.outer(np.arange(1, K + 1), alpha)) % 1.0
        U = np.clip(U, 1e-12, 1 - 1e-12)
        G = ndtri(U)
        G /= np.linalg.norm(G, axis=1, keepdims=True)
        Q = _merge([cls.axes_pm(d).Q, G])
        return cls(Q, {"kind": "sphere_sample", "K": K, "seed": seed})

    @classmethod
    def default(cls, d: int, K: int | None = None, seed: int = 0) -> "DirectionSet":
        if d == 1:
            return cls.axes_pm(1)
        if d == 2:
            return cls.circle(64 if K is None else K)
        return cls.sphere_sample(d, 64 if K is None else K, seed)

    def with_directions(self, extra) -> "DirectionSet":
        return DirectionSet(_merge([self.Q, np.atleast_2d(extra)]), dict(self.descriptor))


def _merge(blocks, tol=1e-12):
    out = []
    for Q in blocks:
        for q in np.atleast_2d(Q):
            if not any(np.max(np.abs(q - p)) <= tol for p in out):
                out.append(q)
    return np.array(out)


# ------------------------------------------------------------- instruments

def effective_instrument(ds: Dataset, W=None) -> np.ndarray:
    """Instrument block z_i = x_i (z~_i' W z~_i); z = x without instruments.

    When the dataset carries a jittered copy of x (role ``x_jitter``) it
    replaces x here.
    """
    base = ds.block("x_jitter") if ds.has("x_jitter") else ds.x
    if not ds.has("z_tilde"):
        return base
    Zt = ds.block("z_tilde")
    j = Zt.shape[1]
    W = np.eye(j) if W is None else np.asarray(W, dtype=float)
    if W.shape != (j, j):
        raise ParameterError(f"weight matrix must be {j}x{j}")
    if not np.allclose(W, W.T):
        raise ParameterError("weight matrix must be symmetric")
    ev = np.linalg.eigvalsh(W)
    if ev.min() < -1e-10 * max(np.abs(ev).max(), 1e-300):
        raise ParameterError("weight matrix is not positive semidefinite")
    s = np.einsum("ij,jk,ik->i", Zt, W, Zt)
    return base * s[:, None]


def estimate_sigma_matrix(x, z, weights=None) -> tuple[np.ndarray, float]:
    """Inverse of the (weighted) empirical E[x z'] and its condition number."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    w = np.ones(len(x)) if weights is None else np.asarray(weights, dtype=float)
    M = (x * (w / np.sum(w))[:, None]).T @ z
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > 1e14:
        _, R, piv = scipy.linalg.qr(M, pivoting=True)
        diag = np.abs(np.diag(R))
        bad = [int(piv[i]) for i in range(len(diag)) if diag[i] <= 1e-12 * max(diag.max(), 1e-300)]
        raise SingularityError(f"E[x z'] is singular; collinear columns {bad or list(piv[-1:])}")
    return np.linalg.inv(M), cond


# -------------------------------------------------------------- the surface

def support_values(Sigma, z, theta0, theta1, Q, weights=None) -> np.ndarray:
    """sigma(q, a) for all rows of Q and columns of theta: |Q| x |grid|.

    Rows with q'Sigma z_i > 0 take theta1, the rest (ties included) theta0.
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    zq = z @ Sigma.T @ np.atleast_2d(Q).T                   # n x |Q|
    pos = np.where(zq > 0, zq, 0.0)
    neg = np.where(zq > 0, 0.0, zq)
    wn = (w / np.sum(w))[:, None]
    return pos.T @ (wn * theta1) + neg.T @ (wn * theta0)


@dataclass(frozen=True)
class SupportSurface:
    sigma: np.ndarray
    Sigma_hat: np.ndarray
    directions: DirectionSet
    grid: IndexGrid
    instrument: str = "x"
    condition_number: float = float("nan")
    crossing_count: int = 0
    n: int = 0
    _z: np.ndarray | None = field(default=None, repr=False, compare=False)
    _w: np.ndarray | None = field(default=None, repr=False, compare=False)
    _t0: np.ndarray | None = field(default=None, repr=False, compare=False)
    _t1: np.ndarray | None = field(default=None, repr=False, compare=False)

    def evaluate(self, Q) -> np.ndarray:
        """Support function at arbitrary directions (recomputed from data)."""
        if self._z is None:
            raise ParameterError("surface carries no data for on-demand evaluation")
        return support_values(self.Sigma_hat, self._z, self._t0, self._t1, Q, self._w)

    def value(self, q) -> np.ndarray:
        i = self.directions.index(q)
        return self.sigma[i] if i is not None else self.evaluate(q)[0]

    def to_long_csv(self, path) -> None:
        d = self.directions.d
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["q_index"] + [f"q{j + 1}" for j in range(d)] + ["alpha", "sigma"])
            for i, q in enumerate(self.directions.Q):
                for a, al in enumerate(self.grid.values):
                    w.writerow([i] + [repr(float(c)) for c in q]
                               + [repr(float(al)), repr(float(self.sigma[i, a]))])


def compute_support_surface(ds: Dataset, z, bs: BoundingSurface, directions: DirectionSet,
                            grid: IndexGrid | None = None, obs_weights=None,
                            instrument: str = "x") -> SupportSurface:
    """Plug-in estimate of the support function on directions x grid."""
    grid = bs.grid if grid is None else grid
    if not grid.same_as(bs.grid):
        raise ParameterError("grid does not match the bounding surface")
    x = ds.x
    z = np.asarray(z, dtype=float)
    if bs.n != x.shape[0] or z.shape != x.shape:
        raise ParameterError("bounding surface rows, x and z must align")
    if directions.d != x.shape[1]:
        raise ParameterError("direction dimension differs from dim(x)")
    Sigma, cond = estimate_sigma_matrix(x, z, obs_weights)
    sig = support_values(Sigma, z, bs.theta0, bs.theta1, directions.Q, obs_weights)
    w = None if obs_weights is None else np.asarray(obs_weights, dtype=float)
    return SupportSurface(sig, Sigma, directions, grid, instrument, cond, bs.crossing_count,
                          x.shape[0], z, w, bs.theta0, bs.theta1)


def project_bounds(ss: SupportSurface, q) -> tuple[np.ndarray, np.ndarray]:
    """Per-alpha interval [-sigma(-q), sigma(q)] for q'beta; an integer q
    means the j-th coordinate."""
    if isinstance(q, (int, np.integer)):
        e = np.zeros(ss.directions.d)
        e[q] = 1.0
        q = e
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    return -ss.value(-q), ss.value(q)


def beta1_closed_form(ds: Dataset, bs: BoundingSurface, weights=None):
    """Slope bounds in the bivariate regression of f on (1, x1).

    Returns per-alpha arrays (lower, upper).  Rows at the mean contribute
    nothing, so the tie rule does not matter here.
    """
    X = ds.x
    if X.shape[1] != 2:
        raise ParameterError("closed form needs x = (1, x1)")
    x1 = X[:, 1]
    w = np.ones(len(x1)) if weights is None else np.asarray(weights, dtype=float)
    w = w / np.sum(w)
    m = np.sum(w * x1)
    var = np.sum(w * x1 * x1) - m * m
    if not var > 0:
        raise ParameterError("x1 has zero variance")
    c = (x1 - m)[:, None]
    below, above = (x1 < m)[:, None], (x1 > m)[:, None]
    t0, t1 = bs.theta0, bs.theta1
    lower = np.sum(w[:, None] * c * np.where(below, t1, np.where(above, t0, 0.0)), axis=0) / var
    upper = np.sum(w[:, None] * c * np.where(above, t1, np.where(below, t0, 0.0)), axis=0) / var
    return lower, upper


def brute_force_support_oracle(ds: Dataset, z, bs: BoundingSurface, q, alpha_index: int = 0,
                               weights=None) -> float:
    """max over all 2^n vertex selections phi_i in {theta0_i, theta1_i} of
    q' (E_n[x z'])^{-1} E_n[z phi]."""
    x = ds.x
    n = x.shape[0]
    if n > 20:
        raise ParameterError("brute-force oracle is limited to n <= 20")
    z = np.asarray(z, dtype=float)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    w = w / np.sum(w)
    M = np.zeros((x.shape[1], x.shape[1]))
    for i in range(n):
        M += w[i] * np.outer(x[i], z[i])
    a = np.linalg.solve(M.T, np.asarray(q, dtype=float))     # a' = q' M^{-1}
    t0, t1 = bs.theta0[:, alpha_index], bs.theta1[:, alpha_index]
    best = -np.inf
    coef = w * (z @ a)
    for bits in itertools.product((0, 1), repeat=n):
        phi = np.where(np.array(bits, dtype=bool), t1, t0)
        best = max(best, float(np.sum(coef * phi)))
    return best


# --------------------------------------------------------------- polygons

@dataclass(frozen=True)
class Polygon:
    vertices: np.ndarray           # m x 2, counterclockwise
    empty: bool = False
    degenerate: bool = False

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["vertex", "b1", "b2"])
            for i, (a, b) in enumerate(self.vertices):
                w.writerow([i, repr(float(a)), repr(float(b))])


def _clip(poly, q, s, tol):
    out = []
    m = len(poly)
    for i in range(m):
        P, Qp = poly[i], poly[(i + 1) % m]
        fp, fq = q @ P - s, q @ Qp - s
        if fp <= tol:
            out.append(P)
        if (fp < -tol and fq > tol) or (fp > tol and fq < -tol):
            t = fp / (fp - fq)
            out.append(P + t * (Qp - P))
    return out


def reconstruct_polygon_2d(ss: SupportSurface, alpha_index: int = 0) -> Polygon:
    """Vertices of the intersection of the half-planes q'b <= sigma(q)."""
    if ss.directions.d != 2:
        raise ParameterError("polygon reconstruction needs d = 2")
    K = ss.directions.descriptor.get("K", 0)
    if ss.directions.descriptor.get("kind") != "circle" or K < 8:
        raise ResolutionError("polygon reconstruction needs a circle of at least 8 directions")
    sig = ss.sigma[:, alpha_index]
    scale = float(np.max(np.abs(sig))) + 1.0
    R = 10.0 * scale
    poly = [np.array(v, dtype=float) for v in ((-R, -R), (R, -R), (R, R), (-R, R))]
    tol = 1e-12 * scale
    for q, s in zip(ss.directions.Q, sig):
        poly = _clip(poly, q, s, tol)
        if not poly:
            return Polygon(np.empty((0, 2)), empty=True)
    merged = []
    for p in poly:
        if not merged or np.linalg.norm(p - merged[-1]) > 1e-9 * scale:
            merged.append(p)
    if len(merged) > 1 and np.linalg.norm(merged[0] - merged[-1]) <= 1e-9 * scale:
        merged.pop()
    V = np.array(merged)
    if len(V) >= 3:
        c = V.mean(axis=0)
        V = V[np.argsort(np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0]), kind="stable")]
    diam = max((np.linalg.norm(a - b) for a in V for b in V), default=0.0)
    return Polygon(V, empty=False, degenerate=bool(diam <= 1e-8 * scale))
