"""Empirical W1, coupling upper bounds for W_Phi and TV, exponential decay fits."""
import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize, stats

from .errors import DimensionMismatch, NonPositiveValues, SizeMismatch

EXACT_MAX_N = 4096


@dataclass
class EmpiricalMeasure:
    points: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        self.points = p[:, None] if p.ndim == 1 else p
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.points.shape[0],) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("weights must be nonnegative and sum to 1")
            self.weights = w

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def uniform(self):
        return self.weights is None or np.allclose(self.weights, 1.0 / self.n, rtol=0, atol=1e-15)

    def w(self):
        return np.full(self.n, 1.0 / self.n) if self.weights is None else self.weights


def _as_measure(m):
    return m if isinstance(m, EmpiricalMeasure) else EmpiricalMeasure(m)


def _w1_quantile(x, wx, y, wy):
    """Integral of |F^-1 - G^-1| for weighted 1D samples."""
    ix, iy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    x, wx, y, wy = x[ix], wx[ix], y[iy], wy[iy]
    cx, cy = np.cumsum(wx), np.cumsum(wy)
    cx[-1] = cy[-1] = 1.0
    u = np.union1d(cx, cy)
    lo = np.concatenate([[0.0], u[:-1]])
    mid = 0.5 * (lo + u)
    qx = x[np.minimum(np.searchsorted(cx, mid), x.size - 1)]
    qy = y[np.minimum(np.searchsorted(cy, mid), y.size - 1)]
    return float(np.sum((u - lo) * np.abs(qx - qy)))


def w1_empirical(mu1, mu2, exact_max_n=EXACT_MAX_N):
    """W1 between empirical measures: quantile formula in 1D, exact assignment otherwise."""
    a, b = _as_measure(mu1), _as_measure(mu2)
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimensions {a.dim} and {b.dim}")
    if a.dim == 1:
        if a.uniform and b.uniform and a.n == b.n:
            return float(np.mean(np.abs(np.sort(a.points[:, 0]) - np.sort(b.points[:, 0]))))
        return _w1_quantile(a.points[:, 0], a.w(), b.points[:, 0], b.w())
    return w1_assignment(a.points, b.points, exact_max_n)


def w1_assignment(x, y, exact_max_n=EXACT_MAX_N):
    """Exact W1 between equal-size uniform clouds by min-cost assignment (any dimension)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    y = y[:, None] if y.ndim == 1 else y
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch(f"dimensions {x.shape[1]} and {y.shape[1]}")
    if x.shape[0] != y.shape[0] or x.shape[0] > exact_max_n:
        raise SizeMismatch(f"exact assignment needs equal sizes <= {exact_max_n}, got {x.shape[0]} and {y.shape[0]}")
    cost = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2)
    r, c = optimize.linear_sum_assignment(cost)
    return float(cost[r, c].mean())


def w1_bootstrap_scale(cloud, n_rep=50, rng=0):
    """MC-error scale: mean W1 between two independent full-size resamples of a cloud."""
    cloud = np.asarray(cloud, dtype=float)
    cloud = cloud[:, None] if cloud.ndim == 1 else cloud
    g = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    n = cloud.shape[0]
    vals = np.empty(n_rep)
    for i in range(n_rep):
        a = cloud[g.integers(0, n, n)]
        b = cloud[g.integers(0, n, n)]
        vals[i] = w1_empirical(a, b)
    return float(vals.mean())


@dataclass
class CouplingBound:
    value: float
    se: float
    note: str = "coupling upper bound, not exact W_Phi"


def w_phi_coupled(Phi, x, y):
    """Mean of Phi over coupled pairs: an upper bound for W_Phi of the marginals."""
    v = np.asarray(Phi(np.asarray(x, float), np.asarray(y, float)), dtype=float).reshape(-1)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return CouplingBound(float(v.mean()), se)


def tv_upper_from_coupling(survival):
    """2 P(T > t): bound on ||P_t(x, .) - P_t(y, .)||_var in the mass-2 convention."""
    return 2.0 * np.asarray(survival, dtype=float)


def weighted_variation_bound(V, x, y, coupled):
    """E[(V(X_t) + V(Y_t)) 1{T > t}] with standard error."""
    v = (V(x) + V(y)) * (~np.asarray(coupled, dtype=bool))
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class DecayFit:
    rate: float
    intercept: float
    r_squared: float
    rate_se: float
    n_points: int


def decay_fit(times, values, burn_in=0.2):
    """OLS of log(value) on t after discarding the first ``burn_in`` fraction of points."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    start = int(math.floor(burn_in * t.size))
    t, v = t[start:], v[start:]
    bad = np.nonzero(~(v > 0))[0]
    if bad.size:
        raise NonPositiveValues((bad + start).tolist())
    if t.size < 4:
        raise ValueError("decay_fit needs at least 4 points after burn-in")
    y = np.log(v)
    if np.ptp(y) == 0:
        return DecayFit(0.0, float(y[0]), 1.0, 0.0, t.size)
    res = stats.linregress(t, y)
    return DecayFit(float(-res.slope), float(res.intercept), float(res.rvalue ** 2), float(res.stderr), t.size)


def write_fits_csv(path, fits):
    """``fits``: mapping quantity -> DecayFit."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "rate", "se", "r2", "n_points"])
        for q, f in fits.items():
            w.writerow([q, repr(f.rate), repr(f.rate_se), repr(f.r_squared), f.n_points])
