"""Jump-adapted Euler simulation of dX = b(X) dt + dZ and the generator L."""
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import levy as lv
from .errors import ConstantsInvalid, NumericBlowup, QuadratureFailure
from .rng import PATH, Streams, as_streams, stream

OVERFLOW_GUARD = 1e12


@dataclass
class DriftConstants:
    """Declared regularity constants; ``None`` means not declared."""
    K1: Optional[float] = None
    K2: Optional[float] = None
    K3: Optional[float] = None
    l0: Optional[float] = None
    K1b1: Optional[float] = None
    K2b1: Optional[float] = None
    rb1: Optional[float] = None
    Kb2: Optional[float] = None
    B0: Optional[float] = None
    lambda_dissip: Optional[float] = None
    C0_dissip: Optional[float] = None


def _wrap(f, dim):
    if f is None:
        return None

    def g(x):
        return np.asarray(f(x), dtype=float).reshape(x.shape[0], dim)
    return g


@dataclass
class DriftSpec:
    """Distribution-free drift ``b`` or mean-field pair ``(b1, b2)``.

    Drift callables act row-wise on ``(n, dim)`` arrays.  ``b2_matrix`` declares
    ``b2(u) = A u`` and enables an O(n) interaction.
    """
    b: Optional[Callable] = None
    b1: Optional[Callable] = None
    b2: Optional[Callable] = None
    dim: int = 1
    constants: DriftConstants = field(default_factory=DriftConstants)
    b2_matrix: Optional[np.ndarray] = None
    validate: bool = True
    n_validation: int = 10_000
    validation_radius: float = 10.0
    name: str = ""

    def __post_init__(self):
        if (self.b is None) == (self.b1 is None):
            raise ValueError("give either b (distribution-free) or b1 (mean-field)")
        if self.b2_matrix is not None:
            A = np.atleast_2d(np.asarray(self.b2_matrix, dtype=float))
            self.b2_matrix = A
            if self.b2 is None:
                self.b2 = lambda u: u @ A.T
        if self.is_mean_field and self.b2 is None:
            self.b2 = lambda u: np.zeros_like(u)
        if self.is_mean_field:
            z = np.asarray(self.b2(np.zeros((1, self.dim))), dtype=float)
            if np.any(z != 0.0):
                raise ConstantsInvalid("b2(0) must vanish exactly")
        if self.validate:
            validate_constants(self)

    @property
    def is_mean_field(self):
        return self.b1 is not None

    @property
    def kind(self):
        return "mean_field" if self.is_mean_field else "distribution_free"

    @property
    def drift(self):
        """The callable used between interaction updates (b, or b1)."""
        return _wrap(self.b if self.b is not None else self.b1, self.dim)

    @property
    def interaction_kernel(self):
        return _wrap(self.b2, self.dim)


def _inner(a, b):
    return np.sum(a * b, axis=1)


def _check(ok, what, x, y, lhs, rhs):
    bad = np.flatnonzero(~ok)
    if bad.size:
        i = bad[0]
        raise ConstantsInvalid(f"declared {what} fails at x={x[i]}, y={y[i]}: {lhs[i]:.6g} > {rhs[i]:.6g}")


def validate_constants(spec, seed=0):
    """Spot-check every declared inequality on random point pairs."""
    c = spec.constants
    d = spec.dim
    scale = max([spec.validation_radius] + [4 * v for v in (c.l0, c.rb1) if v])
    rng = stream(seed, 99)
    n = spec.n_validation
    x = rng.uniform(-scale, scale, (n, d))
    sep = np.exp(rng.uniform(math.log(1e-3), math.log(scale), n))
    dirs = rng.standard_normal((n, d))
    dirs /= lv.norms(dirs)[:, None]
    y = np.where((np.arange(n) % 2 == 0)[:, None], x + sep[:, None] * dirs, rng.uniform(-scale, scale, (n, d)))
    r = lv.norms(x - y)
    tol = 1e-9

    def onesided(b, K1, K2, l0, label):
        lhs = _inner(b(x) - b(y), x - y)
        if K2 is not None and l0 is not None:
            rhs = np.where(r <= l0, (K1 or 0.0) * r * r, -K2 * r * r)
        else:
            rhs = K1 * r * r
        _check(lhs <= rhs + tol * (1 + np.abs(lhs)), label, x, y, lhs, rhs)

    base = spec.drift
    if not spec.is_mean_field:
        if c.K2 is not None and c.l0 is not None or c.K1 is not None:
            onesided(base, c.K1, c.K2, c.l0, "(K1, K2, l0)")
    else:
        if c.K2b1 is not None and c.rb1 is not None:
            onesided(base, c.K1b1, c.K2b1, c.rb1, "(K1b1, K2b1, rb1)")
        if c.K1 is not None:
            onesided(base, c.K1, None, None, "K1")
        b2 = spec.interaction_kernel
        if c.Kb2 is not None:
            lhs = lv.norms(b2(x) - b2(y))
            rhs = c.Kb2 * r
            _check(lhs <= rhs + tol * (1 + lhs), "Kb2", x, y, lhs, rhs)
        if c.B0 is not None:
            lhs = lv.norms(b2(x - y))
            rhs = c.B0 * (1 + lv.norms(x) + lv.norms(y))
            _check(lhs <= rhs + tol * (1 + lhs), "B0", x, y, lhs, rhs)
    if c.lambda_dissip is not None:
        lhs = _inner(base(x), x)
        rhs = -c.lambda_dissip * lv.norms(x) ** 2 + (c.C0_dissip or 0.0)
        _check(lhs <= rhs + tol * (1 + np.abs(lhs)), "(lambda_dissip, C0_dissip)", x, x, lhs, rhs)


# ---------------------------------------------------------------------------
# engine


def time_grid(T, dt):
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    K = max(1, int(math.ceil(T / dt - 1e-9)))
    g = np.arange(K + 1) * dt
    g[-1] = T
    return g


class Schedule:
    """Jumps of an ensemble grouped by (grid step, rank within the step)."""

    def __init__(self, grid, jumps_list, marks_list=None):
        K = grid.size - 1
        m = len(jumps_list)
        counts = np.array([len(j) for j in jumps_list], dtype=np.int64)
        self.K = K
        N = int(counts.sum())
        self.N = N
        if N == 0:
            self.R = 0
            return
        path = np.repeat(np.arange(m), counts)
        t = np.concatenate([j.times for j in jumps_list])
        z = np.concatenate([j.sizes for j in jumps_list])
        step = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, K - 1)
        key = path.astype(np.int64) * K + step
        new = np.ones(N, dtype=bool)
        new[1:] = key[1:] != key[:-1]
        first = np.maximum.accumulate(np.where(new, np.arange(N), 0))
        rank = np.arange(N) - first
        R = int(rank.max()) + 1
        order = np.lexsort((path, rank, step))
        slot = step[order] * R + rank[order]
        self.R = R
        self.bounds = np.searchsorted(slot, np.arange(K * R + 1))
        self.path = path[order]
        self.t = t[order]
        self.z = z[order]
        self.marks = None if marks_list is None else np.concatenate(marks_list)[order]

    def rounds(self, k):
        """Index slices of the jumps in grid step ``k``, one per rank."""
        if self.R == 0:
            return
        base = k * self.R
        for r in range(self.R):
            lo, hi = self.bounds[base + r], self.bounds[base + r + 1]
            if lo == hi:
                return
            yield slice(lo, hi)


def _guard(X, t):
    if not np.all(np.isfinite(X)) or np.max(np.abs(X), initial=0.0) > OVERFLOW_GUARD:
        raise NumericBlowup(t)


def run_euler(drift, x0, sched, comp, grid, extra=None, record=None, events=False):
    """Jump-adapted Euler for an ensemble.

    ``drift`` maps (n, d) -> (n, d); ``extra(k, X)`` is an additional drift frozen
    over grid step ``k``.  Returns the states at grid indices ``record`` with
    shape (len(record), m, d), plus the event list of path 0 when ``events``.
    """
    X = np.array(x0, dtype=float)
    m, d = X.shape
    tcur = np.zeros(m)
    record = np.arange(grid.size) if record is None else np.asarray(record)
    want = np.zeros(grid.size, dtype=bool)
    want[record] = True
    out = np.empty((record.size, m, d))
    pos = 0
    if want[0]:
        out[pos] = X
        pos += 1
    ev_t, ev_x = ([0.0], [X[0].copy()]) if events else (None, None)
    zero = np.zeros((m, d))
    for k in range(sched.K):
        ex = extra(k, X) if extra is not None else zero
        for sl in sched.rounds(k):
            p = sched.path[sl]
            tj = sched.t[sl]
            xp = X[p]
            xp = xp + (drift(xp) + ex[p] + comp) * (tj - tcur[p])[:, None]
            xp = xp + sched.z[sl]
            X[p] = xp
            tcur[p] = tj
            if events:
                ev_t.append(float(tj[0]))
                ev_x.append(xp[0].copy())
        X = X + (drift(X) + ex + comp) * (grid[k + 1] - tcur)[:, None]
        tcur[:] = grid[k + 1]
        _guard(X, grid[k + 1])
        if events:
            if ev_t[-1] == grid[k + 1]:
                ev_x[-1] = X[0].copy()
            else:
                ev_t.append(float(grid[k + 1]))
                ev_x.append(X[0].copy())
        if want[k + 1]:
            out[pos] = X
            pos += 1
    if events:
        return out, (np.array(ev_t), np.array(ev_x))
    return out


# ---------------------------------------------------------------------------
# public simulation API


@dataclass
class Path:
    times: np.ndarray
    states: np.ndarray
    seed: dict = field(default_factory=dict)


@dataclass
class PathEnsemble:
    times: np.ndarray
    states: np.ndarray  # (n_times, n_paths, d)
    seed: dict = field(default_factory=dict)

    def at(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        return self.states[i]


def _x0_rows(x0, m, d):
    x = np.asarray(x0, dtype=float)
    if x.ndim <= 1 and x.size == d:
        return np.broadcast_to(x.reshape(1, d), (m, d)).copy()
    return x.reshape(m, d).copy()


def simulate(drift, levy, cfg, x0, T, dt, rng, record_events=True):
    """Simulate one path; ``rng`` is a numpy Generator (the path's jump stream)."""
    if drift.is_mean_field:
        raise ValueError("simulate needs a distribution-free drift")
    jumps, comp = lv.sample_jumps(levy, cfg, T, rng)
    grid = time_grid(T, dt)
    x = _x0_rows(x0, 1, levy.dim)
    sched = Schedule(grid, [jumps])
    if record_events:
        _, (t, xs) = run_euler(drift.drift, x, sched, comp, grid, record=[0], events=True)
        return Path(t, xs, {})
    st = run_euler(drift.drift, x, sched, comp, grid)
    return Path(grid, st[:, 0, :], {})


def ensemble_jumps(levy, cfg, T, streams, indices):
    out = []
    comp = None
    for i in indices:
        j, comp = lv.sample_jumps(levy, cfg, T, streams.get(int(i)))
        out.append(j)
    if comp is None:
        comp = lv.compensator_drift(levy, cfg)
    return out, comp


def simulate_ensemble(drift, levy, cfg, x0, T, dt, n_paths, rng, record_times=None, chunk=4096):
    """``n_paths`` independent paths; path ``i`` uses stream ``i`` of ``rng``."""
    streams = as_streams(rng, PATH)
    d = levy.dim
    X0 = _x0_rows(x0, n_paths, d)
    grid = time_grid(T, dt)
    rec = _record_indices(grid, record_times)
    states = np.empty((rec.size, n_paths, d))
    for lo in range(0, n_paths, chunk):
        hi = min(n_paths, lo + chunk)
        jl, comp = ensemble_jumps(levy, cfg, T, streams, range(lo, hi))
        states[:, lo:hi] = run_euler(drift.drift, X0[lo:hi], Schedule(grid, jl), comp, grid, record=rec)
    return PathEnsemble(grid[rec], states, {"seed": streams.seed, "prefix": streams.prefix})


def _record_indices(grid, record_times):
    if record_times is None:
        return np.arange(grid.size)
    idx = [int(np.argmin(np.abs(grid - t))) for t in np.atleast_1d(record_times)]
    for t, i in zip(np.atleast_1d(record_times), idx):
        if abs(grid[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"record time {t} is not on the dt grid")
    return np.array(idx)


# ---------------------------------------------------------------------------
# generator


def _call_scalar(f, pts):
    return np.asarray(f(pts), dtype=float).reshape(pts.shape[0])


def _hessian_fd(grad_f, x, h=1e-5):
    d = x.size
    H = np.empty((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        H[:, i] = (np.asarray(grad_f((x + e)[None, :])).reshape(d) - np.asarray(grad_f((x - e)[None, :])).reshape(d)) / (2 * h)
    return 0.5 * (H + H.T)


def generator_apply(drift, levy, f, grad_f, x, quadrature=None, hess_f=None, taylor_radius=1e-4,
                    n_directions=256):
    """Lf(x) with a quadrature error estimate, returned as ``(value, abserr)``.

    Jumps smaller than ``taylor_radius`` enter through the second-order Taylor
    term, which keeps the integrand regular at the origin.
    """
    quadrature = quadrature or lv.QuadratureConfig()
    d = levy.dim
    x = np.asarray(x, dtype=float).reshape(d)
    fx = float(_call_scalar(f, x[None, :])[0])
    g = np.asarray(grad_f(x[None, :]), dtype=float).reshape(d)
    H = np.asarray(hess_f(x[None, :]), dtype=float).reshape(d, d) if hess_f is not None else _hessian_fd(grad_f, x)
    b = drift.drift(x[None, :])[0]
    eta = taylor_radius
    # Taylor part on |z| < eta: 0.5 tr(H) * integral |z|^2 / d for isotropic parts; exact in 1D
    small = 0.0
    for c in levy.components:
        m2 = c.moment(2.0, 0.0, eta)
        if m2 > 0:
            small += 0.5 * np.trace(H) / d * m2
    val, err = small, 0.0
    if d == 1:
        for c in levy.components:
            v, e = _jump_integral_1d(c, f, fx, g[0], x[0], eta, quadrature.epsrel)
            val += v
            err += e
    else:
        for c in levy.components:
            v, e = _jump_integral_nd(c, f, fx, g, x, eta, n_directions)
            val += v
            err += e
    return val + float(b @ g), err


def _jump_integral_1d(c, f, fx, g, x, eta, epsrel):
    def integrand(z):
        pts = np.array([[x + z], [x - z]])
        fz = _call_scalar(f, pts)
        q = c.density(np.array([[z], [-z]]))
        comp = g * z if z <= 1.0 else 0.0
        return (fz[0] - fx - comp) * q[0] + (fz[1] - fx + comp) * q[1]

    lo = max(eta, c.r_min)
    hi = c.r_max if getattr(c, "support_radius", None) is None else min(c.r_max, c.support_radius)
    if lo >= hi:
        return 0.0, 0.0
    cuts = _cuts(lo, hi)
    # the symmetric difference loses about eps |f| per evaluation; ask for no more than that
    noise = 8.0 * np.finfo(float).eps * max(1.0, abs(fx)) * c.mass(lo, hi)
    tol = max(1e-12, noise)
    total, err = 0.0, noise
    for a, b in zip(cuts[:-1], cuts[1:]):
        v, e = lv._quad(integrand, a, b, epsrel, epsabs=tol)
        total += v
        err += e
    if not math.isfinite(hi):
        # oscillating f makes the far tail slow; judge it against the whole integral
        v, e = lv._quad(integrand, cuts[-1], math.inf, epsrel, epsabs=max(tol, epsrel * abs(total)), limit=2000)
        total += v
        err += e
    return total, err


TAIL_CUT = 1e4


def _cuts(lo, hi):
    top = min(hi, 1.0)
    pts = {lo, hi}
    if lo < top:
        pts.update(np.geomspace(lo, top, 9).tolist())
    if hi > 1.0 and lo < TAIL_CUT:
        pts.update(np.geomspace(max(lo, 1.0), min(hi, TAIL_CUT), 29).tolist())
    return sorted(p for p in pts if math.isfinite(p))


def _jump_integral_nd(c, f, fx, g, x, eta, n_directions):
    d = x.size
    if isinstance(c, lv.CompoundPoisson) and not c.isotropic:
        z = c.sample_window(200_000, stream(0, 98))
        r = lv.norms(z)
        keep = (r >= max(eta, c.r_min)) & (r <= c.r_max)
        vals = _call_scalar(f, x[None, :] + z) - fx - (z @ g) * (r <= 1.0)
        vals = np.where(keep, vals, 0.0)
        return c.intensity * float(vals.mean()), c.intensity * float(vals.std() / math.sqrt(vals.size))
    if not c.isotropic:
        raise QuadratureFailure("multivariate generator needs isotropic or compound Poisson components")
    rng = stream(0, 97)
    u = rng.standard_normal((n_directions // 2, d))
    u /= lv.norms(u)[:, None]
    u = np.concatenate([u, -u])  # antipodal pairs cancel the linear term exactly
    area = lv.sphere_area(d)

    def radial(r):
        vals = _call_scalar(f, x[None, :] + r * u) - fx
        return float(c.profile(r)[0]) * r ** (d - 1) * area * float(vals.mean())

    lo = max(eta, c.r_min)
    hi = c.r_max if getattr(c, "support_radius", None) is None else min(c.r_max, c.support_radius)
    if lo >= hi:
        return 0.0, 0.0
    noise = 8.0 * np.finfo(float).eps * max(1.0, abs(fx)) * c.mass(lo, hi)
    tol = max(1e-12, noise)
    total, err = 0.0, noise
    cuts = _cuts(lo, hi)
    for a, b in zip(cuts[:-1], cuts[1:]):
        v, e = lv._quad(radial, a, b, 1e-6, epsabs=tol)
        total += v
        err += e
    if not math.isfinite(hi):
        v, e = lv._quad(radial, cuts[-1], math.inf, 1e-6, epsabs=max(tol, 1e-6 * abs(total)), limit=2000)
        total += v
        err += e
    return total, err


def dynkin_residual(drift, levy, cfg, f, x, h, n_samples, rng):
    """Monte Carlo estimate of (E f(X_h) - f(x)) / h and its standard error."""
    if h <= 0:
        raise ValueError("h must be positive")
    ens = simulate_ensemble(drift, levy, cfg, x, h, h, n_samples, rng, record_times=[h])
    xr = np.asarray(x, dtype=float).reshape(1, levy.dim)
    diff = (_call_scalar(f, ens.states[-1]) - _call_scalar(f, xr)[0]) / h
    return float(np.mean(diff)), float(np.std(diff, ddof=1) / math.sqrt(n_samples))
