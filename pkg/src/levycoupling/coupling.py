"""Refined basic, synchronous and delta-mixture couplings of two jump SDEs."""
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import levy as lv
from .errors import DensityRequired
from .rng import COUPLED, as_streams
from .sde import Schedule, _guard, _record_indices, _x0_rows, time_grid


def smootherstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


@dataclass(frozen=True)
class CouplingConfig:
    """kappa: maximal shift; delta: mixture scale (0 = pure refined basic coupling).

    ``phi`` is the cutoff on [delta/2, delta]; by default the C^2 polynomial
    6t^5 - 15t^4 + 10t^3 in t = (r - delta/2)/(delta/2).  ``mixture='thinned'``
    applies the refined move with probability phi, ``'scaled'`` multiplies the
    shift by phi.  ``coupled_submeasure`` lists component indices that are
    coupled; the remaining components move both marginals together.
    """
    kappa: float = 1.0
    delta: float = 0.0
    phi: Optional[Callable] = None
    coupled_submeasure: Optional[Sequence[int]] = None
    mixture: str = "thinned"

    def __post_init__(self):
        if self.kappa <= 0 or self.delta < 0:
            raise ValueError("kappa must be positive and delta nonnegative")
        if self.mixture not in ("thinned", "scaled"):
            raise ValueError("mixture must be 'thinned' or 'scaled'")
        if self.delta > 0:
            r = np.linspace(0.0, 2.0 * self.delta, 2001)
            v = self.phi_delta(r)
            ok = (np.all(v[r <= self.delta / 2] == 0) and np.all(v[r >= self.delta] == 1)
                  and np.all(np.diff(v) >= -1e-15) and v.min() >= 0 and v.max() <= 1)
            if not ok:
                raise ValueError("phi must vanish on [0, delta/2], equal 1 beyond delta and be nondecreasing")

    def phi_delta(self, r):
        r = np.asarray(r, dtype=float)
        if self.delta == 0:
            return np.ones_like(r)
        if self.phi is not None:
            return np.asarray(self.phi(r), dtype=float)
        h = self.delta / 2.0
        return smootherstep((r - h) / h)


def coupled_spec(levy, ccfg):
    if ccfg.coupled_submeasure is None:
        comps = levy.components
    else:
        comps = tuple(levy.components[i] for i in ccfg.coupled_submeasure)
    if not all(c.has_density for c in comps):
        raise DensityRequired("the coupled sub-measure needs a density")
    return lv.LevyMeasureSpec(comps, levy.dim)


def kappa_cut(U, kappa):
    """(U)_kappa = min(1, kappa/|U|) U, row-wise; also returns |U|."""
    n = lv.norms(U)
    s = np.where(n > kappa, kappa / np.where(n > 0, n, 1.0), 1.0)
    return U * s[:, None], n


def draw_marks(u, r1, r2, phi, mixture):
    if mixture == "thinned":
        r1, r2 = r1 * phi, r2 * phi
    return np.where(u <= 0.5 * r1, 1, np.where(u <= 0.5 * (r1 + r2), -1, 0))


def run_coupled(drift_x, drift_y, X0, Y0, sched, comp, grid, ccfg, spec_c, spec_f,
                extra_x=None, extra_y=None, record=None, on_shift=None):
    """Lockstep Euler for coupled pairs sharing the jump stream and marks."""
    X = np.array(X0, dtype=float)
    Y = np.array(Y0, dtype=float)
    m, d = X.shape
    kappa = ccfg.kappa
    tcur = np.zeros(m)
    record = np.arange(grid.size) if record is None else np.asarray(record)
    want = np.zeros(grid.size, dtype=bool)
    want[record] = True
    xs = np.empty((record.size, m, d))
    ys = np.empty((record.size, m, d))
    flags = np.empty((record.size, m), dtype=bool)
    coupled = np.all(X == Y, axis=1)
    ctime = np.where(coupled, 0.0, np.inf)
    pos = 0
    if want[0]:
        xs[0], ys[0], flags[0] = X, Y, coupled
        pos = 1
    zero = np.zeros((m, d))
    for k in range(sched.K):
        ex = extra_x(k, X) if extra_x is not None else zero
        ey = extra_y(k, Y) if extra_y is not None else zero
        for sl in sched.rounds(k):
            p = sched.path[sl]
            tj = sched.t[sl]
            z = sched.z[sl]
            h = (tj - tcur[p])[:, None]
            xp = X[p]
            yp = Y[p]
            xp = xp + (drift_x(xp) + ex[p] + comp) * h
            yp = yp + (drift_y(yp) + ey[p] + comp) * h
            a, nu = kappa_cut(xp - yp, kappa)
            r1 = lv.coupling_ratio(spec_c, spec_f, -a, z)
            r2 = lv.coupling_ratio(spec_c, spec_f, a, z)
            ph = ccfg.phi_delta(nu)
            mk = draw_marks(sched.marks[sl], r1, r2, ph, ccfg.mixture)
            w = mk * (ph if ccfg.mixture == "scaled" else 1.0)
            shift = a * w[:, None]
            xp = xp + z
            yp = yp + z + shift
            coal = (mk == 1) & (nu <= kappa) & (ph == 1.0)
            yp[coal] = xp[coal]
            if on_shift is not None:
                on_shift(shift, mk, nu)
            X[p] = xp
            Y[p] = yp
            tcur[p] = tj
            new = ~coupled[p] & np.all(xp == yp, axis=1)
            if np.any(new):
                coupled[p[new]] = True
                ctime[p[new]] = tj[new]
        dtk = (grid[k + 1] - tcur)[:, None]
        X = X + (drift_x(X) + ex + comp) * dtk
        Y = Y + (drift_y(Y) + ey + comp) * dtk
        tcur[:] = grid[k + 1]
        _guard(X, grid[k + 1])
        _guard(Y, grid[k + 1])
        new = ~coupled & np.all(X == Y, axis=1)
        if np.any(new):
            coupled[new] = True
            ctime[new] = grid[k + 1]
        if want[k + 1]:
            xs[pos], ys[pos], flags[pos] = X, Y, coupled
            pos += 1
    return xs, ys, flags, ctime


@dataclass
class CoupledPath:
    times: np.ndarray
    x_states: np.ndarray
    y_states: np.ndarray
    coupling_time: Optional[float]
    coupled_flag: np.ndarray


@dataclass
class CoupledEnsemble:
    times: np.ndarray
    x: np.ndarray  # (n_times, n_paths, d)
    y: np.ndarray
    flags: np.ndarray  # (n_times, n_paths)
    coupling_times: np.ndarray  # inf when not coupled by the horizon
    dt: float = 0.0
    seed: dict = field(default_factory=dict)

    def path(self, i):
        ct = self.coupling_times[i]
        return CoupledPath(self.times, self.x[:, i], self.y[:, i], None if np.isinf(ct) else float(ct),
                           self.flags[:, i])


def _coupled_jumps(levy, cfg, T, streams, indices):
    jl, ml = [], []
    comp = lv.compensator_drift(levy, cfg)
    for i in indices:
        g = streams.get(int(i))
        j, _ = lv.sample_jumps(levy, cfg, T, g)
        jl.append(j)
        ml.append(g.random(len(j)))  # marks drawn after the jumps: X alone reproduces sde.simulate
    return jl, ml, comp


def simulate_coupled_ensemble(drift, levy, cfg, ccfg, x0, y0, T, dt, n_paths, rng,
                              record_times=None, chunk=4096, on_shift=None):
    """``n_paths`` coupled pairs; pair ``i`` uses stream ``i``."""
    if drift.is_mean_field:
        raise ValueError("simulate_coupled needs a distribution-free drift")
    streams = as_streams(rng, COUPLED)
    d = levy.dim
    eps = cfg.epsilon_cutoff
    spec_f = lv.truncated(levy, eps)
    spec_c = lv.truncated(coupled_spec(levy, ccfg), eps)
    X0 = _x0_rows(x0, n_paths, d)
    Y0 = _x0_rows(y0, n_paths, d)
    grid = time_grid(T, dt)
    rec = _record_indices(grid, record_times)
    xs = np.empty((rec.size, n_paths, d))
    ys = np.empty_like(xs)
    fl = np.empty((rec.size, n_paths), dtype=bool)
    ct = np.empty(n_paths)
    b = drift.drift
    for lo in range(0, n_paths, chunk):
        hi = min(n_paths, lo + chunk)
        jl, ml, comp = _coupled_jumps(levy, cfg, T, streams, range(lo, hi))
        sched = Schedule(grid, jl, ml)
        out = run_coupled(b, b, X0[lo:hi], Y0[lo:hi], sched, comp, grid, ccfg, spec_c, spec_f,
                          record=rec, on_shift=on_shift)
        xs[:, lo:hi], ys[:, lo:hi], fl[:, lo:hi], ct[lo:hi] = out
    return CoupledEnsemble(grid[rec], xs, ys, fl, ct, dt, {"seed": streams.seed, "prefix": streams.prefix})


def simulate_coupled(drift, levy, cfg, ccfg, x0, y0, T, dt, rng):
    """One coupled pair; ``rng`` is the pair's numpy Generator."""
    eps = cfg.epsilon_cutoff
    spec_f = lv.truncated(levy, eps)
    spec_c = lv.truncated(coupled_spec(levy, ccfg), eps)
    j, comp = lv.sample_jumps(levy, cfg, T, rng)
    marks = rng.random(len(j))
    grid = time_grid(T, dt)
    d = levy.dim
    b = drift.drift
    xs, ys, fl, ct = run_coupled(b, b, _x0_rows(x0, 1, d), _x0_rows(y0, 1, d), Schedule(grid, [j], [marks]),
                                 comp, grid, ccfg, spec_c, spec_f)
    c = float(ct[0])
    return CoupledPath(grid, xs[:, 0], ys[:, 0], None if math.isinf(c) else c, fl[:, 0])


def coupling_time_survival(ensemble, t_grid):
    """P(T > t) on ``t_grid`` with binomial standard errors.

    ``ensemble`` is a CoupledEnsemble or an array of coupling times.
    """
    ct = ensemble.coupling_times if isinstance(ensemble, CoupledEnsemble) else np.asarray(ensemble, float)
    if ct.size == 0:
        raise ValueError("empty ensemble")
    t = np.asarray(t_grid, dtype=float)
    s = np.mean(ct[None, :] > t[:, None], axis=1)
    return s, np.sqrt(s * (1.0 - s) / ct.size)


# ---------------------------------------------------------------------------
# analytic side


def coupling_psi_generator(psi, levy, ccfg, drift_inner_product, r, conservative=False, direction=None):
    """Coupling generator applied to psi(|x - y|) at distance ``r``.

    The jump part uses the overlap mass at the shift (x - y)_kappa, or J(kappa ^ r)
    when ``conservative``.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    spec_c = coupled_spec(levy, ccfg)
    s = min(ccfg.kappa, r)
    if conservative:
        mass = lv.J(spec_c, s)
    else:
        e = np.zeros(levy.dim)
        if direction is None:
            e[0] = 1.0
        else:
            e = np.asarray(direction, dtype=float) / np.linalg.norm(direction)
        mass = lv.overlap_mass(spec_c, s * e)
    second = float(psi(r + s) + psi(r - s) - 2.0 * psi(r))
    return 0.5 * mass * second + float(psi.d1(r)) / r * drift_inner_product


def contraction_values(psi, lam, K1, K2, l0, levy, ccfg, r_grid):
    """psi'(r)[K1 r 1{r<=l0} - K2 r 1{r>l0}] + J(kappa^r)/2 [second difference] + lam psi(r)."""
    r = np.asarray(r_grid, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r_grid must lie in (0, r_max]")
    spec_c = coupled_spec(levy, ccfg)
    s = np.minimum(ccfg.kappa, r)
    us, inv = np.unique(s, return_inverse=True)
    js = lv.j_profile(spec_c, us)[0][inv]
    drift = psi.d1(r) * np.where(r <= l0, K1 * r, -K2 * r)
    second = psi(r + s) + psi(r - s) - 2.0 * psi(r)
    return drift + 0.5 * js * second + lam * psi(r)


def verify_contraction(psi, lam, K1, K2, l0, levy, ccfg, r_grid):
    """Maximum over ``r_grid`` of the contraction expression (<= 0 certifies rate ``lam``)."""
    return float(np.max(contraction_values(psi, lam, K1, K2, l0, levy, ccfg, r_grid)))


def coupling_dynkin(F, drift, levy, cfg, ccfg, x, y, h, n_samples, rng):
    """Monte Carlo (E F(X_h, Y_h) - F(x, y)) / h with standard error."""
    ens = simulate_coupled_ensemble(drift, levy, cfg, ccfg, x, y, h, h, n_samples, rng, record_times=[h])
    d = levy.dim
    x0 = np.asarray(x, float).reshape(1, d)
    y0 = np.asarray(y, float).reshape(1, d)
    f0 = float(np.asarray(F(x0, y0)).reshape(-1)[0])
    v = (np.asarray(F(ens.x[-1], ens.y[-1]), dtype=float).reshape(-1) - f0) / h
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(n_samples))


def write_coupled_csv(path, ens):
    """CSV rows (path_id, time, x..., y..., coupled_flag)."""
    import csv
    d = ens.x.shape[2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "time"] + [f"x{i}" for i in range(d)] + [f"y{i}" for i in range(d)] + ["coupled_flag"])
        for i in range(ens.x.shape[1]):
            for k, t in enumerate(ens.times):
                w.writerow([i, repr(float(t))] + [repr(float(v)) for v in ens.x[k, i]]
                           + [repr(float(v)) for v in ens.y[k, i]] + [int(ens.flags[k, i])])
