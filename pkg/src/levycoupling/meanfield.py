"""Mean-field particle systems, Picard law-iteration and the propagation-of-chaos experiment."""
import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from . import levy as lv
from .coupling import CouplingConfig, coupled_spec, run_coupled
from .errors import NonConvergence
from .metrics import w1_empirical
from .rng import COUPLED, INITIAL, LAW, PARTICLE, REPLICATE, as_streams
from .sde import Schedule, _record_indices, ensemble_jumps, run_euler, time_grid


def gaussian_initial(mean=0.0, sd=1.0, dim=1):
    def sample(n, rng):
        return mean + sd * rng.standard_normal((n, dim))
    return sample


def point_initial(x0, dim=1):
    x0 = np.asarray(x0, dtype=float).reshape(1, dim)

    def sample(n, rng):
        return np.repeat(x0, n, axis=0)
    return sample


@dataclass
class ParticleSystemConfig:
    n: int
    drift: object
    levy: lv.LevyMeasureSpec
    jump: lv.JumpSimConfig
    dt: float
    T: float
    initial: Callable
    record_times: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("the particle system needs n >= 2")
        if not self.drift.is_mean_field:
            raise ValueError("the particle system needs a mean-field drift (b1, b2)")


@dataclass
class Ensemble:
    times: np.ndarray
    states: np.ndarray  # (n_times, n, d)
    seed: dict = field(default_factory=dict)


def interaction_pairs(drift, X):
    """Tensor P[i, j] = b2(X^i - X^j), shape (n, n, d)."""
    n, d = X.shape
    b2 = drift.interaction_kernel
    diff = (X[:, None, :] - X[None, :, :]).reshape(n * n, d)
    return b2(diff).reshape(n, n, d)


def interaction(drift, X, cloud=None, chunk=256):
    """(1/N) sum_j b2(x^i - y^j) over ``cloud`` (default: X itself), O(n) for linear b2."""
    Y = X if cloud is None else cloud
    if drift.b2_matrix is not None:
        return (X - Y.mean(axis=0)) @ drift.b2_matrix.T
    b2 = drift.interaction_kernel
    n, d = X.shape
    out = np.empty((n, d))
    for lo in range(0, n, chunk):
        xi = X[lo:lo + chunk]
        diff = (xi[:, None, :] - Y[None, :, :]).reshape(-1, d)
        out[lo:lo + chunk] = b2(diff).reshape(xi.shape[0], Y.shape[0], d).mean(axis=1)
    return out


def simulate_particles(cfg, rng, jumps=None):
    """Euler scheme for the n-particle system; particle i uses jump stream i."""
    streams = as_streams(rng, PARTICLE)
    d = cfg.levy.dim
    grid = time_grid(cfg.T, cfg.dt)
    rec = _record_indices(grid, cfg.record_times)
    X0 = np.asarray(cfg.initial(cfg.n, streams.child(INITIAL).get(0)), dtype=float).reshape(cfg.n, d)
    if jumps is None:
        jumps = ensemble_jumps(cfg.levy, cfg.jump, cfg.T, streams, range(cfg.n))
    jl, comp = jumps
    drift = cfg.drift

    def extra(k, X):
        return interaction(drift, X)
    states = run_euler(drift.drift, X0, Schedule(grid, jl), comp, grid, extra=extra, record=rec)
    return Ensemble(grid[rec], states, {"seed": streams.seed, "prefix": streams.prefix, "particle_stream": "index"})


# ---------------------------------------------------------------------------
# McKean-Vlasov reference law


@dataclass
class LawFlow:
    """Time flow of empirical clouds, piecewise constant between grid points."""
    times: np.ndarray
    clouds: np.ndarray  # (n_times, N, d)
    successive_w1: list = field(default_factory=list)

    def at(self, t):
        i = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        return self.clouds[max(i, 0)]

    def index_map(self, grid):
        return np.clip(np.searchsorted(self.times, grid + 1e-12, side="right") - 1, 0, self.times.size - 1)


def _frozen_extra(drift, flow, grid):
    idx = flow.index_map(grid)

    def extra(k, X):
        return interaction(drift, X, flow.clouds[idx[k]])
    return extra


def simulate_mckv_picard(drift, levy, cfg, mu0, T, dt, picard_iters, n_law_samples, rng):
    """Picard iteration on the law flow; each iteration reuses the same noise."""
    if picard_iters < 1:
        raise ValueError("picard_iters must be >= 1")
    streams = as_streams(rng, LAW)
    d = levy.dim
    grid = time_grid(T, dt)
    X0 = np.asarray(mu0(n_law_samples, streams.child(INITIAL).get(0)), dtype=float).reshape(n_law_samples, d)
    jl, comp = ensemble_jumps(levy, cfg, T, streams, range(n_law_samples))
    sched = Schedule(grid, jl)
    flow = LawFlow(grid, np.broadcast_to(X0, (grid.size,) + X0.shape))
    w1s = []
    for it in range(picard_iters):
        states = run_euler(drift.drift, X0, sched, comp, grid, extra=_frozen_extra(drift, flow, grid))
        if it > 0:
            w1s.append(w1_empirical(states[-1], flow.clouds[-1]))
        flow = LawFlow(grid, states)
    flow.successive_w1 = w1s
    if len(w1s) >= 2 and w1s[-1] > 0 and not w1s[-1] < w1s[-2]:
        warnings.warn(f"Picard W1 changes did not decrease: {w1s}", NonConvergence)
    return flow


# ---------------------------------------------------------------------------
# propagation of chaos


@dataclass
class PocRun:
    times: np.ndarray
    psi_error: np.ndarray  # (1/n) sum_i psi(|X^i - Xbar^i|) per recorded time
    w1: np.ndarray  # W1(particle cloud, reference cloud) per recorded time


def coupled_poc_run(drift, levy, cfg, n, T, dt, reference, rng, mu0, psi=None, kappa=1.0,
                    record_times=None, reference_cloud=None):
    """n particles coupled with n copies of the frozen-flow McKean-Vlasov SDE."""
    streams = as_streams(rng, COUPLED)
    d = levy.dim
    grid = time_grid(T, dt)
    rec = _record_indices(grid, record_times)
    X0 = np.asarray(mu0(n, streams.child(INITIAL).get(0)), dtype=float).reshape(n, d)
    jl = []
    ml = []
    for i in range(n):
        g = streams.get(i)
        j, comp = lv.sample_jumps(levy, cfg, T, g)
        jl.append(j)
        ml.append(g.random(len(j)))
    comp = lv.compensator_drift(levy, cfg)
    ccfg = CouplingConfig(kappa=kappa)
    spec_f = lv.truncated(levy, cfg.epsilon_cutoff)
    spec_c = lv.truncated(coupled_spec(levy, ccfg), cfg.epsilon_cutoff)
    xs, ys, _, _ = run_coupled(drift.drift, drift.drift, X0, X0.copy(), Schedule(grid, jl, ml), comp, grid, ccfg,
                               spec_c, spec_f, extra_x=lambda k, X: interaction(drift, X),
                               extra_y=_frozen_extra(drift, reference, grid), record=rec)
    dist = lv.norms((xs - ys).reshape(-1, d)).reshape(xs.shape[:2])
    err = (psi(dist) if psi is not None else dist).mean(axis=1)
    ref = reference if reference_cloud is None else reference_cloud
    w1 = np.array([w1_empirical(xs[i], ref.at(t)) for i, t in enumerate(grid[rec])])
    return PocRun(grid[rec], err, w1)


@dataclass
class PocCurve:
    n: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    slope: Optional[float]
    slope_se: Optional[float]
    r_squared: Optional[float]
    records: list = field(default_factory=list)  # (n, replicate, t, w1_error)


def poc_replicate(drift, levy, cfg, n, T, dt, reference, streams, rep, mu0, record_times):
    pcfg = ParticleSystemConfig(n, drift, levy, cfg, dt, T, mu0, record_times)
    ens = simulate_particles(pcfg, streams.child(REPLICATE, n, rep))
    return [(n, rep, float(t), w1_empirical(ens.states[i], reference.at(t))) for i, t in enumerate(ens.times)]


def poc_error_curve(drift, levy, cfg, n_list, T, dt, reference, replicates, rng, mu0, record_times=None,
                    workers=1):
    """Mean W1(particle cloud at T, reference cloud at T) over replicates for each n, with log-log slope."""
    n_list = list(n_list)
    if any(n < 2 for n in n_list) or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing with entries >= 2")
    streams = as_streams(rng, PARTICLE)
    rt = [T] if record_times is None else sorted(set(np.atleast_1d(record_times).tolist()) | {T})
    jobs = [(n, r) for n in n_list for r in range(replicates)]

    def one(job):
        return poc_replicate(drift, levy, cfg, job[0], T, dt, reference, streams, job[1], mu0, rt)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    records = [row for res in results for row in res]
    means, ses = [], []
    for n in n_list:
        v = np.array([r[3] for r in records if r[0] == n and abs(r[2] - T) < 1e-12])
        means.append(v.mean())
        ses.append(v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else float("nan"))
    means, ses = np.array(means), np.array(ses)
    slope = slope_se = r2 = None
    if len(n_list) >= 2:
        fit = stats.linregress(np.log(n_list), np.log(means))
        slope, slope_se, r2 = float(fit.slope), float(fit.stderr), float(fit.rvalue ** 2)
    return PocCurve(np.array(n_list), means, ses, slope, slope_se, r2, records)


def write_poc_csv(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "replicate", "t", "w1_error"])
        for n, rep, t, e in curve.records:
            w.writerow([n, rep, repr(t), repr(e)])
