"""Acceptance criteria AC-1 ... AC-11 as callable checks."""
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import coupling as cp
from . import levy as lv
from . import meanfield as mf
from . import metrics as mt
from . import rates as rt
from . import sde
from .benchmarks import MeanFieldLinear, OUStable, SineDrift
from .rng import AUX, Streams, stream


@dataclass
class Criterion:
    name: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        return f"{self.name} {'PASS' if self.passed else 'FAIL'} [{self.seconds:.1f}s] {self.summary}"


def _timed(fn):
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        c = fn(*a, **kw)
        c.seconds = time.perf_counter() - t0
        return c
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def ac1(seed=0):
    """lambda = K2 exactly when l0 = 0 and K3 = 0."""
    errs = {}
    for K2 in (0.1, 1.0, 3.0, 10.0):
        _, rep = rt.thtpw_rates(0.0, K2, 0.0, 0.0)
        errs[K2] = abs(rep["lambda"] - K2)
    worst = max(errs.values())
    return Criterion("AC-1", worst <= 1e-12, f"max |lambda - K2| = {worst:.3e} (tol 1e-12)", {"errors": errs})


def sine_rates(bench=None):
    bench = bench or SineDrift()
    nu = bench.levy()
    sigma = lv.sigma_minorant(nu, bench.kappa, bench.l0)
    psi, rep = rt.thtpw_rates(bench.K1, bench.K2, bench.l0, 0.0, sigma)
    return bench, nu, sigma, psi, rep


def ou_additive_rates(bench=None):
    bench = bench or OUStable()
    nu = bench.levy()
    V = rt.lyapunov_V(1)
    lam, C, info = rt.lyapunov_drift_bound(bench.drift(), 0.0, nu, V)
    psi, rep = rt.additive_rates(bench.drift().constants.K1, nu, bench.kappa, (lam, C), V)
    return psi, rep, (lam, C, info)


@_timed
def ac2(seed=0, n_pairs=10_000):
    """Both psi constructions satisfy the concavity inequalities on random (r, delta)."""
    _, _, _, psi31, rep31 = sine_rates()
    psi22, rep22, _ = ou_additive_rates()
    g = stream(seed, AUX, 2)
    out = {
        "thtpw": rt.psi_properties_check(psi31, rep31["l0"], n_pairs, g),
        "additive": rt.psi_properties_check(psi22, rep22["l0"], n_pairs, g),
    }
    worst = max(max(v) for v in out.values())
    return Criterion("AC-2", worst <= 1e-9, f"max violation = {worst:.3e} (tol 1e-9)", {"violations": out})


def contraction_grid(l0, n=10_000):
    top = 4.0 * l0
    return np.unique(np.concatenate([np.geomspace(top * 1e-8, top, n // 2), np.linspace(top / n, top, n - n // 2)]))


@_timed
def ac3(seed=0):
    """Contraction inequality certified for the sine benchmark; 10x rate must fail."""
    bench, nu, sigma, psi, rep = sine_rates()
    lam0 = rep["lambda0"]
    ccfg = cp.CouplingConfig(kappa=bench.kappa)
    r = contraction_grid(bench.l0)
    m = cp.verify_contraction(psi, lam0, bench.K1, bench.K2, bench.l0, nu, ccfg, r)
    m10 = cp.verify_contraction(psi, 10.0 * lam0, bench.K1, bench.K2, bench.l0, nu, ccfg, r)
    ok = m <= 1e-9 and m10 > 0
    return Criterion("AC-3", ok, f"max = {m:.3e} (tol 1e-9); 10x lambda max = {m10:.3e} (must be > 0); "
                                 f"lambda0 = {lam0:.4g}", {"max": m, "max_10x": m10, "lambda0": lam0,
                                                           "c1": rep["c1"], "sigma": (sigma.c0, sigma.alpha)})


@_timed
def ac4(seed=0, n_paths=5000):
    """Y-marginal of the coupling matches an independent simulation at t = 1."""
    b = OUStable()
    drift, nu, cfg = b.drift(), b.levy(), b.jump_cfg()
    ce = cp.simulate_coupled_ensemble(drift, nu, cfg, cp.CouplingConfig(kappa=b.kappa), 2.0, -2.0, 1.0, b.dt,
                                      n_paths, Streams(seed, 40), record_times=[1.0])
    ind = sde.simulate_ensemble(drift, nu, cfg, -2.0, 1.0, b.dt, n_paths, Streams(seed, 41), record_times=[1.0])
    y, z = ce.y[-1], ind.states[-1]
    w = mt.w1_empirical(y, z)
    scale = mt.w1_bootstrap_scale(np.concatenate([y, z]), n_rep=50, rng=stream(seed, AUX, 4))
    return Criterion("AC-4", w <= 3.0 * scale, f"W1 = {w:.4f} <= 3 x {scale:.4f}", {"w1": w, "scale": scale})


@_timed
def ac5(seed=0, n_paths=10_000):
    """Coupling-time survival decays at least at the additive-distance rate."""
    b = OUStable()
    _, rep, _ = ou_additive_rates(b)
    lam0 = rep["lambda0"]
    ce = cp.simulate_coupled_ensemble(b.drift(), b.levy(), b.jump_cfg(), cp.CouplingConfig(kappa=b.kappa), 2.0, -2.0,
                                      10.0, b.dt, n_paths, Streams(seed, 50), record_times=[10.0])
    tg = np.linspace(0.0, 10.0, 41)
    s, _ = cp.coupling_time_survival(ce, tg)
    tv = mt.tv_upper_from_coupling(s)
    f = mt.decay_fit(tg, tv)
    ok = f.r_squared >= 0.9 and f.rate >= lam0 - 2.0 * f.rate_se
    return Criterion("AC-5", ok, f"rate = {f.rate:.4f} +- {f.rate_se:.4f}, r2 = {f.r_squared:.4f}, "
                                 f"lambda0 = {lam0:.3e}", {"fit": f, "lambda0": lam0, "survival": s})


@_timed
def ac6(seed=0, n_paths=10_000):
    """W1 between the laws started at 5 and -5 decays at least at the contraction rate."""
    b = OUStable()
    drift, nu, cfg = b.drift(), b.levy(), b.jump_cfg()
    k = drift.constants
    _, rep = rt.thtpw_rates(k.K1, k.K2, k.l0, k.K3)
    tg = np.linspace(0.0, 8.0, 33)
    # common random numbers: both clouds use the same jump streams
    ex = sde.simulate_ensemble(drift, nu, cfg, 5.0, 8.0, b.dt, n_paths, Streams(seed, 60), record_times=tg)
    ey = sde.simulate_ensemble(drift, nu, cfg, -5.0, 8.0, b.dt, n_paths, Streams(seed, 60), record_times=tg)
    w = np.array([mt.w1_empirical(ex.states[i], ey.states[i]) for i in range(tg.size)])
    f = mt.decay_fit(tg, w)
    ok = f.r_squared >= 0.9 and f.rate >= rep["lambda"] - 2.0 * f.rate_se
    return Criterion("AC-6", ok, f"rate = {f.rate:.4f} +- {f.rate_se:.2e}, r2 = {f.r_squared:.4f}, "
                                 f"lambda = {rep['lambda']:.4f}", {"fit": f, "w1": w})


def mf_reference(bench, T, seed, n_law=8192, iters=3):
    return mf.simulate_mckv_picard(bench.drift(), bench.levy(), bench.jump_cfg(), bench.mu0(), T, bench.dt, iters,
                                   n_law, Streams(seed, 70))


def mf_threshold(bench):
    k = bench.drift().constants
    _, rep = rt.thtpw_rates(k.K1b1, k.K2b1, k.rb1, 0.0)
    return rt.poc_threshold(k.K2b1, rep["lambda0"], rep["c1"])


@_timed
def ac7(seed=0, replicates=30, n_list=(16, 32, 64, 128, 256, 512)):
    """Propagation-of-chaos error scales like n^-1/2."""
    b = MeanFieldLinear()
    thr = mf_threshold(b)
    if not b.Kb2 < thr:
        return Criterion("AC-7", False, f"Kb2 = {b.Kb2} not below threshold {thr}")
    ref = mf_reference(b, 5.0, seed, n_law=16 * max(n_list))
    cur = mf.poc_error_curve(b.drift(), b.levy(), b.jump_cfg(), n_list, 5.0, b.dt, ref, replicates,
                             Streams(seed, 71), b.mu0())
    ok = cur.slope <= -0.35 and cur.r_squared >= 0.8
    return Criterion("AC-7", ok, f"slope = {cur.slope:.3f} (<= -0.35), r2 = {cur.r_squared:.3f}; "
                                 f"Kb2 = {b.Kb2} < {thr:.3f}", {"curve": cur})


@_timed
def ac8(seed=0, replicates=40, n=128, times=(2.0, 5.0, 10.0, 20.0)):
    """At fixed n the propagation-of-chaos error does not grow in time."""
    b = MeanFieldLinear()
    T = max(times)
    ref = mf_reference(b, T, seed, n_law=16 * 512)
    cur = mf.poc_error_curve(b.drift(), b.levy(), b.jump_cfg(), [n], T, b.dt, ref, replicates, Streams(seed, 81),
                             b.mu0(), record_times=list(times))
    stats = {}
    for t in times:
        v = np.array([r[3] for r in cur.records if abs(r[2] - t) < 1e-9])
        stats[t] = (v.mean(), v.std(ddof=1) / math.sqrt(v.size))
    m5, s5 = stats[5.0]
    gaps = {t: abs(m - m5) / math.hypot(s, s5) if t != 5.0 else 0.0 for t, (m, s) in stats.items()}
    ok = all(g <= 3.0 for g in gaps.values())
    txt = ", ".join(f"t={t:g}: {m:.4f}+-{s:.4f}" for t, (m, s) in stats.items())
    return Criterion("AC-8", ok, f"{txt}; max gap = {max(gaps.values()):.2f} SE (<= 3)", {"stats": stats})


@_timed
def ac9(seed=0, n_paths=10_000):
    """Mean of V(X_t) stays below the certified Lyapunov bound."""
    b = OUStable()
    V = rt.lyapunov_V(1)
    lam, C, _ = rt.lyapunov_drift_bound(b.drift(), 0.0, b.levy(), V)
    x0 = 2.0
    times = [0.5, 1.0, 2.0, 4.0, 8.0]
    ens = sde.simulate_ensemble(b.drift(), b.levy(), b.jump_cfg(), x0, 8.0, b.dt, n_paths, Streams(seed, 90),
                                record_times=times)
    V0 = float(V.value(np.array([[x0]]))[0])
    rows = []
    ok = True
    for i, t in enumerate(times):
        v = V.value(ens.states[i])
        m, se = v.mean(), v.std(ddof=1) / math.sqrt(v.size)
        rhs = float(rt.lyapunov_moment_bound(V0, lam, C, t))
        ok &= m <= rhs + 3.0 * se
        rows.append((t, m, se, rhs))
    worst = max(m - rhs for _, m, _, rhs in rows)
    return Criterion("AC-9", bool(ok), f"max(E V - bound) = {worst:.3f} (lambda_eff = {lam}, C_eff = {C:.3f})",
                     {"rows": rows})


@_timed
def ac10(seed=0, n_instances=200):
    """Exact transport solver against brute-force permutations and the 1D formula."""
    g = stream(seed, AUX, 10)
    worst = 0.0
    for _ in range(n_instances):
        n = int(g.integers(1, 7))
        d = int(g.integers(1, 4))
        x, y = g.normal(size=(n, d)), g.normal(size=(n, d))
        cost = np.linalg.norm(x[:, None] - y[None], axis=2)
        brute = min(cost[np.arange(n), list(p)].mean() for p in itertools.permutations(range(n)))
        worst = max(worst, abs(mt.w1_assignment(x, y) - brute))
    worst1 = 0.0
    for _ in range(n_instances):
        n = int(g.integers(1, 200))
        x, y = g.standard_cauchy(n), g.normal(size=n)
        worst1 = max(worst1, abs(mt.w1_assignment(x, y) - mt.w1_empirical(x, y)))
    ok = worst <= 1e-9 and worst1 <= 1e-9
    return Criterion("AC-10", ok, f"max |assignment - brute| = {worst:.2e}, max |assignment - 1D| = {worst1:.2e}")


@_timed
def ac11(seed=0, n_samples=200_000, h=0.005, n_points=5):
    """Finite-difference Dynkin estimate agrees with the quadrature generator."""
    b = OUStable()
    drift, cfg = b.drift(), b.jump_cfg()
    nu_sim = lv.truncated(b.levy(), b.eps)
    pts = stream(seed, AUX, 11).uniform(-2.0, 2.0, n_points)
    f = lambda x: np.sin(x[:, 0])
    grad = lambda x: np.cos(x)
    rows = []
    ok = True
    for i, x in enumerate(pts):
        G, _ = sde.generator_apply(drift, nu_sim, f, grad, np.array([x]))
        m, se = sde.dynkin_residual(drift, b.levy(), cfg, f, x, h, n_samples, Streams(seed, 110, i))
        good = abs(m - G) <= 3.0 * se + 0.05 * abs(G)
        ok &= good
        rows.append((float(x), G, m, se, good))
    worst = max(abs(m - G) / (3.0 * se + 0.05 * abs(G)) for _, G, m, se, _ in rows)
    return Criterion("AC-11", bool(ok), f"max |MC - L f| / tolerance = {worst:.3f} (<= 1)", {"rows": rows})


SUITE = {"AC-1": ac1, "AC-2": ac2, "AC-3": ac3, "AC-4": ac4, "AC-5": ac5, "AC-6": ac6, "AC-7": ac7, "AC-8": ac8,
         "AC-9": ac9, "AC-10": ac10, "AC-11": ac11}


def run_suite(names=None, seed=0, echo=None):
    out = []
    for name in names or SUITE:
        c = SUITE[name](seed=seed)
        if echo:
            echo(c.line())
        out.append(c)
    return out
