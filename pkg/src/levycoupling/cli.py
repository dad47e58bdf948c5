"""Command-line runner: ``levycoupling <kind> --config file.yaml [key=value ...]``."""
import argparse
import csv
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import acceptance as acc
from . import config as cf
from . import coupling as cp
from . import levy as lv
from . import meanfield as mf
from . import metrics as mt
from . import rates as rt
from . import sde
from .errors import ConfigInvalid, LevyCouplingError
from . import rng
from .rng import Streams

THREADS_ENV = "LEVYCOUPLING_THREADS"


def _writer(path, header):
    fh = open(path, "w", newline="")
    w = csv.writer(fh)
    w.writerow(header)
    return fh, w


def _f(v):
    return repr(float(v))


def _record_times(cfg):
    T, dt = cfg.time.T, cfg.time.dt
    grid = sde.time_grid(T, dt)
    idx = np.unique(np.round(np.linspace(0, grid.size - 1, max(2, cfg.time.n_record))).astype(int))
    return grid[idx]


def run_simulate(cfg, out, threads, echo):
    drift, nu, jc = cf.build_drift(cfg), cf.build_levy(cfg), cf.build_jump(cfg)
    s = cfg.simulate
    ens = sde.simulate_ensemble(drift, nu, jc, s.x0, cfg.time.T, cfg.time.dt, s.n_paths, Streams(cfg.seed, rng.PATH),
                                record_times=_record_times(cfg))
    d = nu.dim
    fh, w = _writer(out / "paths.csv", ["path_id", "time"] + [f"x{i}" for i in range(d)])
    with fh:
        for i in range(s.n_paths):
            for k, t in enumerate(ens.times):
                w.writerow([i, _f(t)] + [_f(v) for v in ens.states[k, i]])
    echo(f"wrote {s.n_paths} paths to {out / 'paths.csv'}")
    return 0


def run_couple(cfg, out, threads, echo):
    drift, nu, jc, cc = cf.build_drift(cfg), cf.build_levy(cfg), cf.build_jump(cfg), cf.build_coupling(cfg)
    s = cfg.couple
    ens = cp.simulate_coupled_ensemble(drift, nu, jc, cc, s.x0, s.y0, cfg.time.T, cfg.time.dt, s.n_paths,
                                       Streams(cfg.seed, rng.COUPLED), record_times=_record_times(cfg))
    if s.write_paths:
        cp.write_coupled_csv(out / "coupled.csv", ens)
    tg = np.linspace(0.0, cfg.time.T, s.n_survival)
    surv, se = cp.coupling_time_survival(ens, tg)
    tv = mt.tv_upper_from_coupling(surv)
    fh, w = _writer(out / "survival.csv", ["time", "survival", "se", "tv_bound"])
    with fh:
        for row in zip(tg, surv, se, tv):
            w.writerow([_f(v) for v in row])
    fits = {}
    try:
        fits["tv_bound"] = mt.decay_fit(tg, tv)
    except (LevyCouplingError, ValueError) as e:
        echo(f"decay fit skipped: {e}")
    mt.write_fits_csv(out / "fits.csv", fits)
    for q, f in fits.items():
        echo(f"{q}: rate = {f.rate:.6g} (se {f.rate_se:.3g}, r2 {f.r_squared:.4f}); bound uses mass-2 convention")
    return 0


def run_particles(cfg, out, threads, echo):
    drift, nu, jc = cf.build_drift(cfg), cf.build_levy(cfg), cf.build_jump(cfg)
    p = cfg.particles
    mu0 = cf.build_initial(p.initial, nu.dim)
    if p.mode == "simulate":
        pc = mf.ParticleSystemConfig(p.n, drift, nu, jc, cfg.time.dt, cfg.time.T, mu0, _record_times(cfg))
        ens = mf.simulate_particles(pc, Streams(cfg.seed, rng.PARTICLE))
        fh, w = _writer(out / "particles.csv", ["particle_id", "time"] + [f"x{i}" for i in range(nu.dim)])
        with fh:
            for i in range(p.n):
                for k, t in enumerate(ens.times):
                    w.writerow([i, _f(t)] + [_f(v) for v in ens.states[k, i]])
        echo(f"wrote {p.n} particles to {out / 'particles.csv'}")
        return 0
    ref = mf.simulate_mckv_picard(drift, nu, jc, mu0, cfg.time.T, cfg.time.dt, p.picard_iters, p.n_law_samples,
                                  Streams(cfg.seed, rng.LAW))
    cur = mf.poc_error_curve(drift, nu, jc, p.n_list, cfg.time.T, cfg.time.dt, ref, p.replicates,
                             Streams(cfg.seed, rng.PARTICLE), mu0, record_times=_record_times(cfg), workers=threads)
    mf.write_poc_csv(out / "poc_errors.csv", cur)
    fh, w = _writer(out / "poc_summary.csv", ["n", "mean_w1", "se"])
    with fh:
        for row in zip(cur.n, cur.mean, cur.se):
            w.writerow([int(row[0]), _f(row[1]), _f(row[2])])
    slope = "absent" if cur.slope is None else f"{cur.slope:.4f} (r2 {cur.r_squared:.4f})"
    echo(f"log-log slope = {slope}")
    return 0


def run_picard(cfg, out, threads, echo):
    drift, nu, jc = cf.build_drift(cfg), cf.build_levy(cfg), cf.build_jump(cfg)
    p = cfg.picard
    mu0 = cf.build_initial(p.initial, nu.dim)
    flow = mf.simulate_mckv_picard(drift, nu, jc, mu0, cfg.time.T, cfg.time.dt, p.iters, p.n_law_samples,
                                   Streams(cfg.seed, rng.LAW))
    fh, w = _writer(out / "law.csv", ["time", "sample_id"] + [f"x{i}" for i in range(nu.dim)])
    with fh:
        for t in _record_times(cfg):
            cloud = flow.at(t)
            for j, x in enumerate(cloud):
                w.writerow([_f(t), j] + [_f(v) for v in x])
    fh, w = _writer(out / "picard_w1.csv", ["iteration", "w1_change"])
    with fh:
        for i, v in enumerate(flow.successive_w1, start=2):
            w.writerow([i, _f(v)])
    echo(f"successive W1 at T: {[round(v, 6) for v in flow.successive_w1]}")
    return 0


def run_rates(cfg, out, threads, echo):
    r = cfg.rates
    if r.theorem == "thtpw":
        sigma = None
        if r.l0 > 0:
            if r.sigma.c0 is not None:
                sigma = lv.PowerSigma(r.sigma.c0, r.sigma.alpha if r.sigma.alpha is not None else 0.5)
            else:
                sigma = lv.sigma_minorant(cf.build_levy(cfg), r.kappa, r.l0, alpha=r.sigma.alpha)
        _, rep = rt.thtpw_rates(r.K1, r.K2, r.l0, r.K3, sigma)
    elif r.theorem == "additive":
        drift, nu = cf.build_drift(cfg), cf.build_levy(cfg)
        V = rt.lyapunov_V(nu.dim)
        lam, C, _ = rt.lyapunov_drift_bound(drift, r.B0, nu, V)
        _, rep = rt.additive_rates(r.K1, nu, r.kappa, (lam, C), V)
    else:
        _, base = rt.thtpw_rates(r.K1, r.K2, r.l0, r.K3)
        rep = rt.RateReport("propagation of chaos threshold")
        rep.add("lambda0", base["lambda0"], "c1 c2/(1 + c1)")
        rep.add("c1", base["c1"], "exp(-c2 g(2 l0))")
        rep.add("K_b2_star", rt.poc_threshold(r.K2b1, base["lambda0"], base["c1"]),
                "min(2 K2b1/5, lambda0 c1/(2(1 + c1)))")
    (out / "report.txt").write_text(rep.to_text())
    rep.to_csv(out / "report.csv")
    echo(rep.to_text().rstrip())
    return 0


def run_verify(cfg, out, threads, echo):
    v = cfg.verify
    nu, cc = cf.build_levy(cfg), cf.build_coupling(cfg)
    sigma = lv.sigma_minorant(nu, cc.kappa, v.l0)
    psi, rep = rt.thtpw_rates(v.K1, v.K2, v.l0, 0.0, sigma)
    lam = rep["lambda0"] * v.lambda_factor
    r = acc.contraction_grid(max(v.l0, 0.25), v.n_grid)
    vals = cp.contraction_values(psi, lam, v.K1, v.K2, v.l0, nu, cc, r)
    fh, w = _writer(out / "verify.csv", ["r", "value"])
    with fh:
        for a, b in zip(r, vals):
            w.writerow([_f(a), _f(b)])
    m = float(vals.max())
    echo(f"lambda = {lam!r}\nmax = {m!r}\ncertified = {m <= 1e-9}")
    return 0 if m <= 1e-9 else 1


def run_acceptance(cfg, out, threads, echo):
    names = cfg.acceptance.criteria or list(acc.SUITE)
    unknown = [n for n in names if n not in acc.SUITE]
    if unknown:
        raise ConfigInvalid("acceptance.criteria", f"unknown criteria {unknown}")
    res = acc.run_suite(names, seed=cfg.seed, echo=echo)
    fh, w = _writer(out / "acceptance.csv", ["criterion", "passed", "summary"])
    with fh:
        for c in res:
            w.writerow([c.name, c.passed, c.summary])
    ok = all(c.passed for c in res)
    echo(f"{sum(c.passed for c in res)}/{len(res)} criteria passed")
    return 0 if ok else 1


RUNNERS = {"simulate": run_simulate, "couple": run_couple, "particles": run_particles, "picard": run_picard,
           "rates": run_rates, "verify": run_verify, "acceptance": run_acceptance}


def build_parser():
    ap = argparse.ArgumentParser(prog="levycoupling", description=__doc__)
    ap.add_argument("kind", choices=cf.KINDS)
    ap.add_argument("overrides", nargs="*", help="key=value overrides, dotted keys for nested sections")
    ap.add_argument("--config", help="YAML experiment config")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--suite", choices=["primary"], help="acceptance suite (only 'primary')")
    return ap


def resolve(args, environ=os.environ):
    if args.config:
        with open(args.config) as fh:
            doc = yaml.safe_load(fh) or {}
    elif args.kind == "acceptance":
        doc = {"seed": 0}
    else:
        raise ConfigInvalid("--config", f"'{args.kind}' needs a config file")
    doc["kind"] = args.kind
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["out"] = args.out
    if args.suite:
        doc.setdefault("acceptance", {})["suite"] = args.suite
    thread_source = "config"
    if environ.get(THREADS_ENV):
        doc["threads"] = int(environ[THREADS_ENV])
        thread_source = f"env:{THREADS_ENV}"
    if args.threads is not None:
        doc["threads"] = args.threads
        thread_source = "flag"
    cfg = cf.parse_config(doc, args.overrides)
    return cfg, thread_source


def main(argv=None):
    args = build_parser().parse_intermixed_args(argv)
    echo = print
    try:
        cfg, thread_source = resolve(args)
    except ConfigInvalid as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    out = Path(cfg.out or f"runs/{cfg.kind}")
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        code = RUNNERS[cfg.kind](cfg, out, cfg.threads, echo)
    except ConfigInvalid as e:
        print(f"error: {e}", file=sys.stderr)
        code = 2
    except LevyCouplingError as e:
        print(f"error in {cfg.kind}: {type(e).__name__}: {e}", file=sys.stderr)
        code = 1
    manifest = {"toolkit": "levycoupling", "version": __version__, "wall_time_s": round(time.perf_counter() - t0, 3),
                "threads": cfg.threads, "threads_source": thread_source, "exit_code": code,
                "config": cf.to_dict(cfg)}
    with open(out / "manifest.yaml", "w") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=False)
    return code


if __name__ == "__main__":
    sys.exit(main())
