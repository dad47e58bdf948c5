import csv
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from levycoupling import levy as lv
from levycoupling import meanfield as mf
from levycoupling import sde
from levycoupling.benchmarks import MeanFieldLinear
from levycoupling.rng import PARTICLE, Streams

EMPTY = lv.LevyMeasureSpec((), 1)
NOJUMP = lv.JumpSimConfig()


def zero_b2():
    return sde.DriftSpec(b1=lambda x: -x, b2=lambda u: 0.0 * u, dim=1)


def fixed_initial(rows):
    rows = np.asarray(rows, dtype=float)

    def sample(n, rng):
        return rows[:n].copy()
    return sample


def test_no_interaction_equals_solo_runs():
    b = MeanFieldLinear()
    cfg = mf.ParticleSystemConfig(6, zero_b2(), b.levy(), b.jump_cfg(), 0.01, 1.0, mf.point_initial([0.5]))
    ens = mf.simulate_particles(cfg, Streams(4, PARTICLE))
    solo = sde.simulate_ensemble(sde.DriftSpec(b=lambda x: -x, validate=False), b.levy(), b.jump_cfg(), [0.5],
                                 1.0, 0.01, 6, Streams(4, PARTICLE))
    assert np.array_equal(ens.states, solo.states)


def test_two_body_ode():
    # b1 = 0, b2(u) = -u: the gap closes at rate 1 and the centre stays put
    drift = sde.DriftSpec(b1=lambda x: 0.0 * x, b2_matrix=[[-1.0]], dim=1)
    cfg = mf.ParticleSystemConfig(2, drift, EMPTY, NOJUMP, 0.01, 1.0, fixed_initial([[1.0], [-1.0]]))
    X = mf.simulate_particles(cfg, 0).states
    gap = X[:, 0, 0] - X[:, 1, 0]
    assert gap == pytest.approx(2.0 * 0.99 ** np.arange(101), rel=1e-12)
    assert np.allclose(X.sum(axis=1), 0.0, atol=1e-14)
    assert abs(gap[-1] - 2 * math.exp(-1)) < 0.01


def test_summed_mean_decays():
    b = MeanFieldLinear()
    cfg = mf.ParticleSystemConfig(50, b.drift(), EMPTY, NOJUMP, 0.01, 2.0, b.mu0())
    X = mf.simulate_particles(cfg, 1).states
    m = X.mean(axis=(1, 2))
    assert m == pytest.approx(m[0] * 0.99 ** np.arange(201), rel=1e-10)


def test_generic_kernel_matches_matrix_path():
    X = np.random.default_rng(0).standard_normal((7, 2))
    A = np.array([[-0.3, 0.1], [0.0, -0.5]])
    lin = sde.DriftSpec(b1=lambda x: -x, b2_matrix=A, dim=2)
    gen = sde.DriftSpec(b1=lambda x: -x, b2=lambda u: u @ A.T, dim=2)
    assert mf.interaction(lin, X) == pytest.approx(mf.interaction(gen, X, chunk=3), abs=1e-14)
    assert mf.interaction(gen, X) == pytest.approx(mf.interaction_pairs(gen, X).mean(axis=1), abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10_000))
def test_odd_kernel_antisymmetry(n, seed):
    drift = sde.DriftSpec(b1=lambda x: -x, b2=lambda u: -u ** 3 + np.sin(u), dim=1)
    X = np.random.default_rng(seed).standard_normal((n, 1))
    P = mf.interaction_pairs(drift, X)
    assert np.allclose(P, -P.transpose(1, 0, 2), atol=1e-12)
    assert abs(P.sum()) < 1e-9 * max(1.0, np.abs(P).sum())


def test_exchangeability():
    b = MeanFieldLinear()
    x1, x3 = [], []
    for s in range(300):
        cfg = mf.ParticleSystemConfig(3, b.drift(), b.levy(), b.jump_cfg(), 0.02, 0.5, b.mu0(), [0.5])
        X = mf.simulate_particles(cfg, s).states[-1]
        x1.append(X[0, 0])
        x3.append(X[2, 0])
    assert stats.ks_2samp(x1, x3).pvalue > 0.01


def test_bad_particle_config():
    b = MeanFieldLinear()
    with pytest.raises(ValueError):
        mf.ParticleSystemConfig(1, b.drift(), b.levy(), b.jump_cfg(), 0.01, 1.0, b.mu0())
    with pytest.raises(ValueError):
        mf.ParticleSystemConfig(4, sde.DriftSpec(b=lambda x: -x), b.levy(), b.jump_cfg(), 0.01, 1.0, b.mu0())


# ---------------------------------------------------------------- Picard

def test_picard_trivial_interaction():
    b = MeanFieldLinear()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        flow = mf.simulate_mckv_picard(zero_b2(), b.levy(), b.jump_cfg(), b.mu0(), 1.0, 0.01, 3, 500, 0)
    assert flow.successive_w1 == [0.0, 0.0]
    with pytest.raises(ValueError):
        mf.simulate_mckv_picard(zero_b2(), b.levy(), b.jump_cfg(), b.mu0(), 1.0, 0.01, 0, 500, 0)


def test_picard_moment_ode():
    # dX = -X dt - K (X - m) dt + compound Poisson(lam, N(0, s^2))
    K, lam, s, T = 0.5, 2.0, 0.5, 1.0
    drift = sde.DriftSpec(b1=lambda x: -x, b2_matrix=[[-K]], dim=1)
    levy = lv.LevyMeasureSpec((lv.gaussian_jumps(lam, s),), 1)
    n = 20_000
    flow = mf.simulate_mckv_picard(drift, levy, lv.JumpSimConfig(1e-9), mf.gaussian_initial(1.0, 1.0), T, 0.01, 4, n, 7)
    x = flow.clouds[-1][:, 0]
    mean_exact = math.exp(-T)
    v_inf = lam * s * s / (2 * (1 + K))
    var_exact = v_inf + (1.0 - v_inf) * math.exp(-2 * (1 + K) * T)
    se = x.std(ddof=1) / math.sqrt(n)
    assert abs(x.mean() - mean_exact) < 3 * se + 0.01
    assert x.var(ddof=1) == pytest.approx(var_exact, rel=0.05)
    assert flow.successive_w1[-1] < flow.successive_w1[0]


def test_law_flow_lookup():
    clouds = np.arange(3.0).reshape(3, 1, 1)
    flow = mf.LawFlow(np.array([0.0, 0.5, 1.0]), clouds)
    assert flow.at(0.49)[0, 0] == 0.0 and flow.at(0.5)[0, 0] == 1.0 and flow.at(2.0)[0, 0] == 2.0


# ---------------------------------------------------------------- propagation of chaos

def test_coupled_poc_without_interaction_is_exact():
    b = MeanFieldLinear()
    drift = zero_b2()
    ref = mf.simulate_mckv_picard(drift, b.levy(), b.jump_cfg(), b.mu0(), 1.0, 0.01, 1, 200, 0)
    run = mf.coupled_poc_run(drift, b.levy(), b.jump_cfg(), 20, 1.0, 0.01, ref, 3, b.mu0(), record_times=[0.5, 1.0])
    assert np.all(run.psi_error == 0.0)
    assert run.w1.shape == (2,) and np.all(run.w1 >= 0)


def test_poc_curve_single_n_and_validation(tmp_path):
    b = MeanFieldLinear()
    ref = mf.simulate_mckv_picard(b.drift(), b.levy(), b.jump_cfg(), b.mu0(), 0.5, 0.01, 2, 400, 0)
    c = mf.poc_error_curve(b.drift(), b.levy(), b.jump_cfg(), [10], 0.5, 0.01, ref, 3, 0, b.mu0())
    assert c.slope is None and c.mean.shape == (1,) and c.mean[0] > 0
    for bad in ([1, 4], [8, 4], [4, 4]):
        with pytest.raises(ValueError):
            mf.poc_error_curve(b.drift(), b.levy(), b.jump_cfg(), bad, 0.5, 0.01, ref, 2, 0, b.mu0())
    mf.write_poc_csv(tmp_path / "p.csv", c)
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["n", "replicate", "t", "w1_error"] and len(rows) == 4


def test_poc_curve_threads_match_serial():
    b = MeanFieldLinear()
    ref = mf.simulate_mckv_picard(b.drift(), b.levy(), b.jump_cfg(), b.mu0(), 0.5, 0.01, 2, 400, 0)
    args = (b.drift(), b.levy(), b.jump_cfg(), [4, 8], 0.5, 0.01, ref, 3, 5, b.mu0())
    a = mf.poc_error_curve(*args)
    c = mf.poc_error_curve(*args, workers=3)
    assert a.records == c.records and a.slope == c.slope
