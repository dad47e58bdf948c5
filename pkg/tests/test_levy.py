import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from levycoupling import levy as lv
from levycoupling.errors import BudgetExceeded, NoDensity, SingularPoint
from levycoupling.rng import stream

STABLE = lv.stable(1.5)
UNIF = lv.LevyMeasureSpec((lv.uniform_jumps(1.0, -1.0, 1.0),), 1)


# ---------------------------------------------------------------- density

def test_stable_density_at_unit_radius():
    assert lv.density(STABLE, 1.0) == pytest.approx(1.0, rel=1e-14)


def test_uniform_density():
    assert lv.density(UNIF, 0.3) == pytest.approx(0.5, rel=1e-14)


def test_stable_density_power_law():
    assert lv.density(STABLE, 2.0) == pytest.approx(2.0 ** -2.5, rel=1e-12)
    assert lv.density(STABLE, 2.0) == pytest.approx(0.176777, abs=1e-6)


def test_density_sums_components():
    spec = lv.LevyMeasureSpec(STABLE.components + UNIF.components, 1)
    assert lv.density(spec, 0.3) == pytest.approx(0.3 ** -2.5 + 0.5, rel=1e-12)


def test_density_errors():
    with pytest.raises(SingularPoint):
        lv.density(STABLE, 0.0)
    cp = lv.CompoundPoisson(1.0, None, lambda n, g: g.standard_normal((n, 1)))
    with pytest.raises(NoDensity):
        lv.density(lv.LevyMeasureSpec((cp,), 1), 0.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0, 2 * math.pi), st.floats(0, math.pi))
def test_isotropic_density_rotation_invariant(r, phi, theta):
    spec = lv.stable(1.2, dim=3)
    z1 = np.array([r, 0.0, 0.0])
    z2 = r * np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
    assert lv.density(spec, z2) == pytest.approx(lv.density(spec, z1), rel=1e-12)


# ---------------------------------------------------------------- overlap and J

def test_overlap_uniform_closed_form():
    assert lv.overlap_mass(UNIF, 0.5) == pytest.approx(0.75, rel=1e-6)
    # independent oracle: direct quadrature of min(q(z), q(z - x))
    q = lambda z: 0.5 * (abs(z) <= 1)
    oracle = integrate.quad(lambda z: min(q(z), q(z - 0.5)), -1, 1.5, points=[-0.5, 1.0], epsabs=1e-12)[0]
    assert oracle == pytest.approx(0.75, abs=1e-9)


def test_overlap_at_zero():
    assert lv.overlap_mass(UNIF, 0.0) == pytest.approx(1.0, rel=1e-9)
    assert math.isinf(lv.overlap_mass(STABLE, 0.0))


def test_overlap_stable_unit_shift():
    # min(|z|^-2.5, |z-1|^-2.5) integrates to 2 * int_{1/2}^inf u^-2.5 du
    exact = 2.0 * 0.5 ** -1.5 / 1.5
    # independent trapezoid oracle on a log-spaced grid away from the singularities
    u = np.geomspace(0.5, 1e7, 400_001)
    trap = 2.0 * (np.trapezoid(u ** -2.5, u) + (1e7) ** -1.5 / 1.5)
    assert trap == pytest.approx(exact, rel=1e-6)
    assert lv.overlap_mass(STABLE, 1.0) == pytest.approx(exact, rel=1e-6)


def test_J_uniform():
    assert lv.J(UNIF, 0.5) == pytest.approx(0.75, rel=1e-6)
    # grid-minimization oracle over |x| <= r
    xs = np.linspace(-0.5, 0.5, 41)
    assert min(1.0 - abs(x) / 2 for x in xs) == pytest.approx(lv.J(UNIF, 0.5), rel=1e-6)


def test_J_small_r_limit_finite_measure():
    assert lv.J(UNIF, 1e-6) == pytest.approx(1.0, abs=1e-5)


def test_J_stable_power_scaling():
    s = np.geomspace(1e-3, 1e-1, 9)
    prod = np.array([lv.J(STABLE, x) * x ** 1.5 for x in s])
    assert prod.min() > 0.5
    # 1D stable overlap is exactly (8/3) (2/s)^... : J(s) = 2 (s/2)^-1.5 / 1.5
    assert prod == pytest.approx(2.0 * 0.5 ** -1.5 / 1.5, rel=1e-5)


def test_J_non_monotone_reports_grid_metadata():
    q = lambda z: np.exp(-((np.abs(z) - 1.0) ** 2) * 4.0)
    spec = lv.LevyMeasureSpec((lv.UserDensity(q, dim=1, symmetric=True),), 1)
    vals, meta = lv.j_profile(spec, [0.5])
    assert meta.get("upper_bound", True)
    assert vals[0] <= lv.overlap_mass(spec, 0.5) + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 3.0))
def test_overlap_symmetric(x):
    assert lv.overlap_mass(STABLE, x) == pytest.approx(lv.overlap_mass(STABLE, -x), rel=1e-8)


def test_overlap_monotone_ladder():
    r = np.linspace(0.1, 4.0, 15)
    v = [lv.overlap_mass(lv.stable(1.5, r_max=10.0), x) for x in r]
    assert np.all(np.diff(v) <= 1e-10)


# ---------------------------------------------------------------- rho

def test_rho_examples():
    assert lv.rho(STABLE, 0.0, 0.7) == 1.0
    assert lv.rho(STABLE, 1.4, 0.7) == pytest.approx(1.0)
    assert lv.rho(UNIF, 0.5, 0.9) == pytest.approx(1.0)
    assert lv.rho(UNIF, 0.5, -0.9) == pytest.approx(0.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3).filter(lambda z: abs(z) > 1e-3))
def test_rho_in_unit_interval(x, z):
    r = lv.rho(STABLE, x, z)
    assert 0.0 <= r <= 1.0


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_shift_identity_mu(x, z):
    # delta_x * mu_{-x} = mu_x at the density level
    q = lambda w: float(lv.density(STABLE, w)) if abs(w) > 1e-9 else math.inf
    if abs(z) < 1e-3 or abs(z - x) < 1e-3:
        return
    lhs = min(q(z - x), q(z - x + x))  # mu_{-x} density at z - x
    rhs = min(q(z), q(z - x))
    assert lhs == pytest.approx(rhs, rel=1e-12)


# ---------------------------------------------------------------- jumps

def test_symmetric_compensator_is_zero():
    _, comp = lv.sample_jumps(STABLE, lv.JumpSimConfig(0.01), 1.0, stream(0, 9))
    assert np.allclose(comp, 0.0)


def test_asymmetric_compensator():
    spec = lv.LevyMeasureSpec((lv.uniform_jumps(2.0, 0.0, 1.0),), 1)
    comp = lv.compensator_drift(spec, lv.JumpSimConfig(0.1))
    # -int_{0.1}^{1} z * 2 dz
    assert comp[0] == pytest.approx(-(1.0 - 0.01), rel=1e-6)
    assert np.allclose(lv.compensator_drift(spec, lv.JumpSimConfig(0.1, compensate=False)), 0.0)


def test_stable_jump_rate():
    assert lv.jump_rate(STABLE, 0.01) == pytest.approx(4.0 / 3.0 * 0.01 ** -1.5, rel=1e-10)
    num = 2 * integrate.quad(lambda z: z ** -2.5, 0.01, np.inf)[0]
    assert num == pytest.approx(4.0 / 3.0 * 0.01 ** -1.5, rel=1e-8)


def test_jump_count_poisson_chi_square():
    spec = lv.LevyMeasureSpec((lv.uniform_jumps(2.0, -1.0, 1.0),), 1)
    cfg = lv.JumpSimConfig(1e-6)
    counts = np.array([len(lv.sample_jumps(spec, cfg, 10.0, stream(3, i))[0]) for i in range(10_000)])
    assert abs(counts.mean() - 20.0) < 3 * math.sqrt(20.0 / counts.size)
    edges = np.r_[-0.5, np.arange(12.5, 28.5, 1.0), np.inf]
    obs = np.histogram(counts, edges)[0]
    cdf = stats.poisson.cdf(np.floor(edges - 0.5), 20.0)
    cdf[0], cdf[-1] = 0.0, 1.0
    exp = np.diff(cdf) * counts.size
    assert stats.chisquare(obs, exp * obs.sum() / exp.sum()).pvalue > 0.01


def test_jump_times_and_sizes():
    j, _ = lv.sample_jumps(STABLE, lv.JumpSimConfig(0.3), 5.0, stream(1, 2))
    assert np.all(np.diff(j.times) >= 0) and j.times.min() >= 0 and j.times.max() <= 5.0
    assert np.all(np.abs(j.sizes) >= 0.3)
    # tail law: P(|Z| > 1 | |Z| >= 0.3) = 0.3^1.5
    jj, _ = lv.sample_jumps(STABLE, lv.JumpSimConfig(0.3), 2000.0, stream(1, 3))
    frac = np.mean(np.abs(jj.sizes[:, 0]) > 1.0)
    n = jj.sizes.shape[0]
    p = 0.3 ** 1.5
    assert abs(frac - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_jump_budget():
    with pytest.raises(BudgetExceeded):
        lv.sample_jumps(STABLE, lv.JumpSimConfig(1e-4, max_jumps_per_horizon=100), 1.0, stream(0, 0))


def test_sample_jumps_deterministic():
    a, _ = lv.sample_jumps(STABLE, lv.JumpSimConfig(0.05), 3.0, stream(7, 1))
    b, _ = lv.sample_jumps(STABLE, lv.JumpSimConfig(0.05), 3.0, stream(7, 1))
    assert np.array_equal(a.times, b.times) and np.array_equal(a.sizes, b.sizes)


# ---------------------------------------------------------------- sigma

def test_sigma_minorant_uniform_oracle():
    kappa, l0, alpha = 0.5, 1.0, 0.5
    sig = lv.sigma_minorant(UNIF, kappa, l0, alpha=alpha)
    r = lv.sigma_grid(l0, kappa)
    s = np.minimum(kappa, r)
    rhs = (1.0 - s / 2.0) * s ** 2 / (2.0 * r)
    assert sig.c0 == pytest.approx(0.95 * np.min(rhs / r ** (1 - alpha)), rel=1e-5)
    assert np.all(sig(r) <= rhs * (1 + 1e-9))


def test_sigma_g1_closed_form():
    sig = lv.PowerSigma(0.3, 0.4)
    assert sig.g1(2.0) == pytest.approx(2.0 ** 0.4 / (0.3 * 0.4), rel=1e-14)
    num = integrate.quad(lambda s: 1.0 / sig(s), 0.0, 2.0)[0]
    assert num == pytest.approx(sig.g1(2.0), rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 10), st.floats(0.05, 0.95))
def test_power_sigma_concave_nondecreasing(c0, alpha):
    sig = lv.PowerSigma(c0, alpha)
    r = np.linspace(1e-6, 5.0, 200)
    v = sig(r)
    assert np.all(np.diff(v) >= 0)
    assert np.all(np.diff(v, 2) <= 1e-12 * v.max())
    assert float(sig(0.0)) == 0.0


def test_nu_theta_restriction():
    spec = lv.stable(0.5)
    sub, r = lv.nu_theta(spec, 0.1)
    # int_{|z|<=r} |z| nu(dz) = 2 r^0.5 / 0.5
    assert sub.components[0].r_max == r
    assert 4.0 * math.sqrt(r) <= 0.1 * (1 + 1e-9)
    assert 4.0 * math.sqrt(r) == pytest.approx(0.1, rel=1e-3)
