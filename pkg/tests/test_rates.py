import csv
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levycoupling import levy as lv
from levycoupling import rates as rt
from levycoupling import sde
from levycoupling.errors import CertificationFailed, InvalidSigma

UNIF = lv.LevyMeasureSpec((lv.uniform_jumps(1.0, -1.0, 1.0),), 1)


# ---------------------------------------------------------------- thtpw_rates

@pytest.mark.parametrize("K2", [0.1, 1.0, 3.0, 10.0])
def test_degenerate_rate_equals_K2(K2):
    psi, rep = rt.thtpw_rates(0.0, K2, 0.0, 0.0)
    assert abs(rep["lambda"] - K2) <= 1e-12
    assert rep["C"] == 1.0 and rep["c1"] == 1.0 and rep["c2"] == 2 * K2
    assert float(psi(0.0)) == 0.0


def test_degenerate_report_line():
    _, rep = rt.thtpw_rates(0.0, 3.0, 0.0, 0.0)
    assert "lambda = 3.0" in rep.to_text().splitlines()


def test_constant_chain_oracle():
    sig = lv.PowerSigma(0.1, 0.5)
    psi, rep = rt.thtpw_rates(1.0, 1.0, 1.0, 0.0, sig)
    # hand evaluation: g1(2) = 2^0.5/(0.1 * 0.5)
    g1 = math.sqrt(2.0) / 0.05
    c2 = min(2.0, 1.0 / g1)
    c1 = math.exp(-c2 * (1 + 2 * 1.0 / c2) * g1)
    lam = c1 * c2 / (1 + c1)
    assert rep["g1_2l0"] == pytest.approx(g1, rel=1e-12)
    assert rep["c2"] == pytest.approx(c2, rel=1e-12)
    assert rep["c2"] == pytest.approx(0.03535534, rel=1e-7)
    assert rep["c1"] == pytest.approx(c1, rel=1e-10)
    assert rep["lambda"] == pytest.approx(lam, rel=1e-10)
    assert rep["C"] == pytest.approx((1 + c1) / (2 * c1), rel=1e-10)


def test_report_reevaluation():
    # independent straight-line evaluation of every reported constant
    sig = lv.PowerSigma(0.7, 0.4)
    K1, K2, l0, K3 = 0.5, 2.0, 1.5, 1e-4
    _, rep = rt.thtpw_rates(K1, K2, l0, K3, sig)
    g1 = mpmath.mpf(2 * l0) ** 0.4 / (mpmath.mpf(0.7) * 0.4)
    c2 = min(mpmath.mpf(2 * K2), 1 / g1)
    c1 = mpmath.exp(-c2 * (1 + 2 * K1 / c2) * g1)
    lam = c1 * c2 / (1 + c1) - (1 + c1) * K3 / (2 * c1)
    for key, v in (("g1_2l0", g1), ("c2", c2), ("c1", c1), ("lambda0", c1 * c2 / (1 + c1)), ("lambda", lam),
                   ("C", (1 + c1) / (2 * c1))):
        assert rep[key] == pytest.approx(float(v), rel=1e-10), key


def test_lambda_nonpositive_is_flagged():
    _, rep = rt.thtpw_rates(1.0, 1.0, 1.0, 5.0, lv.PowerSigma(0.5, 0.5))
    assert rep["lambda"] <= 0 and rep.flags["lambda_positive"] is False
    assert rep["lambda"] <= rep["c1"] * rep["c2"] / (1 + rep["c1"])


def test_invalid_sigma():
    with pytest.raises(InvalidSigma):
        rt.thtpw_rates(1.0, 1.0, 1.0, 0.0, lambda r: np.asarray(r) - 0.5)
    with pytest.raises(InvalidSigma):
        rt.thtpw_rates(1.0, 1.0, 1.0, 0.0, None)


def test_psi_shape_thtpw():
    sig = lv.PowerSigma(0.8, 0.5)
    psi, rep = rt.thtpw_rates(1.0, 1.0, 1.0, 0.0, sig)
    c1 = rep["c1"]
    r = np.linspace(1e-6, 2.0, 2001)
    v = psi(r)
    assert float(psi(0.0)) == 0.0
    assert np.all(2 * c1 * r <= v * (1 + 1e-12)) and np.all(v <= (1 + c1) * r * (1 + 1e-12))
    d = psi.d1(np.linspace(1e-6, 6.0, 3001))
    assert np.all(d > 0) and np.all(np.diff(d) <= 1e-12)
    # C^1 across the breakpoint 2 l0
    assert float(psi.d1(2.0 - 1e-12)) == pytest.approx(float(psi.d1_right(2.0)), abs=1e-10)
    # psi'' from the closed form agrees with differences of psi'
    x = np.array([0.3, 1.1, 1.7])
    h = 1e-6
    assert psi.d2(x) == pytest.approx((psi.d1(x + h) - psi.d1(x - h)) / (2 * h), rel=1e-5)


def test_tabulated_segment_matches_power_segment():
    sig = lv.PowerSigma(0.8, 0.5)
    psi_closed, _ = rt.thtpw_rates(1.0, 1.0, 1.0, 0.0, sig)
    psi_quad, _ = rt.thtpw_rates(1.0, 1.0, 1.0, 0.0, lambda r: sig(r))
    r = np.linspace(0.0, 4.0, 41)
    assert psi_quad(r) == pytest.approx(psi_closed(r), rel=1e-8, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.1, 3.0), st.floats(0.2, 3.0), st.floats(0.1, 2.0), st.floats(0.1, 0.9))
def test_every_psi_passes_concavity_checks(K1, K2, l0, c0, alpha):
    psi, rep = rt.thtpw_rates(K1, K2, l0, 0.0, lv.PowerSigma(c0, alpha))
    p1, p2 = rt.psi_properties_check(psi, l0, 2000, 0)
    assert p1 <= 1e-9 and p2 <= 1e-9
    assert rep["lambda"] <= rep["c1"] * rep["c2"] / (1 + rep["c1"])


# ---------------------------------------------------------------- psi_properties_check

def test_affine_psi_part_one_zero():
    p1, p2 = rt.psi_properties_check(rt.affine_psi(2.0), 0.0, 1000, 0)
    assert abs(p1) <= 1e-12 and p2 == -np.inf


class Convex:
    def __call__(self, r):
        return np.asarray(r, float) ** 2

    def d2(self, r):
        return np.full_like(np.asarray(r, float), 2.0)


def test_convex_function_is_caught():
    p1, _ = rt.psi_properties_check(Convex(), 1.0, 1000, 0)
    assert p1 > 0.1


# ---------------------------------------------------------------- additive_rates

def _additive_oracle(K1, J, kappa, lam, C, l0):
    mpmath.mp.dps = 60
    K1, J, k, lam, C, l = (mpmath.mpf(v) for v in (K1, J, kappa, lam, C, l0))
    c = 4 * K1 * l / (J * k ** 2) + 1
    a = 4 * K1 * c / J + k ** 2 * c ** 2 * mpmath.exp(-c * l)
    eps = J * k ** 2 * c ** 2 * mpmath.exp(-c * l) / (16 * C)
    t1 = lam * J * k ** 2 * c ** 2 * mpmath.exp(-c * l) / (8 * (lam + a * lam + 16 * C * eps))
    t2 = 4 * eps * lam * C / (16 * C * eps + lam * (1 + a + c * mpmath.exp(-2 * c * l)))
    return c, a, eps, min(t1, t2)


def test_additive_chain_oracle():
    V = rt.lyapunov_V(1)
    assert lv.J(UNIF, 0.5) == pytest.approx(0.75, rel=1e-9)
    psi, rep = rt.additive_rates(1.0, UNIF, 0.5, (0.5, 2.0), V)
    # S0 = {V(x) + V(y) <= 64}: opposite points with |x| + |y| = 62, so l0 = 63
    assert rep["l0"] == pytest.approx(63.0, abs=1e-6)
    c, a, eps, lam0 = _additive_oracle(1.0, 0.75, 0.5, 0.5, 2.0, 63.0)
    assert rep["c"] == pytest.approx(float(c), rel=1e-9)
    assert rep["a"] == pytest.approx(float(a), rel=1e-9)
    assert rep["log10_lambda0"] == pytest.approx(float(mpmath.log10(lam0)), rel=1e-9)
    assert rep.flags["lambda0_underflow"] == (float(lam0) == 0.0)
    assert float(psi(0.0)) == 0.0


def test_additive_lambda0_monotone_in_a():
    mpmath.mp.dps = 30

    def lam0(a, lam=0.5, C=2.0, J=0.75, k=0.5, c=3.0, l=2.0):
        e1 = mpmath.exp(-c * l)
        eps = J * k ** 2 * c ** 2 * e1 / (16 * C)
        t1 = lam * J * k ** 2 * c ** 2 * e1 / (8 * (lam + a * lam + 16 * C * eps))
        t2 = 4 * eps * lam * C / (16 * C * eps + lam * (1 + a + c * mpmath.exp(-2 * c * l)))
        return min(t1, t2)
    vals = [lam0(a) for a in np.linspace(0.0, 50.0, 101)]
    assert all(x >= y for x, y in zip(vals, vals[1:]))
    # the toolkit's chain moves the same way when K1 (and hence a) grows
    V = rt.lyapunov_V(1)
    l = [rt.additive_rates(K1, UNIF, 0.5, (1.0, 0.3), V)[1] for K1 in (0.1, 0.2, 0.4)]
    assert l[0]["a"] < l[1]["a"] < l[2]["a"]
    assert l[0]["log10_lambda0"] >= l[1]["log10_lambda0"] >= l[2]["log10_lambda0"]


def test_additive_empty_S0():
    V = rt.lyapunov_V(1)
    assert rt.s0_diameter(V, 1.0, 1e-3) is None
    _, rep = rt.additive_rates(1.0, UNIF, 0.5, (1.0, 1e-3), V)
    assert rep["l0"] == 1.0 and rep.flags["S0_empty"]


# ---------------------------------------------------------------- poc_threshold

def test_poc_threshold():
    assert rt.poc_threshold(5.0, 2.0, 1.0) == pytest.approx(0.5)
    assert rt.poc_threshold(5.0, 1e300, 1.0) == pytest.approx(2.0)
    assert rt.poc_threshold(100.0, 3.0, 1.0) == pytest.approx(3.0 / 4)


# ---------------------------------------------------------------- Lyapunov V

def test_lyapunov_examples():
    V = rt.lyapunov_V(2)
    assert V(np.array([[3.0, 4.0]]))[0] == pytest.approx(6.0, rel=1e-15)
    assert V(np.zeros((1, 2)))[0] >= 1.0
    assert np.all(V.grad(np.zeros((1, 2))) == 0.0)
    assert V.grad_sup == pytest.approx(1.0)


def test_lyapunov_glue_derivative_bounded():
    V = rt.lyapunov_V(1)
    r = np.linspace(0.0, 1.0, 100_001)
    assert np.max(np.abs(V.radial_d1(r))) <= 1.0 + 1e-12
    assert np.max(np.abs(V.radial_d2(r))) <= V.hess_sup * (1 + 1e-9)
    # C^2 matching at |x| = 1
    assert float(V.radial_d1(1.0 - 1e-12)) == pytest.approx(1.0, abs=1e-9)
    assert float(V.radial_d2(1.0 - 1e-9)) == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_lyapunov_invariants_and_fd_gradient(dim):
    V = rt.lyapunov_V(dim)
    rng = np.random.default_rng(dim)
    x = rng.standard_normal((1000, dim)) * rng.choice([0.3, 1.0, 5.0], size=(1000, 1))
    v = V(x)
    n = np.linalg.norm(x, axis=1)
    assert np.all(v >= 1.0) and np.all(v >= n)
    out = n >= 1
    assert np.array_equal(v[out], 1.0 + n[out])
    h = 1e-6
    fd = np.stack([(V(x + h * e) - V(x - h * e)) / (2 * h) for e in np.eye(dim)], axis=1)
    assert np.max(np.abs(fd - V.grad(x))) <= 1e-6


def test_level_radius():
    V = rt.lyapunov_V(1)
    assert V.level_radius(5.0) == 4.0
    assert V.level_radius(0.5) == -1.0
    r = V.level_radius(1.5)
    assert float(V.radial(r)) == pytest.approx(1.5, abs=1e-12)


# ---------------------------------------------------------------- drift bound

def test_drift_bound_ou_no_noise():
    V = rt.lyapunov_V(1)
    drift = sde.DriftSpec(b=lambda x: -x, constants=sde.DriftConstants(lambda_dissip=1.0, C0_dissip=0.0))
    lam, C, info = rt.lyapunov_drift_bound(drift, 0.0, lv.LevyMeasureSpec((), 1), V)
    assert lam == 1.0 and math.isfinite(C) and info["margin"] >= 0


def test_drift_bound_B0_shift():
    V = rt.lyapunov_V(1)
    drift = sde.DriftSpec(b1=lambda x: -x, b2_matrix=[[-0.1]],
                          constants=sde.DriftConstants(lambda_dissip=1.0, C0_dissip=0.0, B0=0.1))
    lam, C, info = rt.lyapunov_drift_bound(drift, 0.1, lv.stable(1.5, r_max=2.0), V)
    assert lam == pytest.approx(1.0 - 2 * 0.1)
    assert C == pytest.approx(info["C"] * 1.1)


def test_drift_bound_rejects_expanding_drift():
    V = rt.lyapunov_V(1)
    drift = sde.DriftSpec(b=lambda x: x, constants=sde.DriftConstants(lambda_dissip=1.0), validate=False)
    with pytest.raises(CertificationFailed):
        rt.lyapunov_drift_bound(drift, 0.0, lv.LevyMeasureSpec((), 1), V)


def test_moment_bound_formula():
    assert rt.lyapunov_moment_bound(3.0, 0.5, 1.0, 0.0) == pytest.approx(5.0)
    assert rt.lyapunov_moment_bound(3.0, 0.5, 1.0, 1e9) == pytest.approx(2.0)


# ---------------------------------------------------------------- report I/O

def test_report_text_and_csv(tmp_path):
    _, rep = rt.thtpw_rates(0.0, 3.0, 0.0, 0.0)
    rep.to_csv(tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["constant", "value", "formula", "theorem"]
    got = {r[0]: float(r[1]) for r in rows[1:]}
    assert got["lambda"] == 3.0 and got["C"] == 1.0
    for line in rep.to_text().splitlines()[1:]:
        k, v = line.split(" = ")
        if not k.startswith("flag."):
            assert float(v) == rep[k]


def test_multiplicative_F():
    V = rt.lyapunov_V(1)
    psi = rt.affine_psi()
    F = rt.multiplicative_F(psi, 0.5, V)
    x = np.array([[2.0]])
    y = np.array([[-1.0]])
    assert F(x, y)[0] == pytest.approx(3.0 * (1 + 0.5 * (3.0 + 2.0)))
    assert F(x, x)[0] == 0.0
