"""Test functions psi and V, and the explicit rate constants built from them."""
import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import mpmath
import numpy as np
from scipy import integrate, optimize, special

from . import levy as lv
from .errors import CertificationFailed, ConstantsInvalid, DegenerateOverlap, InvalidSigma, QuadratureFailure
from .sde import generator_apply


# ---------------------------------------------------------------------------
# psi


class _Closed:
    """Curved segment in closed form: value, first and second derivative."""

    def __init__(self, f, d1, d2):
        self.f, self.d1, self.d2 = f, d1, d2


def _power_segment(c1, k, alpha):
    """c1 r + int_0^r exp(-k s^alpha) ds."""
    pre = k ** (-1.0 / alpha) * special.gamma(1.0 / alpha) / alpha

    def f(r):
        return c1 * r + pre * special.gammainc(1.0 / alpha, k * r ** alpha)

    def d1(r):
        return c1 + np.exp(-k * r ** alpha)

    def d2(r):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, -k * alpha * r ** (alpha - 1.0) * np.exp(-k * r ** alpha), -np.inf)
    return _Closed(f, d1, d2)


class _Tabulated:
    """c1 r + int_0^r exp(-E(s)) ds with cached breakpoint values; E' gives psi''."""

    def __init__(self, c1, E, E_prime, b, n_table=200, epsrel=1e-12):
        self.c1, self.E, self.Ep = c1, E, E_prime
        self.bp = np.concatenate([[0.0], np.geomspace(b * 1e-10, b, n_table)]) if b > 0 else np.zeros(1)
        self.cum = np.zeros(self.bp.size)
        for i in range(1, self.bp.size):
            self.cum[i] = self.cum[i - 1] + self._piece(self.bp[i - 1], self.bp[i])

    def _piece(self, a, b):
        v, err = integrate.quad(lambda s: math.exp(-self.E(s)), a, b, epsabs=1e-15, epsrel=1e-12, limit=200)
        if not np.isfinite(v) or err > 1e-9 * max(1.0, abs(v)):
            raise QuadratureFailure("psi segment integral", err)
        return v

    def f(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape)
        for idx, x in np.ndenumerate(r):
            k = max(0, int(np.searchsorted(self.bp, x, side="right")) - 1)
            out[idx] = self.c1 * x + self.cum[k] + (self._piece(self.bp[k], x) if x > self.bp[k] else 0.0)
        return out

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        return self.c1 + np.exp(-np.vectorize(self.E, otypes=[float])(r))

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        E = np.vectorize(self.E, otypes=[float])(r)
        Ep = np.vectorize(self.Ep, otypes=[float])(r)
        return -Ep * np.exp(-E)


@dataclass
class PsiFunction:
    """Concave radial test function: curved on [0, b], affine or rational tail beyond b.

    Tails: ``affine`` psi(b) + psi'(b)(r - b); ``rational`` psi(b) + psi'(b)(r - b)/(1 + r - b).
    """
    segment: object
    b: float
    tail: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tail not in ("affine", "rational"):
            raise ValueError("tail must be 'affine' or 'rational'")
        if self.b > 0:
            self._vb = float(self.segment.f(np.array(self.b)))
            self._sb = float(self.segment.d1(np.array(self.b)))
        else:
            self._vb = 0.0
            self._sb = float(self.meta.get("slope0", 1.0))

    @property
    def breakpoints(self):
        return (0.0, self.b)

    def _split(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("psi is defined on [0, inf)")
        return r, r <= self.b

    def __call__(self, r):
        r, inner = self._split(r)
        t = np.maximum(r - self.b, 0.0)  # tail only used for r > b
        tail = self._vb + self._sb * (t if self.tail == "affine" else t / (1.0 + t))
        if self.b == 0:
            return tail
        return np.where(inner, self.segment.f(np.minimum(r, self.b)), tail)

    def d1(self, r):
        r, inner = self._split(r)
        t = np.maximum(r - self.b, 0.0)  # tail only used for r > b
        tail = self._sb * (np.ones_like(t) if self.tail == "affine" else 1.0 / (1.0 + t) ** 2)
        if self.b == 0:
            return tail
        return np.where(inner, self.segment.d1(np.minimum(r, self.b)), tail)

    def d2(self, r):
        """Second derivative (left limit at the breakpoint)."""
        r, inner = self._split(r)
        t = np.maximum(r - self.b, 0.0)  # tail only used for r > b
        tail = np.zeros_like(t) if self.tail == "affine" else -2.0 * self._sb / (1.0 + t) ** 3
        if self.b == 0:
            return tail
        return np.where(inner, self.segment.d2(np.minimum(r, self.b)), tail)

    def d1_right(self, r):
        r, inner = self._split(r)
        t = np.maximum(r - self.b, 0.0)
        tail = self._sb * (np.ones_like(t) if self.tail == "affine" else 1.0 / (1.0 + t) ** 2)
        if self.b == 0:
            return tail
        return np.where(r < self.b, self.segment.d1(np.minimum(r, self.b)), tail)


def affine_psi(slope=1.0):
    return PsiFunction(None, 0.0, "affine", {"slope0": slope, "kind": "affine"})


def rational_tail_psi(g, g_prime, c1, l0, n_table=200):
    """c1 r + int_0^r exp(-g(s)) ds on [0, 2 l0] with the rational tail."""
    seg = _Tabulated(c1, g, g_prime, 2.0 * l0, n_table)
    return PsiFunction(seg, 2.0 * l0, "rational", {"kind": "rational_tail", "c1": c1, "l0": l0,
                                                     "slope0": 1.0 + c1})


def exp_psi(c, l0):
    """1 - exp(-c r) on [0, 2 l0] with the rational tail."""
    seg = _Closed(lambda r: -np.expm1(-c * r), lambda r: c * np.exp(-c * r), lambda r: -c * c * np.exp(-c * r))
    return PsiFunction(seg, 2.0 * l0, "rational", {"kind": "additive", "c": c, "l0": l0, "slope0": c})


# ---------------------------------------------------------------------------
# reports


@dataclass
class RateReport:
    theorem: str
    constants: dict = field(default_factory=dict)
    formulas: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def add(self, name, value, formula=""):
        self.constants[name] = value
        self.formulas[name] = formula

    def __getitem__(self, name):
        return self.constants[name]

    def to_text(self):
        lines = [f"theorem = {self.theorem}"]
        for k, v in self.constants.items():
            lines.append(f"{k} = {_fmt(v)}")
        for k, v in self.flags.items():
            lines.append(f"flag.{k} = {v}")
        return "\n".join(lines) + "\n"

    def rows(self):
        return [(k, _fmt(v), self.formulas.get(k, ""), self.theorem) for k, v in self.constants.items()]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["constant", "value", "formula", "theorem"])
            w.writerows(self.rows())


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, float, np.floating, np.integer)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# W1 contraction rate with concave sigma


def _g1_factory(sigma, b):
    """g1(r) = int_0^r 1/sigma and its derivative; closed form for power sigma."""
    if hasattr(sigma, "g1"):
        return sigma.g1, lambda r: 1.0 / float(sigma(r))

    def g1(r):
        if r <= 0:
            return 0.0
        v, err = integrate.quad(lambda s: 1.0 / float(sigma(s)), 0.0, r, limit=200)
        if not np.isfinite(v):
            raise InvalidSigma("int 1/sigma diverges")
        return v
    return g1, lambda r: 1.0 / float(sigma(r))


def thtpw_rates(K1, K2, l0, K3=0.0, sigma=None):
    """psi and constants (c1, c2, lambda, C) for W1 contraction under a concave sigma."""
    if K2 <= 0:
        raise ValueError("K2 must be positive")
    if min(K1, l0, K3) < 0:
        raise ValueError("K1, l0, K3 must be nonnegative")
    rep = RateReport("W1 contraction (concave sigma)")
    b = 2.0 * l0
    if l0 == 0:
        c2, c1, g1b = 2.0 * K2, 1.0, 0.0
        psi = PsiFunction(None, 0.0, "affine", {"kind": "thtpw", "slope0": 1.0 + c1})
        log_c1 = 0.0
    else:
        if sigma is None:
            raise InvalidSigma("sigma required when l0 > 0")
        grid = np.geomspace(b * 1e-9, b, 2000)
        sv = np.asarray(sigma(grid), dtype=float)
        if np.any(~np.isfinite(sv)) or np.any(sv <= 0):
            raise InvalidSigma("sigma must be positive on (0, 2 l0]")
        g1, g1p = _g1_factory(sigma, b)
        g1b = float(g1(b))
        c2 = min(2.0 * K2, 1.0 / g1b)
        expo = c2 + 2.0 * K1  # c2 g(r) = (c2 + 2 K1) g1(r)
        log_c1 = -expo * g1b
        c1 = math.exp(log_c1)
        if isinstance(sigma, lv.PowerSigma):
            seg = _power_segment(c1, expo / (sigma.c0 * sigma.alpha), sigma.alpha)
        else:
            seg = _Tabulated(c1, lambda s: expo * g1(s), lambda s: expo * g1p(s), b)
        psi = PsiFunction(seg, b, "affine", {"kind": "thtpw", "slope0": 1.0 + c1})
    lam0 = c1 * c2 / (1.0 + c1)
    lam = lam0 - (1.0 + c1) * K3 / (2.0 * c1)
    C = (1.0 + c1) / (2.0 * c1)
    for k, v in (("K1", K1), ("K2", K2), ("l0", l0), ("K3", K3)):
        rep.add(k, v, "input")
    rep.add("g1_2l0", g1b, "int_0^{2 l0} 1/sigma(s) ds")
    rep.add("c2", c2, "min(2 K2, 1/g1(2 l0))")
    rep.add("c1", c1, "exp(-c2 g(2 l0)), g = (1 + 2 K1/c2) g1")
    rep.add("log10_c1", log_c1 / math.log(10.0), "log10(c1)")
    rep.add("lambda0", lam0, "c1 c2/(1 + c1)")
    rep.add("lambda", lam, "c1 c2/(1 + c1) - (1 + c1) K3/(2 c1)")
    rep.add("C", C, "(1 + c1)/(2 c1)")
    if isinstance(sigma, lv.PowerSigma):
        rep.add("sigma_c0", sigma.c0, "sigma(r) = c0 r^(1 - alpha)")
        rep.add("sigma_alpha", sigma.alpha, "sigma(r) = c0 r^(1 - alpha)")
    rep.flags["lambda_positive"] = lam > 0
    psi.meta.update(rep.constants)
    return psi, rep


# ---------------------------------------------------------------------------
# Lyapunov function


def _glue_coefficients():
    # Taylor polynomial of 1 + sqrt(s) at s = 1, degree 5, in powers of (s - 1)
    return np.array([special.binom(0.5, k) for k in range(6)])


@dataclass
class LyapunovSpec:
    """Radial V with V(x) = 1 + |x| for |x| >= 1 and a quintic glue in |x|^2 inside."""
    dim: int
    grad_sup: float
    hess_sup: float
    coef: np.ndarray = field(default_factory=_glue_coefficients, repr=False)

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        s = np.minimum(r, 1.0) ** 2 - 1.0
        inner = 1.0 + np.polynomial.polynomial.polyval(s, self.coef)
        return np.where(r >= 1.0, 1.0 + r, inner)

    def radial_d1(self, r):
        r = np.asarray(r, dtype=float)
        s = np.minimum(r, 1.0) ** 2 - 1.0
        dp = np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(self.coef))
        return np.where(r >= 1.0, 1.0, 2.0 * np.minimum(r, 1.0) * dp)

    def radial_d2(self, r):
        r = np.asarray(r, dtype=float)
        rr = np.minimum(r, 1.0)
        s = rr ** 2 - 1.0
        dp = np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(self.coef))
        ddp = np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(self.coef, 2))
        return np.where(r >= 1.0, 0.0, 2.0 * dp + 4.0 * rr * rr * ddp)

    def _pts(self, x):
        return lv.as_points(x, self.dim)

    def value(self, x):
        return self.radial(lv.norms(self._pts(x)))

    __call__ = value

    def grad(self, x):
        p = self._pts(x)
        r = lv.norms(p)
        s = np.minimum(r, 1.0) ** 2 - 1.0
        dp = np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(self.coef))
        # inner: grad = 2 P'(s) x ; outer: x/|x|
        fac = np.where(r >= 1.0, 1.0 / np.where(r > 0, r, 1.0), 2.0 * dp)
        return p * fac[:, None]

    def hess(self, x):
        p = self._pts(x)
        out = np.empty((p.shape[0], self.dim, self.dim))
        eye = np.eye(self.dim)
        for i, xi in enumerate(p):
            r = float(np.linalg.norm(xi))
            if r >= 1.0:
                u = xi / r
                out[i] = (eye - np.outer(u, u)) / r
            else:
                s = r * r - 1.0
                dp = np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(self.coef))
                ddp = np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(self.coef, 2))
                out[i] = 2.0 * dp * eye + 4.0 * ddp * np.outer(xi, xi)
        return out

    def level_radius(self, v):
        """Radius of {V <= v}; -1 when the set is empty."""
        v = float(v)
        v0 = float(self.radial(0.0))
        if v < v0:
            return -1.0
        if v >= 2.0:
            return v - 1.0
        return optimize.brentq(lambda r: float(self.radial(r)) - v, 0.0, 1.0, xtol=1e-14)


def lyapunov_V(dim=1):
    if dim < 1:
        raise ValueError("dim must be >= 1")
    tmp = LyapunovSpec(dim, 1.0, 1.0)
    r = np.linspace(0.0, 1.0, 20001)
    d1 = np.abs(tmp.radial_d1(r))
    d2 = np.abs(tmp.radial_d2(r))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(r > 0, d1 / r, d2)
    grad_sup = max(1.0, float(d1.max()))
    hess_sup = max(float(d2.max()), float(ratio.max()), 1.0)
    return LyapunovSpec(dim, grad_sup, hess_sup)


def lyapunov_drift_bound(drift, B0, levy, V, quadrature=None, grid=None, n_grid=81, radius=20.0):
    """Certified (lambda_eff, C_eff) with L V + lambda_eff V <= C_eff on a grid.

    Returns ``(lambda_eff, C_eff, info)``; ``info`` carries the worst margin.
    """
    k = drift.constants
    lam = k.lambda_dissip
    C0 = k.C0_dissip if k.C0_dissip is not None else 0.0
    K1 = k.K1b1 if drift.is_mean_field else k.K1
    if lam is None or lam <= 0:
        raise ConstantsInvalid("lambda_dissip: a positive dissipativity constant is required")
    K1 = max(0.0, K1 if K1 is not None else 0.0)
    if not np.isfinite(levy.moment(1.0, 1.0, np.inf)):
        raise ConstantsInvalid("levy: the integral of |z| over |z| >= 1 must be finite")
    d = levy.dim
    b1_0 = float(np.linalg.norm(drift.drift(np.zeros((1, d)))[0]))
    C1 = 0.5 * V.hess_sup * levy.moment(2.0, 0.0, 1.0) + V.grad_sup * levy.moment(1.0, 1.0, np.inf)
    sup_ball = float(V.radial(1.0))
    C = max(V.grad_sup, C1 + C0 + (K1 + b1_0) * V.grad_sup + lam * (1.0 + sup_ball))
    lam_eff = lam - 2.0 * V.grad_sup * B0
    C_eff = C * (1.0 + B0)
    if grid is None:
        if d == 1:
            grid = np.linspace(-radius, radius, n_grid)[:, None]
        else:
            rng = np.random.default_rng(0)
            u = rng.standard_normal((n_grid, d))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            grid = u * np.linspace(0.0, radius, n_grid)[:, None]
    grid = lv.as_points(grid, d)
    worst = np.inf
    worst_pt = None
    for x in grid:
        val, err = generator_apply(drift, levy, V.value, V.grad, x, quadrature=quadrature, hess_f=V.hess)
        # the distribution-free part must satisfy L V + lam V <= C; the mean-field terms are
        # absorbed into (lam_eff, C_eff)
        margin = C - (val + err + lam * float(V.value(x[None, :])[0]))
        if margin < worst:
            worst, worst_pt = margin, x
    if worst < 0:
        raise CertificationFailed(worst_pt, worst)
    return lam_eff, C_eff, {"lambda": lam, "C": C, "C1": C1, "margin": worst, "B0": B0}


# ---------------------------------------------------------------------------
# additive distance rate


def s0_diameter(V, lam, C):
    """sup |x - y| over {lam (V(x) + V(y)) <= 16 C}; None when the set is empty."""
    M = 16.0 * C / lam
    v0 = float(V.radial(0.0))
    if M < 2.0 * v0:
        return None
    f = lambda v1: -(V.level_radius(v1) + V.level_radius(M - v1))
    grid = np.linspace(v0, M - v0, 401)
    vals = np.array([f(v) for v in grid])
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return float(max(-vals[i], -res.fun))


def additive_rates(K1, levy, kappa, lyap, V, quadrature=None):
    """Constants (l0, c, a, epsilon, lambda0) and psi = 1 - exp(-c r) for the additive distance."""
    lam, C = map(float, lyap)
    if lam <= 0 or C <= 0:
        raise ValueError("the Lyapunov pair must be positive")
    Jk = float(lv.J(levy, kappa, quadrature=quadrature))
    if not Jk > 1e-14:
        raise DegenerateOverlap("J(kappa) vanishes")
    rep = RateReport("additive distance (Lyapunov)")
    diam = s0_diameter(V, lam, C)
    rep.flags["S0_empty"] = diam is None
    l0 = 1.0 if diam is None else diam + 1.0
    return _additive_chain(K1, Jk, kappa, lam, C, l0, rep)


def _additive_chain(K1, Jk, kappa, lam, C, l0, rep=None):
    rep = rep or RateReport("additive distance (Lyapunov)")
    mp = mpmath.mp
    mp.dps = 50
    K1m, J, k, lm, Cm, l = (mpmath.mpf(v) for v in (K1, Jk, kappa, lam, C, l0))
    c = 4 * K1m * l / (J * k ** 2) + 1
    e1 = mpmath.exp(-c * l)
    e2 = mpmath.exp(-2 * c * l)
    a = 4 * K1m * c / J + k ** 2 * c ** 2 * e1
    eps = J * k ** 2 * c ** 2 * e1 / (16 * Cm)
    t1 = lm * J * k ** 2 * c ** 2 * e1 / (8 * (lm + a * lm + 16 * Cm * eps))
    t2 = 4 * eps * lm * Cm / (16 * Cm * eps + lm * (1 + a + c * e2))
    lam0 = min(t1, t2)
    for name, v in (("K1", K1), ("J_kappa", Jk), ("kappa", kappa), ("lambda_lyap", lam), ("C_lyap", C)):
        rep.add(name, float(v), "input")
    rep.add("l0", float(l), "sup_{S0} |x - y| + 1, S0 = {lambda (V(x) + V(y)) <= 16 C}")
    rep.add("c", float(c), "4 K1 l0/(J(kappa) kappa^2) + 1")
    rep.add("a", float(a), "4 K1 c/J(kappa) + kappa^2 c^2 exp(-c l0)")
    rep.add("epsilon", float(eps), "J(kappa) kappa^2 c^2 exp(-c l0)/(16 C)")
    rep.add("lambda0", float(lam0), "min(lambda J kappa^2 c^2 e^{-c l0}/(8(lambda + a lambda + 16 C eps)), "
                                    "4 eps lambda C/(16 C eps + lambda(1 + a + c e^{-2 c l0})))")
    rep.add("log10_lambda0", float(mpmath.log10(lam0)), "log10(lambda0)")
    rep.flags["lambda0_underflow"] = float(lam0) == 0.0
    psi = exp_psi(float(c), float(l))
    psi.meta.update(rep.constants)
    return psi, rep


def poc_threshold(K2b1, lambda0, c1):
    """min(2 K2b1/5, lambda0 c1/(2(1 + c1)))."""
    if K2b1 <= 0 or lambda0 <= 0 or c1 <= 0:
        raise ValueError("inputs must be positive")
    if math.isinf(lambda0):
        return 2.0 * K2b1 / 5.0
    return min(2.0 * K2b1 / 5.0, lambda0 * c1 / (2.0 * (1.0 + c1)))


# ---------------------------------------------------------------------------
# checks and multiplicative distance


def psi_properties_check(psi, l0, n_samples, rng, r_max=None):
    """Max of psi(r+d)+psi(r-d)-2psi(r) (0<=d<=r) and of that minus psi''(r) d^2 (r <= l0)."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    r_max = r_max or 4.0 * max(l0, 0.5)
    n1 = n_samples // 2
    r = np.concatenate([rng.uniform(0.0, r_max, n_samples - n1),
                        np.exp(rng.uniform(math.log(r_max * 1e-6), math.log(r_max), n1))])
    d = rng.uniform(0.0, 1.0, r.size) * r
    part1 = float(np.max(psi(r + d) + psi(r - d) - 2.0 * psi(r)))
    if l0 <= 0:
        return part1, -np.inf
    r2 = np.concatenate([rng.uniform(0.0, l0, n_samples - n1),
                         np.exp(rng.uniform(math.log(l0 * 1e-6), math.log(l0), n1))])
    d2 = rng.uniform(0.0, 1.0, r2.size) * r2
    lhs = psi(r2 + d2) + psi(r2 - d2) - 2.0 * psi(r2)
    with np.errstate(invalid="ignore"):
        part2 = np.where(d2 > 0, lhs - psi.d2(r2) * d2 ** 2, lhs)
    return part1, float(np.max(part2))


def multiplicative_F(psi, eps, V):
    """F(x, y) = psi(|x - y|)(1 + eps (V(x) + V(y))) on row arrays."""
    def F(x, y):
        x = lv.as_points(x, V.dim)
        y = lv.as_points(y, V.dim)
        return psi(lv.norms(x - y)) * (1.0 + eps * (V.value(x) + V.value(y)))
    return F


def w1_bound(rep, w0, t):
    """C exp(-lambda t) W1(mu0, nu0) for a contraction report."""
    return rep["C"] * np.exp(-rep["lambda"] * np.asarray(t, dtype=float)) * w0


def lyapunov_moment_bound(V0, lam_eff, C_eff, t):
    """E V(X0) exp(-lambda_eff t) + C_eff/lambda_eff."""
    return V0 * np.exp(-lam_eff * np.asarray(t, dtype=float)) + C_eff / lam_eff
