"""Lévy measures: densities, jump streams and overlap quantities.

A measure is a sum of components.  Each component has a density on
``{r_min <= |z| <= r_max}``; the radial window is how small-jump truncation,
large-jump cutoffs and restricted sub-measures are represented.
"""
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize, special

from .errors import (BudgetExceeded, DegenerateOverlap, InadmissibleMeasure,
                     NoDensity, QuadratureFailure, SingularPoint)
from .rng import AUX, stream

INF = math.inf


def sphere_area(d):
    """Surface area of the unit sphere in R^d (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def as_points(z, dim):
    """Reshape ``z`` to an ``(n, dim)`` float array."""
    return np.asarray(z, dtype=float).reshape(-1, dim)


def norms(pts):
    if pts.shape[1] == 1:
        return np.abs(pts[:, 0])
    return np.sqrt(np.sum(pts * pts, axis=1))


def _unit_directions(n, d, rng):
    g = rng.standard_normal((n, d))
    return g / norms(g)[:, None]


def _cap_fraction(t, d):
    """Fraction of the unit sphere in R^d with first coordinate >= t, t in [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return 0.5 * special.betainc((d - 1) / 2.0, 0.5, 1.0 - t * t)


def _quad(f, a, b, epsrel, epsabs=1e-13, limit=200, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = integrate.quad(f, a, b, epsrel=epsrel, epsabs=epsabs, limit=limit,
                             points=points, full_output=1)
    val, err = out[0], out[1]
    if len(out) > 3 and not (err <= max(epsabs, 10 * epsrel * abs(val))):
        raise QuadratureFailure(f"quad on [{a}, {b}] did not converge: {out[3]}")
    return val, err


# ---------------------------------------------------------------------------
# components


@dataclass(frozen=True)
class IsotropicStable:
    """Density ``scale * |z|^(-dim-alpha)`` on ``r_min <= |z| <= r_max``."""
    alpha: float
    scale: float = 1.0
    dim: int = 1
    r_min: float = 0.0
    r_max: float = INF

    has_density = True
    isotropic = True
    symmetric = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise InadmissibleMeasure(f"stable index must lie in (0, 2), got {self.alpha}")
        if self.scale <= 0 or self.dim < 1 or not 0.0 <= self.r_min < self.r_max:
            raise InadmissibleMeasure("invalid stable component parameters")

    @property
    def monotone(self):
        return self.r_min == 0.0

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            val = self.scale * r ** (-self.dim - self.alpha)
        return np.where((r >= self.r_min) & (r <= self.r_max), val, 0.0)

    def density(self, pts):
        return self.profile(norms(pts))

    def _window(self, lo, hi):
        return max(lo, self.r_min), min(hi, self.r_max)

    def moment(self, p, lo=0.0, hi=INF):
        """Integral of |z|^p over lo <= |z| <= hi."""
        a, b = self._window(lo, hi)
        if a >= b:
            return 0.0
        e = p - self.alpha  # integrand r^(e-1)
        c = self.scale * sphere_area(self.dim)
        if e == 0:
            return INF if a == 0 or b == INF else c * math.log(b / a)
        if e > 0:
            return INF if b == INF else c * (b ** e - a ** e) / e
        return INF if a == 0 else c * (a ** e - (0.0 if b == INF else b ** e)) / (-e)

    def mass(self, lo=0.0, hi=INF):
        return self.moment(0.0, lo, hi)

    def sample(self, n, eps, rng):
        a, b = self._window(eps, INF)
        u = rng.random(n)
        lo_t = a ** -self.alpha
        hi_t = 0.0 if b == INF else b ** -self.alpha
        r = (lo_t - u * (lo_t - hi_t)) ** (-1.0 / self.alpha)
        if self.dim == 1:
            sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
            return (sign * r)[:, None]
        return r[:, None] * _unit_directions(n, self.dim, rng)

    def halfspace_mass(self, h):
        """Mass of {z : z_1 >= h} for h > 0."""
        a, b = self._window(h, INF)
        if a >= b:
            return 0.0
        if self.dim == 1:
            return self.scale * (a ** -self.alpha - (0.0 if b == INF else b ** -self.alpha)) / self.alpha
        return _radial_halfspace(self.profile, self.dim, h, a, b)


@dataclass(frozen=True)
class CompoundPoisson:
    """``intensity`` times a probability density of jump sizes."""
    intensity: float
    jump_density: Callable
    jump_sampler: Callable
    dim: int = 1
    isotropic: bool = False
    monotone: bool = False
    symmetric: bool = False
    support_radius: Optional[float] = None
    r_min: float = 0.0
    r_max: float = INF
    label: str = "compound_poisson"

    @property
    def has_density(self):
        return self.jump_density is not None

    def __post_init__(self):
        if self.intensity <= 0:
            raise InadmissibleMeasure("intensity must be positive")

    def density(self, pts):
        r = norms(pts)
        q = self.intensity * np.asarray(self.jump_density(pts), dtype=float).reshape(-1)
        return np.where((r >= self.r_min) & (r <= self.r_max), q, 0.0)

    def profile(self, r):
        r = np.asarray(r, dtype=float).reshape(-1)
        pts = np.zeros((r.size, self.dim))
        pts[:, 0] = r
        return self.density(pts)

    def moment(self, p, lo=0.0, hi=INF):
        return _generic_moment(self, p, lo, hi)

    def mass(self, lo=0.0, hi=INF):
        return self.moment(0.0, lo, hi)

    def sample_window(self, n, rng):
        z = np.asarray(self.jump_sampler(n, rng), dtype=float).reshape(n, self.dim)
        return z

    def halfspace_mass(self, h):
        return _generic_halfspace(self, h)


@dataclass(frozen=True)
class UserDensity:
    """A user-supplied Lévy density ``q``."""
    q: Callable
    dim: int = 1
    isotropic: bool = False
    monotone: bool = False
    symmetric: bool = False
    support_radius: Optional[float] = None
    r_min: float = 0.0
    r_max: float = INF

    has_density = True

    def density(self, pts):
        r = norms(pts)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.asarray(self.q(pts), dtype=float).reshape(-1)
        return np.where((r >= self.r_min) & (r <= self.r_max), q, 0.0)

    def profile(self, r):
        r = np.asarray(r, dtype=float).reshape(-1)
        pts = np.zeros((r.size, self.dim))
        pts[:, 0] = r
        return self.density(pts)

    @property
    def outer(self):
        R = self.r_max if self.support_radius is None else min(self.support_radius, self.r_max)
        return R

    def moment(self, p, lo=0.0, hi=INF):
        return _generic_moment(self, p, lo, hi)

    def mass(self, lo=0.0, hi=INF):
        return self.moment(0.0, lo, hi)

    def halfspace_mass(self, h):
        return _generic_halfspace(self, h)

    def sample(self, n, eps, rng, n_table=20001):
        a = max(eps, self.r_min)
        b = self.outer
        if not math.isfinite(b):
            raise InadmissibleMeasure("sampling a user density needs a finite support_radius or r_max")
        if self.dim == 1:
            grid = np.geomspace(a, b, n_table)
            qp = self.profile(grid)
            qm = self.profile(-grid)
            cp = integrate.cumulative_trapezoid(qp, grid, initial=0.0)
            cm = integrate.cumulative_trapezoid(qm, grid, initial=0.0)
            total = cp[-1] + cm[-1]
            u = rng.random(n) * total
            neg = u < cm[-1]
            out = np.empty(n)
            out[neg] = -np.interp(u[neg], cm, grid)
            out[~neg] = np.interp(u[~neg] - cm[-1], cp, grid)
            return out[:, None]
        if not self.isotropic:
            raise NotImplementedError("sampling non-isotropic user densities needs dim = 1")
        grid = np.geomspace(a, b, n_table)
        w = self.profile(grid) * grid ** (self.dim - 1)
        c = integrate.cumulative_trapezoid(w, grid, initial=0.0)
        r = np.interp(rng.random(n) * c[-1], c, grid)
        return r[:, None] * _unit_directions(n, self.dim, rng)


def _radial_halfspace(profile, d, h, a, b):
    def f(r):
        return float(profile(r)) * r ** (d - 1) * sphere_area(d) * float(_cap_fraction(h / r, d))
    val, _ = _quad(f, a, b, epsrel=1e-9)
    return val


def _generic_moment(comp, p, lo, hi):
    a = max(lo, comp.r_min)
    b = min(hi, comp.r_max)
    if comp.support_radius is not None:
        b = min(b, comp.support_radius)
    if a >= b:
        return 0.0
    if comp.dim == 1:
        def f(r):
            z = np.array([[r], [-r]])
            return abs(r) ** p * float(np.sum(comp.density(z)))
        pts = [x for x in (1.0,) if a < x < b]
        if math.isfinite(b):
            return _quad(f, a, b, 1e-9, points=pts or None)[0]
        mid = max(a, 1.0) + 1.0
        return _quad(f, a, mid, 1e-9)[0] + _quad(f, mid, INF, 1e-9)[0]
    if comp.isotropic:
        def g(r):
            return r ** p * float(comp.profile(r)[0]) * r ** (comp.dim - 1) * sphere_area(comp.dim)
        return _quad(g, a, b, 1e-9)[0]
    if isinstance(comp, CompoundPoisson):
        z = comp.sample_window(400_000, stream(0, AUX, 1))
        r = norms(z)
        keep = (r >= a) & (r <= b)
        return comp.intensity * float(np.mean(np.where(keep, r ** p, 0.0)))
    raise NotImplementedError("moments of non-isotropic user densities need dim = 1")


def _generic_halfspace(comp, h):
    if comp.dim == 1:
        b = comp.r_max if comp.support_radius is None else min(comp.r_max, comp.support_radius)

        def f(z):
            return float(comp.density(np.array([[z]]))[0])
        a = max(h, comp.r_min)
        if a >= b:
            return 0.0
        if math.isfinite(b):
            return _quad(f, a, b, 1e-10)[0]
        return _quad(f, a, a + 1.0, 1e-10)[0] + _quad(f, a + 1.0, INF, 1e-10)[0]
    if not comp.isotropic:
        raise NotImplementedError("half-space masses need an isotropic component")
    b = comp.r_max if comp.support_radius is None else min(comp.r_max, comp.support_radius)
    a = max(h, comp.r_min)
    if a >= b:
        return 0.0
    return _radial_halfspace(lambda r: comp.profile(r)[0], comp.dim, h, a, b)


# ---------------------------------------------------------------------------
# measure spec


@dataclass(frozen=True)
class LevyMeasureSpec:
    components: tuple = ()
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        for c in self.components:
            if c.dim != self.dim:
                raise InadmissibleMeasure("component dimension differs from the measure dimension")
        for c in self.components:
            if not c.has_density:
                continue  # a finite jump law without density is always admissible
            if not math.isfinite(c.moment(2.0, 0.0, 1.0) + c.mass(1.0, INF)):
                raise InadmissibleMeasure(f"{type(c).__name__} violates the integrability of min(1, |z|^2)")

    @property
    def isotropic(self):
        return all(c.isotropic for c in self.components)

    @property
    def monotone(self):
        return all(c.isotropic and c.monotone for c in self.components)

    @property
    def symmetric(self):
        return all(c.symmetric for c in self.components)

    @property
    def has_density(self):
        return all(c.has_density for c in self.components)

    def mass(self, lo=0.0, hi=INF):
        return float(sum(c.mass(lo, hi) for c in self.components))

    def moment(self, p, lo=0.0, hi=INF):
        return float(sum(c.moment(p, lo, hi) for c in self.components))


def restrict(spec, r_min=0.0, r_max=INF):
    """Restrict every component to ``r_min <= |z| <= r_max`` (intersected with its own window)."""
    comps = [replace(c, r_min=max(c.r_min, r_min), r_max=min(c.r_max, r_max)) for c in spec.components]
    return LevyMeasureSpec(tuple(comps), spec.dim)


def truncated(spec, eps):
    """The measure actually simulated with small-jump cutoff ``eps``."""
    return restrict(spec, r_min=eps)


def stable(alpha, scale=1.0, dim=1, r_min=0.0, r_max=INF):
    return LevyMeasureSpec((IsotropicStable(alpha, scale, dim, r_min, r_max),), dim)


def uniform_jumps(intensity, low=-1.0, high=1.0):
    """1D compound Poisson with Uniform[low, high] jumps."""
    width = high - low

    def dens(pts):
        z = pts[:, 0]
        return np.where((z >= low) & (z <= high), 1.0 / width, 0.0)

    def samp(n, rng):
        return (low + width * rng.random(n))[:, None]

    sym = low == -high
    return CompoundPoisson(intensity, dens, samp, 1, isotropic=sym, monotone=sym, symmetric=sym,
                           support_radius=max(abs(low), abs(high)), label="uniform")


def gaussian_jumps(intensity, sd=1.0, dim=1):
    """Compound Poisson with centred Gaussian jumps."""
    norm_c = (2.0 * math.pi * sd * sd) ** (-dim / 2.0)

    def dens(pts):
        return norm_c * np.exp(-0.5 * np.sum(pts * pts, axis=1) / (sd * sd))

    def samp(n, rng):
        return sd * rng.standard_normal((n, dim))

    return CompoundPoisson(intensity, dens, samp, dim, isotropic=True, monotone=True,
                           symmetric=True, label="gaussian")


def nu_theta(spec, theta):
    """Restriction of ``spec`` to a ball whose first absolute moment is at most ``theta``.

    Returns ``(restricted spec, radius)``.
    """
    def m(r):
        return spec.moment(1.0, 0.0, r)
    if not math.isfinite(m(1e-12)):
        raise InadmissibleMeasure("no ball restriction has a finite first moment (index >= 1)")
    if m(1.0) <= theta:
        return restrict(spec, r_max=1.0), 1.0
    r = optimize.brentq(lambda s: m(s) - theta, 1e-12, 1.0, xtol=1e-14)
    return restrict(spec, r_max=r), r


# ---------------------------------------------------------------------------
# density, overlap, rho


def density_points(spec, pts):
    """Total density at the rows of ``pts``; no checks."""
    out = np.zeros(pts.shape[0])
    for c in spec.components:
        out += c.density(pts)
    return out


def density(spec, z):
    if not spec.has_density:
        raise NoDensity("a component has no density")
    pts = as_points(z, spec.dim)
    if np.any(norms(pts) == 0.0):
        raise SingularPoint("density evaluated at z = 0")
    val = density_points(spec, pts)
    return float(val[0]) if np.ndim(z) == 0 or (np.ndim(z) == 1 and spec.dim > 1) else val


@dataclass(frozen=True)
class QuadratureConfig:
    epsrel: float = 1e-6
    epsrel_multi: float = 1e-3
    mc_samples: int = 1_000_000


def _overlap_1d(spec, x, epsrel):
    def q(z):
        return float(density_points(spec, np.array([[z]]))[0])

    def f(z):
        return min(q(z), q(z - x))

    cuts = {0.0, x, x / 2.0}
    for c in spec.components:
        for r in (c.r_min, c.r_max, getattr(c, "support_radius", None)):
            if r is not None and math.isfinite(r) and r > 0:
                cuts.update({r, -r, x + r, x - r})
    cuts = sorted(cuts)
    total = 0.0
    lo, hi = cuts[0] - 1.0, cuts[-1] + 1.0
    total += _quad(f, -INF, lo, epsrel)[0] + _quad(f, hi, INF, epsrel)[0]
    edges = [lo] + cuts + [hi]
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            total += _quad(f, a, b, epsrel)[0]
    return total


def _overlap_mc(spec, x, n):
    """Monte Carlo overlap for finite measures in d >= 2."""
    m = spec.mass()
    if not math.isfinite(m):
        raise QuadratureFailure("overlap of non-monotone infinite measures in d >= 2 is not supported")
    rng = stream(0, AUX, 2)
    z = _sample_from_spec(spec, n, 0.0, rng)
    q = density_points(spec, z)
    qs = density_points(spec, z - x[None, :])
    return m * float(np.mean(np.minimum(1.0, qs / q)))


def overlap_mass(spec, x, quadrature=None):
    """Mass of the overlap measure: integral of min(q(z), q(z - x)) over z.

    Returns ``inf`` when ``x = 0`` and the measure has infinite mass.
    """
    quadrature = quadrature or QuadratureConfig()
    x = np.asarray(x, dtype=float).reshape(spec.dim)
    h = float(norms(x[None, :])[0])
    if h == 0.0:
        return spec.mass()
    if spec.monotone:
        # min(q(z), q(z-x)) = q at the point farther from the origin; the two half-spaces
        # split by the bisecting hyperplane carry equal overlap.
        return 2.0 * sum(c.halfspace_mass(h / 2.0) for c in spec.components)
    if spec.dim == 1:
        return _overlap_1d(spec, float(x[0]), quadrature.epsrel)
    return _overlap_mc(spec, x, quadrature.mc_samples)


def _lattice_directions(spec, n_directions):
    d = spec.dim
    if spec.isotropic:
        e = np.zeros((1, d))
        e[0, 0] = 1.0
        return e
    if d == 1:
        return np.array([[1.0]]) if spec.symmetric else np.array([[1.0], [-1.0]])
    rng = stream(0, AUX, 3)
    return _unit_directions(n_directions, d, rng)


def j_profile(spec, radii, n_radial=200, n_directions=32, quadrature=None):
    """J at each radius in ``radii`` plus metadata.

    For monotone isotropic measures J(r) is the overlap at |x| = r.  Otherwise the
    infimum is taken over a (direction x radius) lattice and is an upper bound.
    """
    radii = np.asarray(radii, dtype=float).reshape(-1)
    if np.any(radii <= 0):
        raise ValueError("J needs positive radii")
    if spec.monotone:
        vals = np.array([overlap_mass(spec, np.r_[r, np.zeros(spec.dim - 1)], quadrature) for r in radii])
        return vals, {"exact": True, "method": "monotone reduction"}
    rmax = radii.max()
    lattice = np.unique(np.concatenate([radii, np.linspace(rmax / n_radial, rmax, n_radial)]))
    dirs = _lattice_directions(spec, n_directions)
    ov = np.array([[overlap_mass(spec, r * e, quadrature) for e in dirs] for r in lattice])
    run_min = np.minimum.accumulate(ov.min(axis=1))
    vals = run_min[np.searchsorted(lattice, radii)]
    return vals, {"exact": False, "method": "lattice minimum (upper bound)",
                  "n_radii": int(lattice.size), "n_directions": int(dirs.shape[0])}


def J(spec, r, **kw):
    """Overlap infimum over shifts of size at most ``r``."""
    return float(j_profile(spec, [r], **kw)[0][0])


def rho(spec, x, z):
    """Control ratio min(q(z), q(z - x)) / q(z), vectorized over rows."""
    zp = as_points(z, spec.dim)
    xp = np.broadcast_to(as_points(x, spec.dim), zp.shape)
    if np.any(norms(zp) == 0.0):
        raise SingularPoint("rho evaluated at z = 0")
    out = coupling_ratio(spec, spec, xp, zp)
    return float(out[0]) if out.size == 1 else out


def coupling_ratio(coupled, full, x, z):
    """min(q_c(z), q_c(z - x)) / q(z) with q_c the coupled sub-density; 0 where q(z) = 0."""
    qz = density_points(full, z)
    qc = density_points(coupled, z) if coupled is not full else qz
    qs = density_points(coupled, z - x)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(qz > 0, np.minimum(qc, qs) / qz, 0.0)
    return np.clip(r, 0.0, 1.0)


# ---------------------------------------------------------------------------
# jump streams


@dataclass(frozen=True)
class JumpSimConfig:
    epsilon_cutoff: float = 1e-3
    compensate: bool = True
    max_jumps_per_horizon: int = 10_000_000

    def __post_init__(self):
        if not 0.0 < self.epsilon_cutoff <= 1.0:
            raise ValueError("epsilon_cutoff must lie in (0, 1]")
        if self.max_jumps_per_horizon < 1:
            raise ValueError("max_jumps_per_horizon must be positive")


@dataclass
class Jumps:
    times: np.ndarray
    sizes: np.ndarray
    component: np.ndarray = field(default=None)

    def __len__(self):
        return self.times.size


def jump_rate(spec, eps):
    """Rate of the jump stream actually generated (compound Poisson candidates included)."""
    rate = 0.0
    for c in spec.components:
        rate += c.intensity if isinstance(c, CompoundPoisson) else c.mass(eps, INF)
    return rate


def _sample_component(c, n, eps, rng):
    if isinstance(c, CompoundPoisson):
        return c.sample_window(n, rng)
    return c.sample(n, eps, rng)


def _sample_from_spec(spec, n, eps, rng):
    masses = np.array([c.mass(eps, INF) for c in spec.components])
    counts = rng.multinomial(n, masses / masses.sum())
    parts = [_sample_component(c, k, eps, rng) for c, k in zip(spec.components, counts)]
    z = np.concatenate(parts)
    return z[rng.permutation(n)]


def compensator_drift(spec, cfg):
    """-integral of z over eps <= |z| <= 1 (zero vector when compensation is off)."""
    out = np.zeros(spec.dim)
    if not cfg.compensate:
        return out
    eps = cfg.epsilon_cutoff
    for k, c in enumerate(spec.components):
        if c.symmetric:
            continue
        if spec.dim == 1:
            def f(z):
                return z * float(c.density(np.array([[z]]))[0])
            lo, hi = max(eps, c.r_min), min(1.0, c.r_max)
            if lo < hi:
                out[0] -= _quad(f, lo, hi, 1e-10)[0] + _quad(f, -hi, -lo, 1e-10)[0]
        elif isinstance(c, CompoundPoisson):
            z = c.sample_window(400_000, stream(0, AUX, 4, k))
            r = norms(z)
            keep = (r >= max(eps, c.r_min)) & (r <= min(1.0, c.r_max))
            out -= c.intensity * np.mean(np.where(keep[:, None], z, 0.0), axis=0)
        else:
            raise NotImplementedError("compensator of a non-symmetric multivariate user density")
    return out


def sample_jumps(spec, cfg, horizon, rng):
    """Jumps of size >= eps on [0, horizon] and the compensator drift.

    Each component contributes an independent Poisson stream; compound Poisson
    candidates below the cutoff are thinned away.
    """
    eps = cfg.epsilon_cutoff
    expected = jump_rate(spec, eps) * horizon
    if expected > cfg.max_jumps_per_horizon:
        raise BudgetExceeded(f"expected {expected:.3g} jumps exceeds budget {cfg.max_jumps_per_horizon}")
    ts, zs, ks = [], [], []
    for k, c in enumerate(spec.components):
        rate = c.intensity if isinstance(c, CompoundPoisson) else c.mass(eps, INF)
        n = int(rng.poisson(rate * horizon))
        t = rng.random(n) * horizon
        z = _sample_component(c, n, eps, rng)
        if isinstance(c, CompoundPoisson):
            r = norms(z)
            keep = (r >= max(eps, c.r_min)) & (r <= c.r_max)
            t, z = t[keep], z[keep]
        ts.append(t)
        zs.append(z)
        ks.append(np.full(t.size, k, dtype=np.int64))
    if ts:
        times = np.concatenate(ts)
        sizes = np.concatenate(zs).reshape(-1, spec.dim)
        comp = np.concatenate(ks)
        order = np.argsort(times, kind="stable")
        times, sizes, comp = times[order], sizes[order], comp[order]
    else:
        times, sizes, comp = np.zeros(0), np.zeros((0, spec.dim)), np.zeros(0, dtype=np.int64)
    return Jumps(times, sizes, comp), compensator_drift(spec, cfg)


# ---------------------------------------------------------------------------
# sigma minorant


@dataclass(frozen=True)
class PowerSigma:
    """sigma(r) = c0 r^(1 - alpha) with g1(r) = r^alpha / (c0 alpha)."""
    c0: float
    alpha: float
    grid: tuple = field(default=(), repr=False)
    rhs: tuple = field(default=(), repr=False)

    def __call__(self, r):
        return self.c0 * np.asarray(r, dtype=float) ** (1.0 - self.alpha)

    def g1(self, r):
        return np.asarray(r, dtype=float) ** self.alpha / (self.c0 * self.alpha)

    def g1_prime(self, r):
        return 1.0 / self(r)


def fit_overlap_exponent(spec, kappa=1.0, quadrature=None):
    """Exponent a with J(s) ~ s^-a, fitted on s in [1e-3, 1e-1] * min(1, kappa)."""
    s = np.geomspace(1e-3, 1e-1, 9) * min(1.0, kappa)
    j, _ = j_profile(spec, s, quadrature=quadrature)
    if np.any(j <= 0):
        return 0.0
    slope = np.polyfit(np.log(s), np.log(j), 1)[0]
    return float(-slope)


def sigma_grid(l0, kappa, n_grid=400):
    g = np.geomspace(2.0 * l0 * 1e-4, 2.0 * l0, n_grid)
    if kappa < 2.0 * l0:
        g = np.unique(np.r_[g, kappa])
    return g


def sigma_minorant(spec, kappa, l0, alpha=None, n_grid=400, safety=0.95, quadrature=None):
    """Largest c0 r^(1-alpha) below J(kappa ^ r)(kappa ^ r)^2 / (2r) on a grid over (0, 2 l0].

    ``alpha`` defaults to the fitted overlap exponent clipped to [0.05, 0.95].
    """
    if l0 <= 0 or kappa <= 0:
        raise ValueError("sigma_minorant needs l0 > 0 and kappa > 0")
    if alpha is None:
        alpha = float(np.clip(fit_overlap_exponent(spec, kappa, quadrature), 0.05, 0.95))
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    r = sigma_grid(l0, kappa, n_grid)
    s = np.minimum(kappa, r)
    j, _ = j_profile(spec, s, quadrature=quadrature)
    rhs = j * s * s / (2.0 * r)
    if not np.all(np.isfinite(rhs)) or rhs.min() <= 0:
        raise DegenerateOverlap("J vanishes on the sigma grid")
    c0 = safety * float(np.min(rhs / r ** (1.0 - alpha)))
    return PowerSigma(c0, alpha, tuple(r), tuple(rhs))
