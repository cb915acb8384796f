"""Log-concave target measures ``exp(-V) dx`` as evaluator bundles.

Potentials are known only up to an additive constant.  Every evaluator takes
points of shape ``(n, d)`` (a single point of shape ``(d,)`` is accepted and
the result squeezed back).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .report import BoundReport

__all__ = [
    "Potential",
    "RadialForm",
    "make_gaussian",
    "make_laplace_product",
    "make_power_potential",
    "hessian_band_check",
    "isotropize",
    "is_radial",
]


def as_points(x, d):
    """Return ``(points, squeeze)`` with ``points`` of shape ``(n, d)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and d == 1 and x.shape[0] != 1:
        return x[:, None], False
    if x.ndim == 1:
        if x.shape[0] != d:
            raise ValueError(f"expected a point of dimension {d}, got shape {x.shape}")
        return x[None, :], True
    if x.ndim == 0:
        if d != 1:
            raise ValueError(f"scalar given for dimension {d}")
        return x.reshape(1, 1), True
    if x.shape[-1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {x.shape}")
    return x.reshape(-1, d), False


@dataclass(frozen=True, eq=False)
class RadialForm:
    """``V(x) = f(|x|)`` with closed-form derivatives.

    ``df_over_r`` is ``f'(r) / r`` (the tangential Hessian eigenvalue), given
    separately so that it stays finite at ``r = 0``.
    """

    f: Callable
    df: Callable
    d2f: Callable
    df_over_r: Callable


@dataclass(frozen=True, eq=False)
class Potential:
    """A target measure ``exp(-V) dx`` on ``R^d``.

    ``c1`` and ``c2`` declare the Hessian band
    ``c2 / (d + |x|) Id <= Hess V(x) <= c1 Id``; ``alpha`` and ``beta`` are
    declared exponential / Gaussian concentration constants, when known.
    """

    d: int
    value: Callable
    gradient: Callable
    hessian: Callable | None
    c1: float | None = None
    c2: float | None = None
    alpha: float | None = None
    beta: float | None = None
    centered: bool = False
    isotropic: bool = False
    family: str = "custom"
    params: dict = field(default_factory=dict)
    radial: RadialForm | None = None
    marginal: "Potential | None" = None
    nonsmooth: Callable | None = None
    band_range: tuple[float, float] | None = None
    kinks: tuple = ()
    cache: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def smooth(self):
        return self.nonsmooth is None

    def V(self, x):
        pts, sq = as_points(x, self.d)
        out = np.asarray(self.value(pts), dtype=float)
        return out[0] if sq else out

    def nonsmooth_mask(self, x):
        pts, sq = as_points(x, self.d)
        if self.nonsmooth is None:
            out = np.zeros(len(pts), dtype=bool)
        else:
            out = np.asarray(self.nonsmooth(pts), dtype=bool)
        return out[0] if sq else out

    def grad(self, x):
        """Gradient of ``V``; rows at non-smooth points are NaN."""
        pts, sq = as_points(x, self.d)
        out = np.array(self.gradient(pts), dtype=float)
        if self.nonsmooth is not None:
            out[self.nonsmooth_mask(pts)] = np.nan
        return out[0] if sq else out

    def hess(self, x):
        """Hessian of ``V`` as ``(n, d, d)``; NaN at non-smooth points."""
        if self.hessian is None:
            raise NotImplementedError(f"{self.family} potential has no Hessian evaluator")
        pts, sq = as_points(x, self.d)
        out = np.array(self.hessian(pts), dtype=float)
        if self.nonsmooth is not None:
            out[self.nonsmooth_mask(pts)] = np.nan
        return out[0] if sq else out

    def hessian_eigenvalues(self, x):
        """Ascending Hessian eigenvalues, closed form for radial families."""
        pts, sq = as_points(x, self.d)
        if self.radial is not None:
            r = np.linalg.norm(pts, axis=1)
            rad = self.radial.d2f(r)
            tan = self.radial.df_over_r(r)
            ev = np.column_stack([rad] + [tan] * (self.d - 1))
            ev = np.sort(ev, axis=1)
        else:
            h = self.hess(pts)
            ev = np.full((len(pts), self.d), np.nan)
            ok = np.isfinite(h).all(axis=(1, 2))
            if ok.any():
                ev[ok] = np.linalg.eigvalsh(h[ok])
        return ev[0] if sq else ev

    def describe(self):
        return {
            "family": self.family,
            "d": self.d,
            **self.params,
            "c1": self.c1,
            "c2": self.c2,
            "alpha": self.alpha,
            "beta": self.beta,
            "isotropic": self.isotropic,
        }


def _radial_potential(d, form, **kw):
    def value(x):
        return form.f(np.linalg.norm(x, axis=1))

    def gradient(x):
        r = np.linalg.norm(x, axis=1)
        return form.df_over_r(r)[:, None] * x

    def hessian(x):
        r = np.linalg.norm(x, axis=1)
        g = form.df_over_r(r)
        h = form.d2f(r)
        safe = np.where(r > 0, r, 1.0)
        u = x / safe[:, None]
        out = g[:, None, None] * np.eye(d)
        out = out + (h - g)[:, None, None] * u[:, :, None] * u[:, None, :]
        return out

    return Potential(d=d, value=value, gradient=gradient, hessian=hessian, radial=form, **kw)


def make_gaussian(d, sigma=1.0):
    """Centered Gaussian ``N(0, sigma^2 Id)``; ``sigma = 1`` is the source measure."""
    d = int(d)
    if d < 1:
        raise ValueError("dimension must be >= 1")
    sigma = float(sigma)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    k = 1.0 / sigma**2
    form = RadialForm(
        f=lambda r: 0.5 * k * r**2,
        df=lambda r: k * r,
        d2f=lambda r: np.full_like(np.asarray(r, dtype=float), k),
        df_over_r=lambda r: np.full_like(np.asarray(r, dtype=float), k),
    )
    return _radial_potential(
        d, form,
        # constant Hessian k: the tightest band constant is c2 = d k
        c1=k, c2=d * k, beta=k,
        centered=True, isotropic=sigma == 1.0,
        family="gaussian", params={"sigma": sigma},
        band_range=(0.0, np.inf),
    )


_SQRT2 = np.sqrt(2.0)


def make_laplace_product(d):
    """Product of unit-variance symmetric exponential laws, density ``prod (1/sqrt2) exp(-sqrt2 |x_i|)``.

    The Hessian vanishes off the coordinate hyperplanes, so the strict band
    fails (``c2 = 0``); ``c1`` is infinite because of the kinks.
    """
    d = int(d)
    if d < 1:
        raise ValueError("dimension must be >= 1")

    def value(x):
        return _SQRT2 * np.sum(np.abs(x), axis=1)

    def gradient(x):
        return _SQRT2 * np.sign(x)

    def hessian(x):
        return np.zeros((len(x), d, d))

    def nonsmooth(x):
        return np.any(x == 0.0, axis=1)

    marginal = None if d == 1 else make_laplace_product(1)
    return Potential(
        d=d, value=value, gradient=gradient, hessian=hessian,
        c1=np.inf, c2=0.0, alpha=_SQRT2,
        centered=True, isotropic=True,
        family="laplace-product", params={},
        marginal=marginal, nonsmooth=nonsmooth,
        kinks=(0.0,) if d == 1 else (),
    )


def _power_second_moment(d, p, a):
    """E|Y|^2 for the radial law proportional to r^(d-1) exp(-a (d + r^2)^(p/2))."""
    base = d ** (p / 2)
    # beyond R the integrands are below exp(-800) relative to the mode
    R = np.sqrt((800.0 / a + base) ** (2 / p) - d)
    cuts = R * np.array([0.0, 1e-3, 1e-2, 0.05, 0.2, 0.5, 1.0])

    def w(r, k):
        return r**k * np.exp(-a * ((d + r * r) ** (p / 2) - base))

    def total(k):
        return sum(integrate.quad(w, lo, hi, args=(k,), epsabs=0, epsrel=1e-13, limit=200)[0]
                   for lo, hi in zip(cuts[:-1], cuts[1:]))

    return total(d + 1) / total(d - 1)


def power_isotropic_scale(d, p):
    """Scale ``a`` making ``a (d + |x|^2)^(p/2)`` isotropic (E|Y|^2 = d)."""
    if p == 2.0:
        return 0.5
    g = lambda la: np.log(_power_second_moment(d, p, np.exp(la))) - np.log(d)
    return float(np.exp(optimize.brentq(g, -12.0, 12.0, xtol=1e-14, rtol=1e-14)))


def make_power_potential(d, p, a=None):
    """``V(x) = a (d + |x|^2)^(p/2)``, 1 < p <= 2, isotropic by default.

    Both Hessian eigenvalues are positive and decay like ``|x|^(p-2)``, which
    dominates ``c2 / (d + |x|)`` for every ``p > 1``.
    """
    d = int(d)
    p = float(p)
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if not p > 1.0:
        raise ValueError("p must exceed 1: the lower Hessian band fails at infinity for p <= 1")
    if p > 2.0:
        raise ValueError("p must be <= 2: the Hessian is unbounded above for p > 2")
    isotropic = a is None
    a = power_isotropic_scale(d, p) if a is None else float(a)

    def f(r):
        return a * (d + r * r) ** (p / 2)

    def df(r):
        return a * p * r * (d + r * r) ** (p / 2 - 1)

    def df_over_r(r):
        r = np.asarray(r, dtype=float)
        return a * p * (d + r * r) ** (p / 2 - 1)

    def d2f(r):
        r = np.asarray(r, dtype=float)
        return a * p * (d + r * r) ** (p / 2 - 2) * (d + (p - 1) * r * r)

    form = RadialForm(f=f, df=df, d2f=d2f, df_over_r=df_over_r)
    c1 = a * p * d ** (p / 2 - 1)
    # tightest c2 with c2 / (d + r) <= f''(r): minimise (d + r) f''(r) on r >= 0
    band = lambda lr: (d + np.exp(lr)) * d2f(np.exp(lr))
    grid = np.linspace(-12, 12, 2401)
    i = int(np.argmin(band(grid)))
    res = optimize.minimize_scalar(band, bounds=(grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]),
                                   method="bounded", options={"xatol": 1e-12})
    c2 = float(min(res.fun, band(grid).min(), d * d2f(0.0)))
    return _radial_potential(
        d, form, c1=c1, c2=c2,
        centered=True, isotropic=isotropic,
        family="power", params={"p": p, "a": a},
        band_range=(0.0, np.inf),
    )


def is_radial(pot, n_checks=16, seed=0, rtol=1e-10):
    """Spot-check ``V(Rx) == V(x)`` for random rotations ``R``."""
    if pot.d == 1:
        x = np.linspace(0.1, 5.0, n_checks)
        v1, v2 = pot.V(x[:, None]), pot.V(-x[:, None])
        return bool(np.allclose(v1, v2, rtol=rtol, atol=rtol))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_checks, pot.d)) * rng.uniform(0.2, 4.0, (n_checks, 1))
    y = rng.standard_normal((n_checks, pot.d))
    y *= (np.linalg.norm(x, axis=1) / np.linalg.norm(y, axis=1))[:, None]
    v1, v2 = pot.V(x), pot.V(y)
    return bool(np.allclose(v1, v2, rtol=rtol, atol=rtol * (1 + np.abs(v1).max())))


def hessian_band_check(pot, points, tol=1e-10):
    """Check ``c2 / (d + |x|) <= lambda_min`` and ``lambda_max <= c1`` at ``points``.

    ``points`` is a SampleBatch or an ``(n, d)`` array.  The band is strict
    only when ``c2 > 0``; a declared ``c2 = 0`` fails.
    """
    t0 = time.perf_counter()
    if pot.hessian is None:
        raise ValueError("potential has no Hessian evaluator")
    pts = getattr(points, "points", points)
    pts, _ = as_points(pts, pot.d)
    smooth = ~pot.nonsmooth_mask(pts)
    notes = []
    if not smooth.all():
        notes.append(f"{int((~smooth).sum())} non-smooth points skipped")
    P = pts[smooth]
    H = pot.hess(P)
    asym = np.abs(H - np.swapaxes(H, 1, 2)).max(initial=0.0)
    if asym > 1e-8 * (1.0 + np.abs(H).max(initial=0.0)):
        raise ValueError(f"Hessian evaluator is not symmetric (max asymmetry {asym:.3g})")
    ev = np.linalg.eigvalsh(H) if len(P) else np.zeros((0, pot.d))
    c1 = np.inf if pot.c1 is None else pot.c1
    c2 = 0.0 if pot.c2 is None else pot.c2
    r = np.linalg.norm(P, axis=1)
    upper = c1 - ev[:, -1] if len(P) else np.array([])
    lower = ev[:, 0] - c2 / (pot.d + r) if len(P) else np.array([])
    margins = np.minimum(upper, lower)
    worst = int(np.argmin(margins)) if len(P) else None
    ok = bool(np.all(upper >= -tol) and np.all(lower >= -tol))
    if not c2 > 0:
        notes.append("declared c2 = 0: the strict lower band does not hold")
        ok = False
    return BoundReport(
        name="hessian_band",
        statement="c2/(d+|x|) Id <= Hess V(x) <= c1 Id",
        passed=ok,
        constant=float(c2),
        worst_point=None if worst is None else P[worst].tolist(),
        worst_margin=float(margins[worst]) if worst is not None else float("nan"),
        tolerance=tol,
        n_samples=int(len(P)),
        wall_clock=time.perf_counter() - t0,
        details={
            "c1": float(c1),
            "c2": float(c2),
            "min_upper_margin": float(upper.min(initial=np.inf)),
            "min_lower_margin": float(lower.min(initial=np.inf)),
            "violations": int(np.sum((upper < -tol) | (lower < -tol))),
            "radius_range": [float(r.min(initial=0.0)), float(r.max(initial=0.0))],
            "band_range": pot.band_range,
        },
        notes=notes,
    )


def isotropize(pot, samples):
    """Push ``pot`` forward under ``x -> A (x - m)`` with ``A = Cov^{-1/2}``.

    Mean and covariance are empirical (population convention).  The declared
    band is rescaled conservatively by the extreme singular values of ``A``.
    """
    X = getattr(samples, "points", samples)
    X, _ = as_points(X, pot.d)
    n, d = X.shape
    if n < 10 * d * d:
        raise ValueError(f"need at least 10 d^2 = {10 * d * d} samples, got {n}")
    m = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, bias=True).reshape(d, d)
    w, Q = np.linalg.eigh(cov)
    if w.min() <= 1e-12 * max(w.max(), 1e-300):
        raise ValueError("empirical covariance is singular")
    A = (Q / np.sqrt(w)) @ Q.T
    Ainv = (Q * np.sqrt(w)) @ Q.T
    s_max, s_min = np.sqrt(w.max()), np.sqrt(w.min())  # singular values of A^{-1}

    def back(y):
        return y @ Ainv + m

    def value(y):
        return pot.value(back(y))

    def gradient(y):
        return pot.gradient(back(y)) @ Ainv

    hessian = None
    if pot.hessian is not None:
        def hessian(y):
            return Ainv @ pot.hessian(back(y)) @ Ainv

    nonsmooth = None
    if pot.nonsmooth is not None:
        def nonsmooth(y):
            return pot.nonsmooth(back(y))

    c1 = None if pot.c1 is None else pot.c1 * s_max**2
    c2 = None
    if pot.c2 is not None:
        # d + |A^{-1}y + m| <= (max(1, s_max) + |m|/d) (d + |y|)
        c2 = pot.c2 * s_min**2 / (max(1.0, s_max) + np.linalg.norm(m) / d)
    return replace(
        pot,
        value=value, gradient=gradient, hessian=hessian, nonsmooth=nonsmooth,
        c1=c1, c2=c2,
        # f(A(x - m)) is (1 / s_min)-Lipschitz in x
        alpha=None if pot.alpha is None else pot.alpha * s_min,
        beta=None if pot.beta is None else pot.beta * s_min**2,
        centered=True, isotropic=True, radial=None, marginal=None,
        family=f"{pot.family}+isotropized",
        params={**pot.params, "affine_A": A.tolist(), "affine_m": m.tolist()},
    )
