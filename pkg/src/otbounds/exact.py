"""Exact Brenier maps from the standard Gaussian: 1D, products of 1D, radial.

In one dimension ``T = F_mu^{-1} o Phi``; a radial target reduces to the 1D
problem for the radius, ``T(x) = s(|x|) x / |x|`` where ``s`` matches the
chi law of ``|X|`` to the radial law of ``|Y|``.  Quantiles are solved in the
tail where they are accurate, so the maps stay exact far from the origin.
Derivatives come from the Monge-Ampere balance of the two densities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import gammaln
from scipy.stats import chi, norm

from .measures import as_points, is_radial
from .quadrature import potential_line, radial_line

__all__ = [
    "TransportMap",
    "RadialProfile",
    "cdf_1d",
    "brenier_1d",
    "brenier_product",
    "brenier_radial",
    "linear_map",
    "monge_ampere_residual",
]


@dataclass(frozen=True, eq=False)
class TransportMap:
    """An evaluable map ``x -> T(x)`` on ``R^d``.

    Optional evaluators: ``eig_fn`` (ascending Jacobian eigenvalues),
    ``jac_fn`` (full Jacobian, ``(n, d, d)``), ``branch_fn`` (radial and
    tangential eigenvalues of a radial map).
    """

    d: int
    fn: Callable
    eig_fn: Callable | None = None
    jac_fn: Callable | None = None
    branch_fn: Callable | None = None
    provenance: str = "custom"
    target: object = None
    meta: dict = field(default_factory=dict)

    def __call__(self, x):
        pts, sq = as_points(x, self.d)
        out = np.asarray(self.fn(pts), dtype=float).reshape(len(pts), self.d)
        return out[0] if sq else out

    @property
    def has_jacobian(self):
        return self.eig_fn is not None or self.jac_fn is not None

    def jacobian(self, x):
        if self.jac_fn is None:
            raise NotImplementedError(f"{self.provenance} map has no Jacobian evaluator")
        pts, sq = as_points(x, self.d)
        out = np.asarray(self.jac_fn(pts), dtype=float)
        return out[0] if sq else out

    def eigenvalues(self, x):
        pts, sq = as_points(x, self.d)
        if self.eig_fn is not None:
            out = np.asarray(self.eig_fn(pts), dtype=float)
        elif self.jac_fn is not None:
            J = self.jac_fn(pts)
            out = np.linalg.eigvalsh(0.5 * (J + np.swapaxes(J, 1, 2)))
        else:
            raise NotImplementedError(f"{self.provenance} map has no Jacobian evaluator")
        return out[0] if sq else out

    def opnorm(self, x):
        """``||grad T(x)||_op``: the largest Jacobian eigenvalue (the Jacobian is PSD)."""
        ev = self.eigenvalues(x)
        return np.max(np.abs(ev), axis=-1)

    def logdet(self, x):
        ev = self.eigenvalues(x)
        if np.any(ev <= 0):
            raise ValueError("non-positive Jacobian determinant: map is not locally injective")
        return np.sum(np.log(ev), axis=-1)

    def second_derivative(self, x, e):
        """``e . grad T(x) e``, i.e. the second derivative of the potential along ``e``.

        ``e`` is a unit vector, or ``"radial"`` / ``"tangential"`` for the two
        eigen-branches of a radial map (directions that follow ``x``).
        """
        pts, sq = as_points(x, self.d)
        if isinstance(e, str):
            if self.branch_fn is None:
                if self.d == 1 and self.eig_fn is not None:
                    out = self.eig_fn(pts)[:, 0]
                    return out[0] if sq else out
                raise ValueError("radial/tangential directions need a radial map")
            rad, tan = self.branch_fn(pts)
            out = {"radial": rad, "tangential": tan}[e]
            return out[0] if sq else out
        e = np.asarray(e, dtype=float)
        e = e / np.linalg.norm(e)
        if self.branch_fn is not None:
            rad, tan = self.branch_fn(pts)
            r = np.linalg.norm(pts, axis=1)
            c = np.where(r > 0, pts @ e / np.where(r > 0, r, 1.0), 1.0)
            out = rad * c**2 + tan * (1 - c**2)
        elif self.jac_fn is not None:
            out = np.einsum("i,nij,j->n", e, self.jac_fn(pts), e)
        elif self.d == 1 and self.eig_fn is not None:
            out = self.eig_fn(pts)[:, 0]
        else:
            raise NotImplementedError(f"{self.provenance} map has no Jacobian evaluator")
        return out[0] if sq else out

    @classmethod
    def from_callable(cls, fn, d, jac=None, provenance="custom"):
        return cls(d=d, fn=fn, jac_fn=jac, provenance=provenance)


def linear_map(scale, d):
    """``T(x) = scale * x``; the exact map onto ``N(0, scale^2 Id)`` when ``scale > 0``."""
    scale = float(scale)
    return TransportMap(
        d=d,
        fn=lambda x: scale * x,
        eig_fn=lambda x: np.full((len(x), d), scale),
        jac_fn=lambda x: np.broadcast_to(scale * np.eye(d), (len(x), d, d)).copy(),
        branch_fn=lambda x: (np.full(len(x), scale), np.full(len(x), scale)),
        provenance="linear",
        meta={"scale": scale},
    )


# ------------------------------------------------------------------------ 1D
def cdf_1d(pot, x):
    """Distribution function of a one-dimensional target."""
    return potential_line(pot).cdf(np.asarray(x, dtype=float))


def _map_1d(line, x):
    x = np.asarray(x, dtype=float)
    upper = x > 0
    logp = np.where(upper, norm.logsf(x), norm.logcdf(x))
    return line.quantile_log(logp.ravel(), upper.ravel()).reshape(x.shape)


def _deriv_1d(line, x, t):
    lp = line.logpdf(t)
    if np.any(~np.isfinite(lp)):
        raise ValueError("target density vanishes at a required quantile")
    return np.exp(norm.logpdf(x) - lp)


def brenier_1d(pot, **line_kw):
    """Monotone rearrangement ``T = F^{-1} o Phi`` with ``T' = phi / rho(T)``.

    ``line_kw`` go to the quadrature (e.g. a smaller ``max_step``).
    """
    if pot.d != 1:
        raise ValueError("brenier_1d needs a one-dimensional target")
    line = potential_line(pot, **line_kw)

    def fn(x):
        return _map_1d(line, x[:, 0])[:, None]

    def eig(x):
        t = _map_1d(line, x[:, 0])
        return _deriv_1d(line, x[:, 0], t)[:, None]

    return TransportMap(
        d=1, fn=fn, eig_fn=eig, jac_fn=lambda x: eig(x)[:, :, None],
        provenance="exact-1d", target=pot,
    )


def brenier_product(pot):
    """Coordinatewise 1D maps for a product target (gradient of a separable convex function)."""
    if pot.marginal is None:
        raise ValueError("target is not declared as a product")
    line = potential_line(pot.marginal)
    d = pot.d

    def fn(x):
        return _map_1d(line, x)

    def diag(x):
        return _deriv_1d(line, x, _map_1d(line, x))

    def jac(x):
        D = diag(x)
        return D[:, :, None] * np.eye(d)

    return TransportMap(
        d=d, fn=fn, eig_fn=lambda x: np.sort(diag(x), axis=1), jac_fn=jac,
        provenance="exact-1d-product", target=pot,
    )


# -------------------------------------------------------------------- radial
class RadialProfile:
    """Radial part ``s`` of a radial Brenier map, ``s(0) = 0``, ``s' > 0``.

    ``s`` is tabulated on a log-spaced grid of ``n_grid`` radii spanning the
    chi quantiles ``q_lo`` to ``1 - q_lo`` and held as a monotone cubic
    (``spline``).  ``s`` and ``ds`` themselves are evaluated exactly by
    quantile matching, also off the grid.
    """

    def __init__(self, pot, n_grid=512, q_lo=1e-8, small_r=1e-6):
        self.d = d = pot.d
        self.line = radial_line(pot)
        self.src = chi(d)
        self.small_r = small_r
        # s(r) ~ kappa r near 0, from r^d / (d 2^(d/2-1) Gamma(d/2)) = s^d e^{-U(0)} / (d Z)
        if pot.radial is not None:
            f0 = float(np.asarray(pot.radial.f(np.array([0.0])))[0])
        else:
            f0 = float(pot.V(np.zeros(d)))
        log_kappa = (self.line.log_z + f0 - (d / 2 - 1) * np.log(2) - gammaln(d / 2)) / d
        self.kappa = float(np.exp(log_kappa))
        self.grid = np.geomspace(self.src.ppf(q_lo), self.src.ppf(1 - q_lo), n_grid)
        self.s_grid = self.s(self.grid)
        self.spline = PchipInterpolator(self.grid, self.s_grid, extrapolate=False)
        self.r_max = float(self.grid[-1])

    def s(self, r):
        r = np.asarray(r, dtype=float)
        out = self.kappa * r
        big = r >= self.small_r
        if big.any():
            rb = r[big]
            upper = rb > self.src.median()
            logp = np.where(upper, self.src.logsf(rb), self.src.logcdf(rb))
            out[big] = self.line.quantile_log(logp, upper)
        return out

    def ds(self, r, s=None):
        r = np.asarray(r, dtype=float)
        s = self.s(r) if s is None else s
        out = np.full(r.shape, self.kappa)
        big = r >= self.small_r
        if big.any():
            out[big] = np.exp(self.src.logpdf(r[big]) - self.line.logpdf(s[big]))
        return out

    def s_over_r(self, r, s=None):
        r = np.asarray(r, dtype=float)
        s = self.s(r) if s is None else s
        return np.where(r >= self.small_r, s / np.where(r > 0, r, 1.0), self.kappa)

    def extrapolated(self, r):
        return np.asarray(r) > self.r_max

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.grid, self.s_grid]), delimiter=",",
                   fmt="%.17g", header="r,s", comments="")


def brenier_radial(pot, n_grid=512):
    """Exact map onto a radially symmetric target in any dimension."""
    if not is_radial(pot):
        raise ValueError("potential is not radially symmetric")
    prof = RadialProfile(pot, n_grid=n_grid)
    d = pot.d

    def fn(x):
        r = np.linalg.norm(x, axis=1)
        return prof.s_over_r(r)[:, None] * x

    def branches(x):
        r = np.linalg.norm(x, axis=1)
        s = prof.s(r)
        return prof.ds(r, s), prof.s_over_r(r, s)

    def eig(x):
        rad, tan = branches(x)
        return np.sort(np.column_stack([rad] + [tan] * (d - 1)), axis=1)

    def jac(x):
        r = np.linalg.norm(x, axis=1)
        rad, tan = branches(x)
        u = x / np.where(r > 0, r, 1.0)[:, None]
        return tan[:, None, None] * np.eye(d) + (rad - tan)[:, None, None] * u[:, :, None] * u[:, None, :]

    return TransportMap(
        d=d, fn=fn, eig_fn=eig, jac_fn=jac, branch_fn=branches,
        provenance="exact-radial", target=pot, meta={"profile": prof},
    )


# -------------------------------------------------------------- Monge-Ampere
def _fd_logdet(tmap, pts, rel_step=1e-5):
    n, d = pts.shape
    h = rel_step * (1.0 + np.linalg.norm(pts, axis=1))
    J = np.empty((n, d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        J[:, :, j] = (tmap(pts + h[:, None] * e) - tmap(pts - h[:, None] * e)) / (2 * h[:, None])
    J = 0.5 * (J + np.swapaxes(J, 1, 2))
    sign, logdet = np.linalg.slogdet(J)
    if np.any(sign <= 0):
        raise ValueError("non-positive Jacobian determinant: map is not locally injective")
    return logdet


def monge_ampere_residual(tmap, pot, points, jacobian="analytic"):
    """Residual of ``log gamma(x) = -V(T(x)) + log det grad T(x) + const``.

    Residuals are centred by their median (``V`` carries an unknown constant).
    ``jacobian="fd"`` uses central differences of ``T`` instead of the map's
    own Jacobian, which makes the check independent of the derivative formula.
    """
    pts = getattr(points, "points", points)
    pts, _ = as_points(pts, tmap.d)
    Tx = tmap(pts)
    if jacobian == "analytic":
        logdet = tmap.logdet(pts)
    elif jacobian == "fd":
        logdet = _fd_logdet(tmap, pts)
    else:
        raise ValueError("jacobian must be 'analytic' or 'fd'")
    R = -0.5 * np.sum(pts**2, axis=1) + pot.V(Tx) - logdet
    const = float(np.median(R))
    centered = R - const
    i = int(np.argmax(np.abs(centered)))
    return {
        "max_abs": float(np.abs(centered[i])),
        "constant": const,
        "worst_point": pts[i].tolist(),
        "residuals": centered,
    }
