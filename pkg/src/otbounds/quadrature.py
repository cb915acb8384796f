"""Tail-accurate CDF, survival function and quantiles for 1D log-concave laws.

A law with density proportional to ``exp(-U(t))`` on ``[lower, inf)`` is cut
into panels on which ``U`` moves by at most one unit.  Panel masses are
integrated in shifted form (Gauss-Legendre, refined adaptively until two
orders agree), and cumulated in log space from both ends, so that ``log F``
and ``log (1 - F)`` keep full relative accuracy far into either tail.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import logsumexp

__all__ = ["LogConcaveLine", "QuadratureError", "potential_line", "radial_line"]

_GL_LO = leggauss(20)
_GL_HI = leggauss(40)


class QuadratureError(RuntimeError):
    """Raised when panel integration or tail truncation fails."""


def _gl_logint(U, a, b, rule=_GL_HI):
    """log of int_a^b exp(-U) for arrays of intervals, shifted per interval."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    nodes, weights = rule
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    t = mid[..., None] + half[..., None] * nodes
    u = U(t)
    shift = np.min(u, axis=-1)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        s = np.sum(weights * np.exp(-(u - shift[..., None])), axis=-1) * half
    with np.errstate(divide="ignore"):
        return np.log(s) - shift


class LogConcaveLine:
    """Log-space distribution functions for ``exp(-U)`` on ``[lower, inf)``.

    Parameters
    ----------
    U : callable
        Vectorised negative log-density up to an additive constant.  Must be
        convex; may be ``+inf`` at ``lower``.
    lower : float
        Left end of the support (``-inf`` for the whole line).
    mode : float
        A minimiser of ``U``.
    kinks : sequence of float
        Points where ``U`` is not smooth; they become panel nodes.
    truncation : float
        Panels are laid out until ``U - min U`` exceeds this value.
    """

    def __init__(self, U, *, lower=-np.inf, mode=0.0, kinks=(), truncation=1500.0,
                 max_step=0.5, max_panels=200_000):
        self.U = U
        self.lower = float(lower)
        self.mode = float(mode)
        self.truncation = float(truncation)
        kinks = sorted(float(k) for k in kinks)
        u_mode = self._u1(self.mode)
        if not np.isfinite(u_mode):
            raise QuadratureError("potential is not finite at the mode")
        self.u_min = u_mode

        right = self._walk(+1, kinks, max_step, max_panels)
        left = self._walk(-1, kinks, max_step, max_panels)
        nodes = np.concatenate([left[::-1], [self.mode], right])
        self.nodes, logm = self._refine(nodes)

        self.log_mass = logm
        self.log_z = float(logsumexp(logm))
        # log F and log S at every node, normalised
        cum_left = np.logaddexp.accumulate(logm)
        cum_right = np.logaddexp.accumulate(logm[::-1])[::-1]
        self.logF_nodes = np.concatenate([[-np.inf], cum_left]) - self.log_z
        self.logS_nodes = np.concatenate([cum_right, [-np.inf]]) - self.log_z

    # ------------------------------------------------------------------ build
    def _u1(self, t):
        return float(np.asarray(self.U(np.array([t], dtype=float)))[0])

    def _walk(self, direction, kinks, max_step, max_panels):
        out = []
        x = self.mode
        ux = self.u_min
        h = min(1e-2 * (1.0 + abs(x)), max_step)
        lower_finite = np.isfinite(self.lower) and np.isfinite(self._u1(self.lower))
        while ux - self.u_min < self.truncation:
            if len(out) > max_panels:
                raise QuadratureError("too many panels; is U convex and growing?")
            if direction < 0 and not lower_finite and x - self.lower < 1e-250:
                break
            nxt = x + direction * h
            if direction < 0 and nxt <= self.lower:
                if lower_finite:
                    nxt = self.lower
                else:
                    # singular end point: approach geometrically
                    nxt = self.lower + 0.5 * (x - self.lower)
            between = [k for k in kinks if (k - x) * direction > 0 and (nxt - k) * direction > 0]
            if between:
                nxt = between[0] if direction > 0 else between[-1]
            un = self._u1(nxt)
            if not np.isfinite(un) or un - ux > 1.0:
                h = 0.5 * min(h, abs(nxt - x))
                if h < 1e-300:
                    raise QuadratureError("step underflow while laying out panels")
                continue
            out.append(nxt)
            if nxt == self.lower:
                break
            if abs(un - ux) < 0.3:
                h = min(1.5 * abs(nxt - x), max_step)
            x, ux = nxt, un
        return np.asarray(out, dtype=float)

    def _refine(self, nodes, tol=1e-14, rounds=30):
        for _ in range(rounds):
            a, b = nodes[:-1], nodes[1:]
            lo = _gl_logint(self.U, a, b, _GL_LO)
            hi = _gl_logint(self.U, a, b, _GL_HI)
            with np.errstate(invalid="ignore"):
                bad = np.abs(np.expm1(lo - hi)) > tol
            bad &= np.isfinite(hi)
            if not bad.any():
                return nodes, hi
            mids = 0.5 * (a[bad] + b[bad])
            nodes = np.sort(np.concatenate([nodes, mids]))
        raise QuadratureError("panel quadrature did not converge")

    # -------------------------------------------------------------- evaluate
    def logpdf(self, t):
        t = np.asarray(t, dtype=float)
        return -self.U(t) - self.log_z

    def _locate(self, t):
        k = np.searchsorted(self.nodes, t, side="right") - 1
        return np.clip(k, 0, len(self.nodes) - 2)

    def _logcdf(self, t):
        t = np.asarray(t, dtype=float)
        k = self._locate(t)
        a = self.nodes[k]
        tt = np.clip(t, self.nodes[0], self.nodes[-1])
        part = np.where(tt > a, _gl_logint(self.U, a, np.maximum(tt, a), _GL_LO), -np.inf)
        out = np.logaddexp(self.logF_nodes[k] + self.log_z, part) - self.log_z
        out = np.where(t < self.nodes[0], -np.inf, out)
        return np.minimum(out, 0.0)

    def _logsf(self, t):
        t = np.asarray(t, dtype=float)
        k = self._locate(t)
        b = self.nodes[k + 1]
        tt = np.clip(t, self.nodes[0], self.nodes[-1])
        part = np.where(tt < b, _gl_logint(self.U, np.minimum(tt, b), b, _GL_LO), -np.inf)
        out = np.logaddexp(self.logS_nodes[k + 1] + self.log_z, part) - self.log_z
        out = np.where(t > self.nodes[-1], -np.inf, out)
        return np.minimum(out, 0.0)

    def logcdf(self, t):
        """Log distribution function; the upper half goes through ``log1p(-sf)``."""
        t = np.asarray(t, dtype=float)
        lc, ls = self._logcdf(t), self._logsf(t)
        with np.errstate(divide="ignore"):
            return np.where(ls < lc, np.log1p(-np.exp(ls)), lc)

    def logsf(self, t):
        t = np.asarray(t, dtype=float)
        lc, ls = self._logcdf(t), self._logsf(t)
        with np.errstate(divide="ignore"):
            return np.where(lc < ls, np.log1p(-np.exp(lc)), ls)

    def cdf(self, t):
        return np.exp(self.logcdf(t))

    def sf(self, t):
        return np.exp(self.logsf(t))

    def _g(self, t, logp, upper):
        """Signed log-space residual, increasing in ``t``; also returns log of the tail used."""
        out = np.empty_like(t)
        tail = np.empty_like(t)
        if upper.any():
            ls = self._logsf(t[upper])
            out[upper] = logp[upper] - ls
            tail[upper] = ls
        low = ~upper
        if low.any():
            lc = self._logcdf(t[low])
            out[low] = lc - logp[low]
            tail[low] = lc
        return out, tail

    def quantile_log(self, logp, upper, xtol=1e-8, newton_steps=2):
        """Solve ``log F(t) = logp`` (or ``log S(t) = logp`` where ``upper``).

        The root is bracketed between panel nodes, located by safeguarded
        Newton steps, bisected to width ``xtol`` (relative above unit scale)
        and finally polished by ``newton_steps`` Newton steps in log space.
        """
        logp = np.atleast_1d(np.asarray(logp, dtype=float))
        upper = np.broadcast_to(np.asarray(upper, dtype=bool), logp.shape).copy()
        if np.any(logp > 0) or np.any(np.isnan(logp)):
            raise ValueError("log-probabilities must be <= 0")
        n = len(self.nodes)
        kF = np.searchsorted(self.logF_nodes, logp, side="left")
        kS = n - np.searchsorted(self.logS_nodes[::-1], logp, side="left")
        hi_idx = np.clip(np.where(upper, kS, kF), 1, n - 1)
        lo = self.nodes[hi_idx - 1].copy()
        hi = self.nodes[hi_idx].copy()
        with np.errstate(invalid="ignore"):
            tF = np.interp(logp, self.logF_nodes, self.nodes)
            tS = np.interp(logp, self.logS_nodes[::-1], self.nodes[::-1])
        t = np.clip(np.where(upper, tS, tF), lo, hi)

        def newton(t, lo, hi, logp, upper):
            gt, tail = self._g(t, logp, upper)
            slope = np.exp(self.logpdf(t) - tail)
            lo = np.where(gt < 0, np.maximum(lo, t), lo)
            hi = np.where(gt > 0, np.minimum(hi, t), hi)
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = t - gt / slope
            ok = np.isfinite(cand) & (cand >= lo) & (cand <= hi)
            return np.where(ok, cand, 0.5 * (lo + hi)), lo, hi

        for _ in range(4):
            t, lo, hi = newton(t, lo, hi, logp, upper)
        # tight bracket around the Newton iterate where it is valid
        w = 0.5 * xtol * np.maximum(1.0, np.abs(t))
        ga, _ = self._g(np.maximum(t - w, lo), logp, upper)
        gb, _ = self._g(np.minimum(t + w, hi), logp, upper)
        ok = (ga <= 0) & (gb >= 0)
        lo = np.where(ok, np.maximum(t - w, lo), lo)
        hi = np.where(ok, np.minimum(t + w, hi), hi)

        active = np.flatnonzero(hi - lo > xtol * np.maximum(1.0, np.abs(hi)))
        while active.size:
            mid = 0.5 * (lo[active] + hi[active])
            gm, _ = self._g(mid, logp[active], upper[active])
            right = gm < 0
            lo[active[right]] = mid[right]
            hi[active[~right]] = mid[~right]
            keep = hi[active] - lo[active] > xtol * np.maximum(1.0, np.abs(hi[active]))
            active = active[keep]
        t = 0.5 * (lo + hi)
        lo = lo - xtol * np.maximum(1.0, np.abs(lo))
        hi = hi + xtol * np.maximum(1.0, np.abs(hi))
        for _ in range(newton_steps):
            t, lo, hi = newton(t, lo, hi, logp, upper)
        return t

    def ppf(self, p):
        """Quantile at probability ``p`` (choosing the accurate tail)."""
        p = np.asarray(p, dtype=float)
        upper = p > 0.5
        with np.errstate(divide="ignore"):
            logp = np.where(upper, np.log1p(-p), np.log(p))
        return self.quantile_log(logp, upper).reshape(p.shape)


def _mode_1d(U, kinks=()):
    from scipy import optimize

    cands = [0.0, *kinks]
    best = min(cands, key=lambda t: float(U(np.array([t]))[0]))
    # expand a bracket around the best candidate, then refine
    step = 1.0
    lo, hi = best - step, best + step
    while float(U(np.array([lo]))[0]) < float(U(np.array([best]))[0]):
        lo -= step
        step *= 2
    step = 1.0
    while float(U(np.array([hi]))[0]) < float(U(np.array([best]))[0]):
        hi += step
        step *= 2
    res = optimize.minimize_scalar(lambda t: float(U(np.array([t]))[0]), bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-12})
    m = res.x
    for k in kinks:
        if float(U(np.array([k]))[0]) <= float(U(np.array([m]))[0]):
            m = k
    return float(m)


def _cached(key, build):
    cache = key[1].cache
    if key[0] not in cache:
        cache[key[0]] = build()
    return cache[key[0]]


def potential_line(pot, **line_kw):
    """LogConcaveLine for a one-dimensional Potential (cached per object and options)."""
    if pot.d != 1:
        raise ValueError("potential_line needs a one-dimensional potential")

    def build():
        def U(t):
            t = np.asarray(t, dtype=float)
            return np.asarray(pot.value(t.reshape(-1, 1)), dtype=float).reshape(t.shape)

        kinks = tuple(getattr(pot, "kinks", ()))
        mode = 0.0 if pot.centered and pot.radial is not None else _mode_1d(U, kinks)
        return LogConcaveLine(U, mode=mode, kinks=kinks, **line_kw)

    return _cached((("line",) + tuple(sorted(line_kw.items())), pot), build)


def radial_line(pot, f=None):
    """LogConcaveLine of |Y| for a radially symmetric Potential.

    The law of the radius has density proportional to
    ``r^(d-1) exp(-f(r))`` on ``[0, inf)``.
    """

    def build():
        from scipy import optimize

        d = pot.d
        if f is not None:
            prof = f
        elif pot.radial is not None:
            prof = pot.radial.f
        else:
            e1 = np.zeros(d)
            e1[0] = 1.0

            def prof(r):
                r = np.asarray(r, dtype=float)
                return np.asarray(pot.value(r.reshape(-1, 1) * e1), dtype=float).reshape(r.shape)

        if d == 1:
            def U(r):
                return prof(np.asarray(r, dtype=float))
            mode = 0.0
        else:
            def U(r):
                r = np.asarray(r, dtype=float)
                with np.errstate(divide="ignore"):
                    return prof(r) - (d - 1) * np.log(r)

            res = optimize.minimize_scalar(lambda lr: float(U(np.array([np.exp(lr)]))[0]),
                                           bounds=(-30.0, 30.0), method="bounded",
                                           options={"xatol": 1e-12})
            mode = float(np.exp(res.x))
        return LogConcaveLine(U, lower=0.0, mode=mode)

    return _cached(("radial", pot), build)
