"""Approximate Brenier maps for targets without a closed-form reduction.

Two solvers: a semi-discrete one (Gaussian source, finitely supported target,
Monte-Carlo cell masses) and an entropic one (Sinkhorn between two samples,
smoothed through its barycentric projection).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.spatial import cKDTree
from scipy.special import logsumexp
from scipy.stats import ks_2samp, kstwo

from .exact import TransportMap
from .measures import as_points
from .sampling import make_rng, sample_gaussian, sample_target

__all__ = [
    "SemiDiscretePlan",
    "ConvergenceError",
    "semidiscrete_solve",
    "sd_map_eval",
    "sd_map",
    "quantize_target",
    "entropic_map",
    "pushforward_test",
]

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Solver stopped at its iteration cap; ``best`` holds the best iterate."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


# ------------------------------------------------------------- semi-discrete
@dataclass(frozen=True, eq=False)
class SemiDiscretePlan:
    """Laguerre-cell transport from ``N(0, Id)`` onto ``sum_i m_i delta_{y_i}``.

    Cell ``i`` is ``{x : |x - y_i|^2/2 - w_i <= |x - y_j|^2/2 - w_j for all j}``.
    """

    points: np.ndarray
    masses: np.ndarray
    weights: np.ndarray
    mass_residual: float
    mc_budget: int
    seed: int | None = None
    converged: bool = True
    n_iter: int = 0
    trace: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return len(self.points)

    @property
    def d(self):
        return self.points.shape[1]

    def assign(self, x):
        return _laguerre(self.points, self.weights, as_points(x, self.d)[0], k=1)[0]

    def __call__(self, x):
        return sd_map_eval(self, x)

    def to_csv(self, path, sidecar=None):
        """Rows ``y_1..y_d, m, w``; residuals and budgets go to a JSON sidecar."""
        cols = [f"y{i}" for i in range(self.d)] + ["m", "w"]
        np.savetxt(path, np.column_stack([self.points, self.masses, self.weights]),
                   delimiter=",", fmt="%.17g", header=",".join(cols), comments="")
        sidecar = sidecar or f"{path}.json"
        meta = {"d": self.d, "n": self.n, "mass_residual": self.mass_residual,
                "mc_budget": self.mc_budget, "seed": self.seed,
                "converged": self.converged, "n_iter": self.n_iter}
        with open(sidecar, "w") as fh:
            json.dump(meta, fh, indent=2)
        return sidecar

    @classmethod
    def from_csv(cls, path, sidecar=None):
        with open(sidecar or f"{path}.json") as fh:
            meta = json.load(fh)
        tab = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        d = meta["d"]
        return cls(tab[:, :d].copy(), tab[:, d].copy(), tab[:, d + 1].copy(),
                   meta["mass_residual"], meta["mc_budget"], meta["seed"],
                   meta["converged"], meta["n_iter"])


def _laguerre(Y, w, X, k=1):
    """Top-``k`` Laguerre assignment through a lifted nearest-neighbour query.

    ``|x - y_i|^2 - 2 w_i = |(x, 0) - (y_i, h_i)|^2 - 2 max(w)`` with
    ``h_i = sqrt(2 (max(w) - w_i))``, so Laguerre cells are Voronoi cells of
    the lifted points.  Returns indices and half squared lifted distances.
    """
    h = np.sqrt(2.0 * (w.max() - w))
    tree = cKDTree(np.column_stack([Y, h]))
    k = min(k, len(Y))
    dist, idx = tree.query(np.column_stack([X, np.zeros(len(X))]), k=k)
    if k == 1:
        dist, idx = dist[:, None], idx[:, None]
    # lowest index among exact ties
    if len(Y) > 1 and k >= 2:
        tie = (dist[:, 1] == dist[:, 0]) & (idx[:, 1] < idx[:, 0])
        idx[tie, 0], idx[tie, 1] = idx[tie, 1], idx[tie, 0]
    return idx[:, 0] if k == 1 else idx, 0.5 * dist**2


def _assign_min(Y, w, X, chunk=65536):
    """Exact argmin with lowest-index ties, used for map evaluation."""
    out = np.empty(len(X), dtype=int)
    yy = 0.5 * np.sum(Y**2, axis=1) - w
    for s in range(0, len(X), chunk):
        out[s : s + chunk] = np.argmin(yy - X[s : s + chunk] @ Y.T, axis=1)
    return out


def _dual_state(Y, w, X, masses, need_hessian=False, band=0.05):
    N, M = len(Y), len(X)
    if need_hessian and N > 1:
        idx, half_d2 = _laguerre(Y, w, X, k=2)
        first, second = idx[:, 0], idx[:, 1]
        cmin = half_d2[:, 0] - w.max()
        gap = half_d2[:, 1] - half_d2[:, 0]
    else:
        first, half_d2 = _laguerre(Y, w, X, k=1)
        cmin = half_d2[:, 0] - w.max()
    G = np.bincount(first, minlength=N) / M
    obj = float(masses @ w + cmin.mean())
    H = None
    if need_hessian and N > 1:
        # gamma(0 <= c_j - c_i < delta) ~ delta * H_ij  for neighbouring cells
        delta = float(np.quantile(gap, band))
        sel = gap < delta
        H = np.zeros((N, N))
        np.add.at(H, (first[sel], second[sel]), 1.0)
        H = (H + H.T) / (2 * M * max(delta, 1e-300))
    return G, obj, H


def _newton_direction(H, r):
    deg = H.sum(axis=1)
    # tail cells may catch no sample in the band; give them a diagonal floor
    floor = 1e-3 * np.median(deg[deg > 0]) if np.any(deg > 0) else 1.0
    L = np.diag(np.maximum(deg, floor)) - H
    N = len(r)
    # gauge: the Laplacian kernel is the constants
    L = L + np.full((N, N), 1.0 / N) * max(np.trace(L) / N, 1e-12)
    return np.linalg.solve(L, r)


def quantize_target(target, n_points, seed, n_samples=None, iters=50):
    """Support points and masses from k-means on target samples.

    ``target`` is a Potential (sampled with its default sampler) or a point
    array.  Masses are cluster frequencies; empty clusters are dropped.
    """
    if hasattr(target, "V"):
        n_samples = n_samples or max(200 * n_points, 10_000)
        pts = sample_target(target, n_samples, seed).points
    else:
        pts = np.asarray(getattr(target, "points", target), dtype=float)
    rng = make_rng(seed)
    init = pts[rng.choice(len(pts), n_points, replace=False)]
    centers, labels = kmeans2(pts, init, iter=iters, minit="matrix", seed=rng)
    counts = np.bincount(labels, minlength=n_points)
    keep = counts > 0
    return centers[keep], counts[keep] / counts.sum()


def semidiscrete_solve(target, masses=None, tol=None, mc_budget=None, seed=0,
                       max_iter=60, band=0.05):
    """Dual weights equalizing Gaussian cell masses with the target masses.

    Parameters
    ----------
    target : array (N, d) or SampleBatch
        Support points; ``masses`` defaults to uniform.
    tol : float
        Max-norm tolerance on ``gamma(Lag_i) - m_i``; default ``0.05 / N``.
    mc_budget : int
        Gaussian points in the fixed Monte-Carlo sample (common random
        numbers across iterations); default ``10**4 * N``.

    Notes
    -----
    Damped Newton ascent on the concave dual.  The Hessian is the weighted
    Laplacian of cell adjacencies; its entries are estimated from the
    fraction of sample points within a thin band of each shared facet.
    Steps are halved until both the dual objective and the mass residual
    improve.
    """
    Y = np.asarray(getattr(target, "points", target), dtype=float)
    if Y.ndim != 2 or len(Y) < 1:
        raise ValueError("need at least one support point")
    N, d = Y.shape
    m = np.full(N, 1.0 / N) if masses is None else np.asarray(masses, dtype=float)
    if m.shape != (N,) or np.any(m <= 0) or abs(m.sum() - 1) > 1e-9:
        raise ValueError("masses must be positive and sum to 1")
    if len(np.unique(Y, axis=0)) < N:
        raise ValueError("duplicate support points")
    tol = 0.05 / N if tol is None else float(tol)
    mc_budget = int(mc_budget or 10_000 * N)
    if N == 1:
        return SemiDiscretePlan(Y.copy(), m, np.zeros(1), 0.0, mc_budget, seed)
    X = sample_gaussian(d, mc_budget, seed).points
    w = np.zeros(N)
    G, obj, H = _dual_state(Y, w, X, m, True, band)
    res = float(np.abs(G - m).max())
    trace = {"objective": [obj], "residual": [res], "step": []}
    it = 0
    while res > tol and it < max_iter:
        it += 1
        dw = _newton_direction(H, m - G)
        t = 1.0
        while True:
            w_new = w + t * dw
            w_new -= w_new.mean()
            G_new, obj_new, _ = _dual_state(Y, w_new, X, m)
            res_new = float(np.abs(G_new - m).max())
            if (obj_new >= obj - 1e-12 and res_new < res) or t < 1e-6:
                break
            t *= 0.5
        if t < 1e-6:
            log.warning("line search stalled at residual %.3g", res)
            break
        w = w_new
        G, obj, H = _dual_state(Y, w, X, m, True, band)
        res = float(np.abs(G - m).max())
        trace["objective"].append(obj)
        trace["residual"].append(res)
        trace["step"].append(t)
        log.debug("iter %d residual %.3g step %.3g", it, res, t)
    plan = SemiDiscretePlan(Y.copy(), m, w, res, mc_budget, seed, res <= tol, it, trace)
    if res > tol:
        raise ConvergenceError(f"mass residual {res:.3g} above tol {tol:.3g} after {it} iterations", plan)
    return plan


def sd_map_eval(plan, x):
    """``y_i`` for the Laguerre cell containing ``x`` (lowest index on ties)."""
    pts, sq = as_points(x, plan.d)
    out = plan.points[_assign_min(plan.points, plan.weights, pts)]
    return out[0] if sq else out


def sd_map(plan):
    """Wrap a plan as a TransportMap (no Jacobian: the map is piecewise constant)."""
    return TransportMap(d=plan.d, fn=lambda x: sd_map_eval(plan, x),
                        provenance="semi-discrete", meta={"plan": plan})


# ------------------------------------------------------------------ entropic
def _sinkhorn(X, Y, eps, max_iters, tol, eps_schedule=True, absorb_at=1e30):
    """Log-domain Sinkhorn with absorption.

    Between absorptions the iteration runs on the scaled kernel
    ``exp((f_i + g_j - C_ij) / eps)``; when a scaling leaves ``[1/absorb_at,
    absorb_at]`` it is folded back into the potentials and the kernel is
    rebuilt, so nothing under- or overflows.
    """
    n, m = len(X), len(Y)
    C = 0.5 * ((X**2).sum(1)[:, None] + (Y**2).sum(1)[None, :] - 2 * X @ Y.T)
    a, b = np.full(n, 1.0 / n), np.full(m, 1.0 / m)
    f = np.zeros(n)
    g = np.zeros(m)
    # anneal from a coarse scale: cheap warm start, same fixed point
    scales = [eps]
    if eps_schedule:
        e = max(float(np.median(C)), eps)
        while e > 2 * eps:
            scales.insert(-1, e)
            e /= 2
    err = np.inf
    it_total = 0
    for k, e in enumerate(scales):
        last = k == len(scales) - 1
        # exact log-domain half steps give the kernel a sane starting point
        f = -e * logsumexp((g[None, :] - C) / e, b=b[None, :], axis=1)
        g = -e * logsumexp((f[:, None] - C) / e, b=a[:, None], axis=0)
        K = np.exp((f[:, None] + g[None, :] - C) / e)
        u, v = np.ones(n), np.ones(m)
        for _ in range(max_iters if last else 100):
            u = a / (K @ v)
            v = b / (K.T @ u)
            it_total += 1
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise FloatingPointError("Sinkhorn scalings became non-finite")
            if u.max() > absorb_at or v.max() > absorb_at or u.min() < 1 / absorb_at or v.min() < 1 / absorb_at:
                f, g = f + e * np.log(u), g + e * np.log(v)
                K = np.exp((f[:, None] + g[None, :] - C) / e)
                u, v = np.ones(n), np.ones(m)
            if it_total % 5 == 0:
                err = float(np.abs(u * (K @ v) - a).sum())
                if err < (tol if last else 10 * tol):
                    break
        f, g = f + e * np.log(u), g + e * np.log(v)
    return f, g, err, it_total


def entropic_map(source, target, epsilon, max_iters=2000, tol=1e-4):
    """Barycentric projection of a log-domain Sinkhorn plan.

    The cost is ``|x - y|^2 / 2``.  The map is the gradient of the convex
    function ``eps * log sum_j exp((<x, y_j> - |y_j|^2/2 + g_j) / eps)``, so it is
    monotone and its Jacobian ``Cov_w(y) / eps`` is symmetric positive
    semidefinite.  ``tol`` is the L1 marginal error.
    """
    X = np.asarray(getattr(source, "points", source), dtype=float)
    Y = np.asarray(getattr(target, "points", target), dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ValueError("source and target samples must have matching dimension")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    d = X.shape[1]
    f, g, err, n_it = _sinkhorn(X, Y, float(epsilon), max_iters, tol)
    if err > tol:
        raise ConvergenceError(f"Sinkhorn marginal error {err:.3g} above tol {tol:.3g}")
    a = (g - 0.5 * np.sum(Y**2, axis=1)) / epsilon

    def weights(x):
        z = a[None, :] + (x @ Y.T) / epsilon
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def fn(x, chunk=4096):
        return np.concatenate([weights(x[s : s + chunk]) @ Y for s in range(0, len(x), chunk)]) \
            if len(x) else np.zeros((0, d))

    def jac(x, chunk=1024):
        out = np.empty((len(x), d, d))
        for s in range(0, len(x), chunk):
            p = weights(x[s : s + chunk])
            mu = p @ Y
            second = np.einsum("nj,ja,jb->nab", p, Y, Y)
            out[s : s + chunk] = (second - mu[:, :, None] * mu[:, None, :]) / epsilon
        return out

    return TransportMap(d=d, fn=fn, jac_fn=jac, provenance="entropic",
                        meta={"epsilon": float(epsilon), "marginal_error": err, "iterations": n_it,
                              "n_source": len(X), "n_target": len(Y)})


# --------------------------------------------------------------- pushforward
def pushforward_test(tmap, pot, n, seed, n_sigma=3.0):
    """Compare ``T # gamma`` with direct target samples.

    Mean and covariance discrepancies are judged against ``n_sigma`` CLT
    bands for a two-sample difference; in one dimension a two-sample KS
    test at the 1% level is added.
    """
    rs = np.random.SeedSequence(seed).spawn(2)
    s1, s2 = (int(s.generate_state(1, dtype=np.uint64)[0]) for s in rs)
    x = sample_gaussian(pot.d, n, s1).points
    tx = tmap(x)
    y = sample_target(pot, n, s2).points
    d = pot.d
    mean_diff = tx.mean(0) - y.mean(0)
    cov_t = np.atleast_2d(np.cov(tx, rowvar=False))
    cov_y = np.atleast_2d(np.cov(y, rowvar=False))
    cov_diff = float(np.linalg.norm(cov_t - cov_y, 2))
    var = np.diag(cov_y)
    mean_band = n_sigma * np.sqrt(2 * var / n)
    # fourth-moment band for the covariance entries
    yc = y - y.mean(0)
    v4 = np.var(np.einsum("ni,nj->nij", yc, yc), axis=0)
    cov_band = n_sigma * float(np.sqrt(2 * v4.sum() / n))
    out = {
        "n": n, "seed": seed,
        "mean_diff": mean_diff.tolist(), "mean_band": mean_band.tolist(),
        "mean_ok": bool(np.all(np.abs(mean_diff) <= mean_band)),
        "cov_diff_op": cov_diff, "cov_band": cov_band,
        "cov_ok": cov_diff <= cov_band,
    }
    if d == 1:
        ks = ks_2samp(tx[:, 0], y[:, 0])
        crit = kstwo.ppf(0.99, n) * np.sqrt(2)  # two equal samples: n_eff = n / 2
        out.update(ks_stat=float(ks.statistic), ks_pvalue=float(ks.pvalue),
                   ks_crit_99=float(crit), ks_ok=bool(ks.statistic <= crit))
    out["passed"] = bool(out["mean_ok"] and out["cov_ok"] and out.get("ks_ok", True))
    return out
