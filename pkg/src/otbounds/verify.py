"""Executable checks of growth and concentration bounds for Brenier maps.

Every check returns a :class:`~otbounds.report.BoundReport`.  Universal
constants are fitted and reported; pass/fail binds only to growth exponents
and to fully explicit constants.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi, chi2, ncx2

from .measures import as_points
from .report import BoundReport
from .sampling import make_rng, sample_gaussian

__all__ = [
    "ConcentrationSpec",
    "ConcentrationFit",
    "ProbeSet",
    "probe_design",
    "fit_loglog",
    "displacement_bound_check",
    "concentration_constant_bound_check",
    "concentration_profile",
    "lp_derivative_norm",
    "opnorm_growth_check",
    "eigen_log_variance",
    "monotonicity_check",
    "ball_certificate",
]

KINDS = ("exponential", "gaussian", "lee-vempala-profile")


@dataclass(frozen=True)
class ConcentrationSpec:
    """A declared concentration property: ``kind`` and its constant in dimension ``d``."""

    kind: str
    constant: float
    d: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown concentration kind {self.kind!r}; expected one of {KINDS}")
        if not self.constant > 0:
            raise ValueError("concentration constant must be positive")


# -------------------------------------------------------------------- probes
@dataclass(frozen=True, eq=False)
class ProbeSet:
    """Probe points laid out on spherical shells.

    ``shell[k]`` is the index into ``radii`` of ``points[k]``; ``extrapolated``
    flags shells beyond the chi quantile ``q_max``.
    """

    points: np.ndarray
    radii: np.ndarray
    shell: np.ndarray
    r_quantile: float

    @property
    def extrapolated(self):
        return self.radii > self.r_quantile * (1 + 1e-12)

    @property
    def d(self):
        return self.points.shape[1]


def _directions(d, n_random, rng):
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = np.linspace(0, 2 * np.pi, 32, endpoint=False)
        fixed = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        eye = np.eye(d)
        diag = np.array(np.meshgrid(*[[-1.0, 1.0]] * d)).reshape(d, -1).T[: 2 ** min(d, 6)] / np.sqrt(d)
        fixed = np.vstack([eye, -eye, diag])
    rand = rng.standard_normal((n_random, d))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    return np.vstack([fixed, rand])


def probe_design(d, seed=0, n_radii=40, n_random=8, q_max=1 - 1e-6, far=(1.5, 2.0, 3.0), radii=None):
    """Shells at Gaussian-quantile radii plus deterministic far shells.

    Radii: chi quantiles from 1e-3 to ``q_max``, a log grid over the top
    decade below ``r_q = chi_d^{-1}(q_max)`` and the multiples ``far`` of
    ``r_q``.  Directions are a fixed set (axes, diagonals, or an even circle
    for ``d = 2``) plus ``n_random`` seeded random ones.
    """
    r_q = float(chi(d).ppf(q_max))
    if radii is None:
        qs = np.array([1e-3, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999, 1 - 1e-4, 1 - 1e-5, q_max])
        radii = np.concatenate([chi(d).ppf(qs), np.geomspace(r_q / 10, r_q, n_radii), r_q * np.asarray(far)])
    radii = np.unique(np.round(np.asarray(radii, dtype=float), 12))
    dirs = _directions(d, n_random, make_rng(seed))
    pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    shell = np.repeat(np.arange(len(radii)), len(dirs))
    return ProbeSet(pts, radii, shell, r_q)


def _as_probes(probes, d, seed=0):
    if probes is None:
        return probe_design(d, seed)
    if isinstance(probes, ProbeSet):
        return probes
    pts, _ = as_points(probes, d)
    r = np.linalg.norm(pts, axis=1)
    radii, shell = np.unique(np.round(r, 12), return_inverse=True)
    return ProbeSet(pts, radii, shell, float(chi(d).ppf(1 - 1e-6)))


def _shell_max(values, probes):
    out = np.full(len(probes.radii), -np.inf)
    np.maximum.at(out, probes.shell, values)
    return out


def fit_loglog(r, y, seed=0, n_boot=200, decade=True, level=0.95):
    """Least-squares slope of ``log y`` against ``log r``.

    With ``decade`` the fit uses ``r`` in ``[r_max / 10, r_max]`` (everything
    if the data span less).  The band is a bootstrap percentile interval over
    resampled points.  Returns ``(slope, (lo, hi), (r_lo, r_hi))``; all NaN
    when fewer than two usable points remain.
    """
    r = np.asarray(r, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (r > 0) & (y > 0) & np.isfinite(y)
    r, y = r[ok], y[ok]
    if decade and len(r):
        keep = r >= r.max() / 10
        r, y = r[keep], y[keep]
    nan = float("nan")
    if len(np.unique(r)) < 2:
        return nan, (nan, nan), (nan, nan)
    lr, ly = np.log(r), np.log(y)
    slope = float(np.polyfit(lr, ly, 1)[0])
    rng = make_rng(seed)
    boots = []
    for _ in range(n_boot):
        idx = rng.integers(0, len(r), len(r))
        if np.ptp(lr[idx]) > 0:
            boots.append(np.polyfit(lr[idx], ly[idx], 1)[0])
    a = (1 - level) / 2
    lo, hi = np.quantile(boots, [a, 1 - a]) if boots else (slope, slope)
    return slope, (float(min(lo, slope)), float(max(hi, slope))), (float(r.min()), float(r.max()))


# ------------------------------------------------------------- displacement
def displacement_bound_check(tmap, d=None, probes=None, tol=0.1, seed=0):
    """``|T(x)| <= C (d + |x|^2)``: fitted ``C`` and growth exponent.

    Passes when ``C_hat = max |T(x)| / (d + |x|^2)`` is finite and the
    log-log slope of the shell maxima of ``|T|`` over the largest decade is at
    most ``2 + tol``.
    """
    t0 = time.perf_counter()
    d = d or tmap.d
    pr = _as_probes(probes, d, seed)
    norms = np.linalg.norm(tmap(pr.points), axis=1)
    r2 = np.sum(pr.points**2, axis=1)
    ratio = norms / (d + r2)
    i = int(np.nanargmax(ratio)) if np.any(np.isfinite(ratio)) else 0
    C = float(ratio[i])
    smax = _shell_max(norms, pr)
    slope, band, span = fit_loglog(pr.radii, smax, seed=seed)
    finite = bool(np.all(np.isfinite(norms)))
    margin = 2 + tol - slope if np.isfinite(slope) else np.inf
    passed = finite and np.isfinite(C) and margin >= 0
    notes = []
    if not np.isfinite(slope):
        notes.append("map vanishes on all shells; growth exponent undefined")
    if pr.extrapolated.any():
        notes.append(f"{int(pr.extrapolated.sum())} shells beyond the chi quantile radius {pr.r_quantile:.4g}")
    return BoundReport(
        name="displacement",
        statement="|T(x)| <= C (d + |x|^2) for a universal C (quadratic displacement bound)",
        passed=passed, constant=C, exponent=slope, exponent_band=band,
        worst_point=pr.points[i].tolist(), worst_margin=float(margin), tolerance=tol,
        n_samples=len(pr.points), seed=seed, wall_clock=time.perf_counter() - t0,
        details={"fit_range": span, "radii": pr.radii, "shell_max_norm": smax,
                 "extrapolated": pr.extrapolated, "r_quantile": pr.r_quantile},
        notes=notes,
    )


def _prefactor(spec):
    if spec.kind == "exponential":
        return max(12.0 / spec.constant, 8.0)
    if spec.kind == "gaussian":
        return max(12.0 / np.sqrt(spec.constant), 8.0)
    raise ValueError(f"no explicit displacement bound for concentration kind {spec.kind!r}")


def concentration_constant_bound_check(tmap, spec, probes=None, seed=0):
    """Pointwise check of the explicit bounds under declared concentration.

    Exponential (constant ``alpha``): ``|T(x)| <= max(12/alpha, 8)(|x|^2 + 17d)``.
    Gaussian (constant ``beta``): ``|T(x)| <= max(12/sqrt(beta), 8) sqrt(|x|^2 + 17d)``.
    """
    t0 = time.perf_counter()
    pref = _prefactor(spec)
    d = spec.d
    pr = _as_probes(probes, d, seed)
    norms = np.linalg.norm(tmap(pr.points), axis=1)
    base = np.sum(pr.points**2, axis=1) + 17 * d
    bound = pref * (base if spec.kind == "exponential" else np.sqrt(base))
    ratio = norms / bound
    i = int(np.argmax(ratio))
    margin = float(1 - ratio[i])
    form = "(|x|^2 + 17d)" if spec.kind == "exponential" else "sqrt(|x|^2 + 17d)"
    return BoundReport(
        name=f"concentration-bound-{spec.kind}",
        statement=f"|T(x)| <= {pref:.6g} {form} under {spec.kind} concentration with constant {spec.constant:.6g}",
        passed=margin > 0, constant=float(ratio[i] * pref), worst_point=pr.points[i].tolist(),
        worst_margin=margin, tolerance=0.0, n_samples=len(pr.points), seed=seed,
        wall_clock=time.perf_counter() - t0,
        details={"prefactor": pref, "kind": spec.kind, "declared_constant": spec.constant,
                 "max_ratio": float(ratio[i])},
    )


# ------------------------------------------------------------ concentration
@dataclass
class ConcentrationFit:
    """Fitted concentration constants with the empirical tail table.

    ``beta`` is the sub-Gaussian (moment generating function) fit and
    ``beta_tail`` the direct tail fit, which is biased upward at finite
    radius.  ``c_profile`` is the smallest ``c`` for which every tail obeys
    ``exp(-t^2 / (t + c sqrt(d)))`` at deviation ``t``.
    """

    alpha: float
    beta: float
    beta_tail: float
    c_profile: float
    d: int
    n: int
    table: dict
    notes: list

    def spec(self, kind):
        const = {"exponential": self.alpha, "gaussian": self.beta,
                 "lee-vempala-profile": self.c_profile}[kind]
        return ConcentrationSpec(kind, const, self.d)


def concentration_profile(samples, n_directions=16, rs=None, seed=0, n_sigma=3.0,
                          min_count=20, lambdas=None):
    """Empirical tails of 1-Lipschitz test functions and fitted constants.

    Test functions are ``x -> <theta, x>`` for ``n_directions`` random unit
    vectors (both signs in one dimension) and ``x -> |x|``.  Each tail
    ``P(f >= mean f + r)`` is lowered by ``n_sigma`` binomial standard errors
    before fitting; radii with fewer than ``min_count`` exceedances are
    excluded and noted.
    """
    pts = np.asarray(getattr(samples, "points", samples), dtype=float)
    n, d = pts.shape
    if n < 10_000:
        raise ValueError("concentration_profile needs at least 10^4 samples")
    rng = make_rng(seed)
    if d == 1:
        thetas = np.array([[1.0], [-1.0]])
    else:
        thetas = rng.standard_normal((n_directions, d))
        thetas /= np.linalg.norm(thetas, axis=1, keepdims=True)
    F = np.column_stack([pts @ thetas.T, np.linalg.norm(pts, axis=1)])
    F = F - F.mean(axis=0)
    names = [f"linear[{k}]" for k in range(len(thetas))] + ["norm"]
    if rs is None:
        rs = np.linspace(0, np.max(F), 61)
    rs = np.asarray(rs, dtype=float)
    Fs = np.sort(F, axis=0)
    counts = n - np.stack([np.searchsorted(Fs[:, j], rs, side="left") for j in range(F.shape[1])], axis=1)
    P = counts / n
    se = np.sqrt(P * (1 - P) / n)
    lower = P - n_sigma * se
    valid = (counts >= min_count) & (rs[:, None] > 0)
    notes = []
    dropped = int(np.sum(~valid[rs > 0]))
    if dropped:
        notes.append(f"{dropped} (radius, function) cells excluded: fewer than {min_count} exceedances")
    with np.errstate(divide="ignore", invalid="ignore"):
        L = -np.log(np.where(valid & (lower > 0), lower, np.nan))
        R = rs[:, None]
        alpha = float(np.nanmin(L / R))
        beta_tail = float(np.nanmin(2 * L / R**2))
        c_prof = float(max(0.0, np.nanmax((R**2 / L - R) / np.sqrt(d))))
    # sub-Gaussian fit from the moment generating function
    if lambdas is None:
        lambdas = np.linspace(0.1, 2.0, 20)
    betas = []
    for lam in lambdas:
        E = np.exp(lam * F)
        M = E.mean(axis=0)
        lo = M - n_sigma * E.std(axis=0) / np.sqrt(n)
        with np.errstate(divide="ignore", invalid="ignore"):
            lm = np.log(np.where(lo > 1, lo, np.nan))
            betas.append(lam**2 / (2 * lm))
    beta = float(np.nanmin(betas)) if np.any(np.isfinite(betas)) else float("nan")
    table = {"r": rs, "functions": names, "tail": P, "se": se, "valid": valid}
    return ConcentrationFit(alpha, beta, beta_tail, c_prof, d, n, table, notes)


# ------------------------------------------------------------- derivatives
def lp_derivative_norm(tmap, e, p, n=100_000, seed=0, c1=None, c2=None, n_sigma=3.0):
    """Monte-Carlo ``|| d_ee phi / sqrt(d + |x|^2) ||_{p+2}`` under the Gaussian.

    ``e`` is a unit vector or ``"radial"`` / ``"tangential"``.  The estimate
    carries an ``n_sigma`` band from the CLT on the ``(p+2)``-th moment and a
    heavy-tail flag (top 1% of samples carrying more than half the moment).
    With the target's ``c1, c2`` the implied constant
    ``C = estimate * c2 / (1 + p sqrt(c1) / (4 sqrt(d)))`` is also returned.
    """
    if p < 0 or p + 2 > 40:
        raise ValueError("need 0 <= p and p + 2 <= 40")
    if not tmap.has_jacobian:
        raise NotImplementedError("map has no Jacobian")
    d = tmap.d
    x = sample_gaussian(d, n, seed).points
    dee = np.abs(tmap.second_derivative(x, e))
    q = p + 2
    # normalise before powering to keep large q in range
    base = dee / np.sqrt(d + np.sum(x**2, axis=1))
    scale = base.max()
    v = (base / scale) ** q
    mean = v.mean()
    se = v.std() / np.sqrt(n)
    est = scale * mean ** (1 / q)
    band = (scale * max(mean - n_sigma * se, 0.0) ** (1 / q), scale * (mean + n_sigma * se) ** (1 / q))
    top = np.sort(v)[-max(1, n // 100):].sum() / v.sum()
    out = {"estimate": float(est), "band": band, "p": p, "direction": e if isinstance(e, str) else list(e),
           "heavy_tail": bool(top > 0.5), "top1_share": float(top), "n": n, "seed": seed}
    if c1 is not None and c2 is not None and np.isfinite(c1) and c2 > 0:
        env = 1 + p * np.sqrt(c1) / (4 * np.sqrt(d))
        out["envelope"] = float(env)
        out["implied_C"] = float(est * c2 / env)
    return out


def opnorm_growth_check(tmap, probes=None, tol=0.1, seed=0):
    """Growth of ``||grad T(x)||_op`` against three envelopes.

    Constants are fitted against the proved ``(d + |x|^2)^2``, the sharper
    ``d^{4/3} + |x|^2`` and the conjectural ``sqrt(d + |x|^2)``.  The gate is
    a finite constant for the first envelope and a shell-maximum log-log
    exponent of at most ``2 + tol``.
    """
    t0 = time.perf_counter()
    if not tmap.has_jacobian:
        raise NotImplementedError("map has no Jacobian")
    d = tmap.d
    pr = _as_probes(probes, d, seed)
    op = tmap.opnorm(pr.points)
    r2 = np.sum(pr.points**2, axis=1)
    envs = {"proved": (d + r2) ** 2, "sharper": d ** (4 / 3) + r2, "conjectural": np.sqrt(d + r2)}
    consts = {k: float(np.max(op / v)) for k, v in envs.items()}
    i = int(np.argmax(op / envs["proved"]))
    slope, band, span = fit_loglog(pr.radii, _shell_max(op, pr), seed=seed)
    margin = 2 + tol - slope if np.isfinite(slope) else np.inf
    passed = bool(np.all(np.isfinite(op)) and np.isfinite(consts["proved"]) and margin >= 0)
    return BoundReport(
        name="opnorm",
        statement="||grad T(x)||_op <= C (d + |x|^2)^2; also fitted against d^{4/3} + |x|^2 and sqrt(d + |x|^2)",
        passed=passed, constant=consts["proved"], exponent=slope, exponent_band=band,
        worst_point=pr.points[i].tolist(), worst_margin=float(margin), tolerance=tol,
        n_samples=len(pr.points), seed=seed, wall_clock=time.perf_counter() - t0,
        details={"constants": consts, "fit_range": span, "extrapolated": pr.extrapolated,
                 "radii": pr.radii},
        notes=["only the proved envelope is gated"],
    )


def _branches(tmap, x):
    if tmap.branch_fn is not None and tmap.d > 1:
        rad, tan = tmap.branch_fn(x)
        return {"radial": rad, "tangential": tan}
    ev = tmap.eigenvalues(x)
    return {f"lambda_{i + 1}": ev[:, i] for i in range(ev.shape[1])}


def eigen_log_variance(tmap, n=100_000, seed=0, bound=4.0, n_sigma=3.0):
    """``Var(log lambda_i(X))`` for ``X ~ N(0, Id)``, per eigenvalue branch."""
    t0 = time.perf_counter()
    if not tmap.has_jacobian:
        raise NotImplementedError("map has no Jacobian")
    x = sample_gaussian(tmap.d, n, seed).points
    br = _branches(tmap, x)
    out, bands = {}, {}
    for k, lam in br.items():
        if np.any(~(lam > 0)):
            raise ValueError(f"non-positive Jacobian eigenvalue on branch {k}: map is degenerate")
        z = np.log(lam)
        c = z - z.mean()
        var = float(np.mean(c**2))
        out[k] = var
        bands[k] = float(n_sigma * np.sqrt(max(np.mean(c**4) - var**2, 0.0) / n))
    worst = max(out, key=out.get)
    margin = bound + bands[worst] - out[worst]
    return BoundReport(
        name="eigen-log-variance",
        statement="Var(log lambda_i(X)) <= 4 for the ordered Jacobian eigenvalues, X Gaussian",
        passed=margin >= 0, constant=out[worst], worst_margin=float(margin), tolerance=bands[worst],
        n_samples=n, seed=seed, wall_clock=time.perf_counter() - t0,
        details={"variance": out, "band": bands, "worst_branch": worst},
    )


# -------------------------------------------------------------- monotonicity
def monotonicity_check(tmap, n_pairs=10_000, seed=0, tol=1e-8):
    """``min <T(y) - T(x), y - x>`` over Gaussian pairs; passes when ``>= -tol``.

    Exact, semi-discrete and entropic maps are gradients of convex functions,
    so the same default tolerance (floating-point noise) applies to all.
    """
    t0 = time.perf_counter()
    d = tmap.d
    z = sample_gaussian(d, 2 * n_pairs, seed).points
    x, y = z[:n_pairs], z[n_pairs:]
    inner = np.sum((tmap(y) - tmap(x)) * (y - x), axis=1)
    i = int(np.argmin(inner))
    return BoundReport(
        name="monotonicity",
        statement="<T(y) - T(x), y - x> >= 0 (gradient of a convex function)",
        passed=inner[i] >= -tol, constant=float(inner[i]), worst_point=[x[i].tolist(), y[i].tolist()],
        worst_margin=float(inner[i]), tolerance=tol, n_samples=n_pairs, seed=seed,
        wall_clock=time.perf_counter() - t0,
    )


# ---------------------------------------------------------- ball certificate
def _ball_mass(center, radius, d, budget, rng, shift=None, chunk=1_000_000):
    """Gaussian mass of a ball by Monte Carlo.

    With ``shift`` the points are drawn from ``N(shift, Id)`` and reweighted
    by ``exp(-<shift, z> + |shift|^2 / 2)`` (unbiased importance sampling).
    Returns ``(estimate, standard error, hits)``.
    """
    shift = np.zeros(d) if shift is None else np.asarray(shift, dtype=float)
    s1 = s2 = 0.0
    hits = 0
    left = budget
    while left > 0:
        m = min(chunk, left)
        z = rng.standard_normal((m, d)) + shift
        inside = np.sum((z - center) ** 2, axis=1) <= radius**2
        w = np.exp(-z[inside] @ shift + 0.5 * shift @ shift)
        s1 += w.sum()
        s2 += (w**2).sum()
        hits += int(inside.sum())
        left -= m
    p = s1 / budget
    var = max(s2 / budget - p**2, 0.0)
    if hits == 0 or var == 0.0:
        var = max(var, p * (1 - p), 1.0 / budget)
    return p, float(np.sqrt(var / budget)), hits


def ball_certificate(x, Tx, d=None, mc_budget=10_000_000, seed=0, target_samples=None,
                     n_pairs=10_000, n_sigma=3.0, importance=True):
    """Monte-Carlo certificate for the ball step of the displacement argument.

    With ``u = (Tx - x) / |Tx - x|`` and ``B = B(x + 4 sqrt(d) u, 2 sqrt(d))``:

    (a) ``gamma(B) >= exp(-|x|^2 - 17 d)`` and ``gamma(B(0, 2 sqrt(d))) >= 3/4``,
        each by ``n_sigma`` standard errors (exact chi-square values are
        reported alongside).  ``gamma(B)`` can be far out in the tail, so by
        default it is estimated by importance sampling from a Gaussian
        centred on ``B``; the plain estimate is reported too;
    (b) with target samples, when ``|Tx| >= 8(1 + |x|^2)`` and
        ``|Tx| >= 6 sqrt(d)``: mean of ``f(z) = <z - Tx, u> + |z - Tx| / 2`` is
        at most ``-|Tx| / 8``;
    (c) ``f`` is 3/2-Lipschitz on sampled pairs.
    """
    t0 = time.perf_counter()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    Tx = np.atleast_1d(np.asarray(Tx, dtype=float))
    d = d or len(x)
    rng = make_rng(seed)
    notes = []
    disp = Tx - x
    if np.linalg.norm(disp) == 0:
        u = np.eye(d)[0]
        notes.append("T(x) = x: direction u set to e_1")
    else:
        u = disp / np.linalg.norm(disp)
    sd = np.sqrt(d)
    center = x + 4 * sd * u
    plain = _ball_mass(center, 2 * sd, d, mc_budget, rng)
    p_b, se_b, hits_b = _ball_mass(center, 2 * sd, d, mc_budget, rng, shift=center) if importance else plain
    p_0, se_0, hits_0 = _ball_mass(np.zeros(d), 2 * sd, d, mc_budget, rng)
    floor = float(np.exp(-x @ x - 17 * d))
    exact_b = float(ncx2.cdf(4 * d, d, center @ center))
    exact_0 = float(chi2.cdf(4 * d, d))
    a1 = p_b - floor >= n_sigma * se_b
    a2 = p_0 - 0.75 >= n_sigma * se_0
    details = {
        "u": u, "center": center,
        "gamma_B": {"estimate": p_b, "se": se_b, "hits": hits_b, "exact": exact_b, "floor": floor,
                    "intermediate": 0.75 * float(np.exp(-center @ center / 2)), "ok": a1,
                    "estimator": "importance" if importance else "plain",
                    "plain": {"estimate": plain[0], "se": plain[1], "hits": plain[2]}},
        "gamma_B0": {"estimate": p_0, "se": se_0, "hits": hits_0, "exact": exact_0, "ok": a2},
    }

    def f(z):
        w = z - Tx
        return w @ u + 0.5 * np.linalg.norm(w, axis=-1)

    # (c) Lipschitz ratios at the scale of |Tx| and at short range
    scale = max(1.0, float(np.linalg.norm(Tx)))
    z1 = Tx + scale * rng.standard_normal((n_pairs, d))
    z2 = z1 + rng.standard_normal((n_pairs, d)) * np.exp(rng.uniform(-6, 2, (n_pairs, 1)))
    ratio = np.abs(f(z1) - f(z2)) / np.linalg.norm(z1 - z2, axis=1)
    lip_ok = bool(ratio.max() <= 1.5 + 1e-12)
    details["lipschitz"] = {"max_ratio": float(ratio.max()), "ok": lip_ok}

    ok = a1 and a2 and lip_ok
    norm_t = float(np.linalg.norm(Tx))
    pre = norm_t >= 8 * (1 + x @ x) and norm_t >= 6 * sd
    if target_samples is None:
        notes.append("integral branch skipped: no target samples")
    elif not pre:
        notes.append("integral branch skipped: |T(x)| below 8(1 + |x|^2) or 6 sqrt(d)")
    else:
        z = np.asarray(getattr(target_samples, "points", target_samples), dtype=float)
        fz = f(z)
        mean, se = float(fz.mean()), float(fz.std() / np.sqrt(len(fz)))
        b_ok = mean <= -norm_t / 8 + n_sigma * se
        details["integral"] = {"mean_f": mean, "se": se, "bound": -norm_t / 8, "ok": b_ok}
        ok = ok and b_ok
    margin = min((p_b - floor) / se_b - n_sigma, (p_0 - 0.75) / se_0 - n_sigma)
    return BoundReport(
        name="ball-certificate",
        statement="gamma(B(x + 4 sqrt(d) u, 2 sqrt(d))) >= exp(-|x|^2 - 17d) and gamma(B(0, 2 sqrt(d))) >= 3/4",
        passed=ok, constant=p_b, worst_point=x.tolist(), worst_margin=float(margin),
        tolerance=n_sigma, n_samples=mc_budget, seed=seed, wall_clock=time.perf_counter() - t0,
        details=details, notes=notes,
    )
