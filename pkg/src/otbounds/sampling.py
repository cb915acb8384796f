"""Seeded samplers for the Gaussian source and the target measures.

All randomness goes through a counter-based Philox generator seeded with an
explicit 64-bit integer, so a batch is a pure function of its parameters and
seed.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .quadrature import potential_line, radial_line

__all__ = [
    "SampleBatch",
    "SamplerTuningError",
    "make_rng",
    "sample_gaussian",
    "sample_inverse_cdf_1d",
    "sample_radial",
    "sample_product",
    "sample_target",
    "sample_mala",
    "batch_diagnostics",
    "effective_sample_size",
]

GENERATOR = "philox"
_U_MIN = 2.0**-60


class SamplerTuningError(RuntimeError):
    """MALA acceptance rate outside the admissible window."""


def make_rng(seed):
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True, eq=False)
class SampleBatch:
    points: np.ndarray
    seed: int
    provenance: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError("points must have shape (n, d)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("sample batch contains non-finite points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def to_csv(self, path):
        header = f"d={self.d} n={self.n} seed={self.seed} provenance={self.provenance} generator={GENERATOR}"
        cols = ",".join(f"x{i}" for i in range(self.d))
        np.savetxt(path, self.points, delimiter=",", fmt="%.17g", header=f"{header}\n{cols}", comments="# ")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            first = fh.readline()
        meta = dict(re.findall(r"(\w+)=(\S+)", first))
        d, n = int(meta["d"]), int(meta["n"])
        pts = np.loadtxt(path, delimiter=",", comments="#", ndmin=2).reshape(n, d)
        return cls(pts, int(meta["seed"]), meta.get("provenance", "unknown"))


def _uniform_log(rng, n):
    """Uniforms as (log-probability, upper-tail flag) pairs, exact in both tails."""
    u = np.maximum(rng.random(n), _U_MIN)
    upper = u > 0.5
    logp = np.where(upper, np.log1p(-np.minimum(u, 1 - _U_MIN)), np.log(u))
    return logp, upper


def sample_gaussian(d, n, seed):
    """``n`` i.i.d. standard normal points in ``R^d``."""
    if d < 1 or n < 0:
        raise ValueError("need d >= 1 and n >= 0")
    rng = make_rng(seed)
    return SampleBatch(rng.standard_normal((n, d)), int(seed), "gaussian-direct")


def sample_inverse_cdf_1d(pot, n, seed):
    """Inverse-CDF samples from a one-dimensional potential."""
    if pot.d != 1:
        raise ValueError("inverse-CDF sampling needs d = 1")
    line = potential_line(pot)
    logp, upper = _uniform_log(make_rng(seed), n)
    x = line.quantile_log(logp, upper) if n else np.zeros(0)
    return SampleBatch(x.reshape(n, 1), int(seed), "inverse-CDF")


def sample_radial(pot, n, seed):
    """Exact samples from a radial target: inverse-CDF radius times a uniform direction."""
    rng = make_rng(seed)
    dirs = rng.standard_normal((n, pot.d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    logp, upper = _uniform_log(rng, n)
    r = radial_line(pot).quantile_log(logp, upper) if n else np.zeros(0)
    return SampleBatch(dirs * r[:, None], int(seed), "inverse-CDF")


def sample_product(pot, n, seed):
    """Independent inverse-CDF coordinates for product targets."""
    if pot.marginal is None:
        raise ValueError("potential is not declared as a product")
    line = potential_line(pot.marginal)
    logp, upper = _uniform_log(make_rng(seed), n * pot.d)
    x = line.quantile_log(logp, upper) if n else np.zeros(0)
    return SampleBatch(x.reshape(n, pot.d), int(seed), "inverse-CDF")


def sample_target(pot, n, seed, **mala_kw):
    """Best available exact sampler for ``pot``, falling back to MALA."""
    if pot.family == "gaussian":
        sigma = pot.params["sigma"]
        b = sample_gaussian(pot.d, n, seed)
        return SampleBatch(sigma * b.points, b.seed, "gaussian-direct")
    if pot.d == 1:
        return sample_inverse_cdf_1d(pot, n, seed)
    if pot.radial is not None:
        return sample_radial(pot, n, seed)
    if pot.marginal is not None:
        return sample_product(pot, n, seed)
    return sample_mala(pot, n, seed, **mala_kw)


# ---------------------------------------------------------------------- MALA
def _mala_run(pot, x, h, n_steps, rng, keep_every=1, keep_from=0):
    """Advance parallel chains ``x`` (shape (c, d)); returns kept states and acceptance."""
    c, d = x.shape
    v = pot.value(x)
    g = pot.gradient(x)
    kept = []
    accepted = 0
    for step in range(n_steps):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("NaN or inf in the potential gradient")
        noise = rng.standard_normal((c, d))
        y = x - h * g + np.sqrt(2 * h) * noise
        vy = pot.value(y)
        gy = pot.gradient(y)
        if not np.all(np.isfinite(gy)):
            raise FloatingPointError("NaN or inf in the potential gradient")
        fwd = np.sum((y - x + h * g) ** 2, axis=1)
        bwd = np.sum((x - y + h * gy) ** 2, axis=1)
        log_a = -vy + v - bwd / (4 * h) + fwd / (4 * h)
        acc = np.log(rng.random(c)) < log_a
        x = np.where(acc[:, None], y, x)
        v = np.where(acc, vy, v)
        g = np.where(acc[:, None], gy, g)
        accepted += int(acc.sum())
        if step >= keep_from and (step - keep_from) % keep_every == keep_every - 1:
            kept.append(x.copy())
    rate = accepted / max(1, n_steps * c)
    return x, kept, rate


def _tune_step(pot, x, rng, target=(0.55, 0.60), pilot=200, max_iter=40):
    c1 = pot.c1 if pot.c1 and np.isfinite(pot.c1) else 1.0
    log_h = np.log(0.5 / c1) - np.log(pot.d) / 3
    lo, hi = -np.inf, np.inf
    rate = np.nan
    for _ in range(max_iter):
        x, _, rate = _mala_run(pot, x, np.exp(log_h), pilot, rng)
        if target[0] <= rate <= target[1]:
            break
        if rate > target[1]:
            lo = log_h
            log_h = log_h + 1.0 if hi == np.inf else 0.5 * (log_h + hi)
        else:
            hi = log_h
            log_h = log_h - 1.0 if lo == -np.inf else 0.5 * (log_h + lo)
    return float(np.exp(log_h)), x, rate


def sample_mala(pot, n, seed, step=None, burn_in=500, thinning=1, n_chains=16):
    """Metropolis-adjusted Langevin samples from ``exp(-V)``.

    ``n_chains`` independent chains advance in lockstep; each discards
    ``burn_in`` steps and keeps every ``thinning``-th state afterwards.  With
    ``step=None`` the step is tuned on a pilot run to acceptance 0.55-0.60.
    """
    if n == 0:
        return SampleBatch(np.zeros((0, pot.d)), int(seed), "MALA",
                           {"acceptance_rate": float("nan"), "step": step, "n_chains": 0})
    if not pot.smooth:
        raise ValueError("MALA needs a smooth potential")
    if step is not None and not step > 0:
        raise ValueError("step must be positive")
    rng = make_rng(seed)
    n_chains = max(1, min(int(n_chains), n))
    x = rng.standard_normal((n_chains, pot.d))
    pilot_rate = None
    if step is None:
        step, x, pilot_rate = _tune_step(pot, x, rng)
    per_chain = -(-n // n_chains)
    n_steps = burn_in + per_chain * thinning
    _, kept, rate = _mala_run(pot, x, step, n_steps, rng, keep_every=thinning, keep_from=burn_in)
    chains = np.stack(kept[:per_chain], axis=1)  # (n_chains, per_chain, d)
    pts = chains.reshape(-1, pot.d)[:n]
    diag = {"acceptance_rate": rate, "step": step, "n_chains": n_chains,
            "burn_in": burn_in, "thinning": thinning, "pilot_acceptance": pilot_rate}
    if not 0.1 <= rate <= 0.9:
        raise SamplerTuningError(f"MALA acceptance rate {rate:.3f} outside [0.1, 0.9] (step {step:.3g})")
    batch = SampleBatch(pts, int(seed), "MALA", diag)
    if n >= 2:
        ess_pts = chains if n == n_chains * per_chain else None
        diag["ess"] = batch_diagnostics(batch, chains=ess_pts)["ess"]
    return batch


# --------------------------------------------------------------- diagnostics
def _autocorr(x):
    n = len(x)
    x = x - x.mean()
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    return acf / acf[0]


def effective_sample_size(x):
    """Geyer initial-monotone-sequence ESS of a 1D chain; 1.0 for constant input."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2 or np.ptp(x) == 0:
        return 1.0
    rho = _autocorr(x)
    m = (n - 1) // 2
    pairs = rho[0 : 2 * m : 2] + rho[1 : 2 * m + 1 : 2]
    pos = np.flatnonzero(pairs <= 0)
    k = pos[0] if pos.size else len(pairs)
    pairs = np.minimum.accumulate(pairs[:k])
    tau = -1.0 + 2.0 * pairs.sum()
    return float(n / max(tau, 1e-12))


def batch_diagnostics(batch, chains=None):
    """Mean, population covariance and per-coordinate ESS.

    ``chains`` (shape (c, m, d)) makes the ESS a sum over independent chains.
    """
    pts = getattr(batch, "points", batch)
    pts = np.asarray(pts, dtype=float)
    n, d = pts.shape
    if n < 2:
        raise ValueError("need at least two points")
    mean = pts.mean(axis=0)
    cov = np.atleast_2d(np.cov(pts, rowvar=False, bias=True))
    degenerate = bool(np.all(np.ptp(pts, axis=0) == 0))
    if chains is None:
        ess = np.array([effective_sample_size(pts[:, j]) for j in range(d)])
    else:
        ess = np.array([sum(effective_sample_size(ch[:, j]) for ch in chains) for j in range(d)])
    if degenerate:
        warnings.warn("constant sample batch: ESS is degenerate", RuntimeWarning, stacklevel=2)
        ess = np.ones(d)
    return {"mean": mean, "cov": cov, "ess": ess, "n": n, "degenerate": degenerate}
