"""Acceptance criteria, one test each.

Every test also checks its own wall-clock budget.  A summary line per
criterion is printed at the end of the run (see ``conftest.py``).
"""
import math
import time

import numpy as np
import pytest

from otbounds import (
    TransportMap, brenier_1d, brenier_product, brenier_radial, linear_map, make_gaussian, make_laplace_product,
    make_power_potential, monge_ampere_residual,
)
from otbounds.numeric import entropic_map, quantize_target, sd_map, semidiscrete_solve
from otbounds.sampling import sample_gaussian, sample_target
from otbounds.verify import (
    ConcentrationSpec, ball_certificate, concentration_constant_bound_check, concentration_profile,
    displacement_bound_check, eigen_log_variance, fit_loglog, lp_derivative_norm, monotonicity_check,
    opnorm_growth_check,
)

pytestmark = pytest.mark.acceptance


class Clock:
    def __init__(self, limit):
        self.limit, self.t0 = limit, time.perf_counter()

    def check(self):
        took = time.perf_counter() - self.t0
        assert took < self.limit, f"took {took:.1f}s, budget {self.limit}s"


def _exact(pot):
    return brenier_1d(pot) if pot.d == 1 else brenier_radial(pot)


@pytest.mark.parametrize("d", [1, 3])
def test_criterion_01_identity_oracle(d):
    clk = Clock(10)
    pot = make_gaussian(d)
    T = _exact(pot)
    x = sample_gaussian(d, 1000, 101).points
    assert np.max(np.abs(T(x) - x)) < 1e-8
    res = monge_ampere_residual(T, pot, x)
    assert res["max_abs"] < 1e-10
    clk.check()


def test_criterion_02_one_dimensional_sharpness():
    clk = Clock(30)
    lap = make_laplace_product(1)
    xs = np.linspace(3, 10, 50)
    sups = []
    for kw in ({}, {"max_step": 0.25}):
        T = brenier_1d(lap, **kw)
        dT = T.eigenvalues(xs[:, None])[:, 0]
        slope, _, _ = fit_loglog(xs, dT, decade=False)
        assert slope == pytest.approx(1.0, abs=0.1)
        grid = np.linspace(-10, 10, 2001)[:, None]
        sups.append(float(np.max(T.eigenvalues(grid)[:, 0] / (1 + np.abs(grid[:, 0])))))
    assert all(np.isfinite(sups))
    assert abs(sups[1] / sups[0] - 1) < 0.05
    clk.check()


def _isotropic_maps():
    for d in (1, 2, 3, 4):
        yield f"gaussian-d{d}", _exact(make_gaussian(d))
        lap = make_laplace_product(d)
        yield f"laplace-d{d}", brenier_1d(lap) if d == 1 else brenier_product(lap)
        yield f"power-d{d}", _exact(make_power_potential(d, 1.5))


def test_criterion_03_displacement_bound():
    clk = Clock(60)
    for label, T in _isotropic_maps():
        a = displacement_bound_check(T, seed=0)
        b = displacement_bound_check(T, seed=1)
        assert a.passed and a.exponent <= 2.1, label
        assert np.isfinite(a.constant), label
        # three significant figures
        assert float(f"{a.constant:.3g}") == float(f"{b.constant:.3g}"), (label, a.constant, b.constant)
    clk.check()


@pytest.mark.parametrize("sigma", [1.0, 2.0])
@pytest.mark.parametrize("d", [1, 3])
def test_criterion_04_explicit_constants(sigma, d):
    clk = Clock(5)
    T = _exact(make_gaussian(d, sigma))
    rep = concentration_constant_bound_check(T, ConcentrationSpec("gaussian", sigma**-2, d))
    assert rep.passed and rep.worst_margin > 0
    assert rep.details["prefactor"] == pytest.approx(max(12 * sigma, 8))
    clk.check()


def test_criterion_05_ball_certificate():
    clk = Clock(60)
    T = brenier_radial(make_power_potential(2, 1.5))
    for x in (np.zeros(2), np.array([2.0, 0.0])):
        rep = ball_certificate(x, T(x), 2, mc_budget=10_000_000, seed=5)
        gb, g0 = rep.details["gamma_B"], rep.details["gamma_B0"]
        assert gb["estimate"] - 3 * gb["se"] > gb["floor"]
        assert g0["estimate"] - 3 * g0["se"] >= 0.75
        assert g0["exact"] == pytest.approx(1 - math.exp(-4), rel=1e-12)
        assert rep.passed
    clk.check()


@pytest.mark.parametrize("d", [2, 4])
def test_criterion_06_eigenvalue_concentration(d):
    clk = Clock(30)
    rep = eigen_log_variance(brenier_radial(make_power_potential(d, 1.5)), n=100_000, seed=6)
    assert rep.passed
    var, band = rep.details["variance"], rep.details["band"]
    assert max(var[k] - band[k] for k in var) <= 4
    clk.check()


def test_criterion_07_lp_growth():
    clk = Clock(60)
    T = brenier_radial(make_power_potential(2, 1.5))
    for e in ("radial", "tangential"):
        est = {p: lp_derivative_norm(T, e, p, n=100_000, seed=7) for p in (0, 2, 4, 8)}
        assert all(np.isfinite(v["estimate"]) and not v["heavy_tail"] for v in est.values()), e
        assert est[8]["estimate"] / est[2]["estimate"] <= 4, e
    clk.check()


def test_criterion_08_opnorm_growth():
    clk = Clock(30)
    rep = opnorm_growth_check(brenier_radial(make_power_potential(2, 1.5)))
    assert rep.passed and rep.exponent <= 2.1
    assert np.isfinite(rep.details["constants"]["conjectural"])
    clk.check()


def test_criterion_09_concentration_profile():
    clk = Clock(30)
    g = concentration_profile(sample_gaussian(2, 100_000, 9))
    assert 0.8 <= g.beta <= 1.2
    lap = concentration_profile(sample_target(make_laplace_product(1), 100_000, 9))
    assert abs(lap.alpha / math.sqrt(2) - 1) <= 0.25
    clk.check()


def test_criterion_10_solver_cross_validation():
    clk = Clock(300)
    pot = make_power_potential(2, 1.5)
    x = sample_gaussian(2, 1000, 10).points
    oracle = brenier_radial(pot)(x)

    Y, m = quantize_target(pot, 256, seed=11)
    sd = sd_map(semidiscrete_solve(Y, m, seed=12))
    sd_err = np.linalg.norm(sd(x) - oracle, axis=1).mean()
    assert sd_err < 0.15
    assert monotonicity_check(sd, seed=13).passed

    src = sample_gaussian(2, 6000, 14)
    tgt = sample_target(pot, 6000, 15)
    ent = entropic_map(src, tgt, 0.05, tol=1e-3)
    ent_err = np.linalg.norm(ent(x) - oracle, axis=1).mean()
    assert ent_err < 0.1
    assert monotonicity_check(ent, seed=16).passed
    print(f"semi-discrete mean error {sd_err:.4f}, entropic mean error {ent_err:.4f}")
    clk.check()


def test_criterion_11_harness_honesty():
    clk = Clock(5)
    assert not monotonicity_check(linear_map(-1.0, 2)).passed
    cubic = TransportMap(d=2, fn=lambda x: np.sum(x**2, axis=1, keepdims=True) * x)
    rep = displacement_bound_check(cubic)
    assert not rep.passed and rep.exponent > 2.1
    clk.check()
