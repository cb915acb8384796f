import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otbounds import (
    BoundReport, TransportMap, brenier_1d, brenier_radial, linear_map, make_gaussian, make_laplace_product,
    make_power_potential,
)
from otbounds.sampling import sample_gaussian, sample_target
from otbounds.verify import (
    ConcentrationSpec, ball_certificate, concentration_constant_bound_check, concentration_profile,
    displacement_bound_check, eigen_log_variance, fit_loglog, lp_derivative_norm, monotonicity_check,
    opnorm_growth_check, probe_design,
)

LAP = brenier_1d(make_laplace_product(1))
ZERO = TransportMap(d=2, fn=lambda x: 0 * x)
CUBIC = TransportMap(d=2, fn=lambda x: np.sum(x**2, axis=1, keepdims=True) * x)


@given(st.floats(0.1, 4.0), st.floats(-3, 3))
def test_fit_loglog_recovers_power_laws(k, c):
    r = np.geomspace(1, 50, 30)
    slope, (lo, hi), _ = fit_loglog(r, np.exp(c) * r**k)
    assert slope == pytest.approx(k, abs=1e-9) and lo <= slope <= hi


def test_fit_loglog_uses_largest_decade():
    r = np.geomspace(0.01, 100, 200)
    y = np.where(r < 10, r, r**2 / 10)
    slope, _, (rlo, rhi) = fit_loglog(r, y)
    assert slope == pytest.approx(2.0, abs=1e-9) and rlo >= 10 - 1e-9


def test_probe_design_reaches_far_shells():
    pr = probe_design(2, seed=3)
    assert pr.radii.max() == pytest.approx(3 * pr.r_quantile)
    assert pr.extrapolated.sum() == 3
    assert np.allclose(np.linalg.norm(pr.points, axis=1), pr.radii[pr.shell])


def test_displacement_identity():
    rep = displacement_bound_check(linear_map(1.0, 2))
    # max of r / (2 + r^2) is 1 / (2 sqrt 2) at r = sqrt 2; probes approach it from the grid
    assert rep.constant == pytest.approx(1 / (2 * math.sqrt(2)), rel=1e-3)
    assert rep.exponent == pytest.approx(1.0, abs=1e-9) and rep.passed


def test_displacement_laplace_slope_is_superlinear():
    # |T(x)| ~ x^2 / (2 sqrt 2) asymptotically: finite-range slope lies between 1 and 2
    rep = displacement_bound_check(LAP)
    assert rep.passed and 1.5 < rep.exponent < 2.0


def test_displacement_zero_and_cubic():
    z = displacement_bound_check(ZERO)
    assert z.constant == 0.0 and z.passed and math.isnan(z.exponent)
    c = displacement_bound_check(CUBIC)
    assert not c.passed and c.exponent == pytest.approx(3.0, abs=1e-6)
    assert c.worst_margin < 0


def test_report_invariants_and_json_round_trip():
    rep = displacement_bound_check(brenier_radial(make_power_potential(2, 1.5)), seed=4)
    assert rep.passed and rep.worst_margin >= -rep.tolerance
    lo, hi = rep.exponent_band
    assert lo <= rep.exponent <= hi
    back = BoundReport.from_dict(rep.to_dict())
    assert back.constant == rep.constant and back.exponent_band == rep.exponent_band
    assert rep.to_dict()["schema_version"] == 1
    with pytest.raises(ValueError):
        BoundReport("x", "y", True, exponent_band=(2.0, 1.0))


@pytest.mark.parametrize("sigma", [1.0, 2.0])
def test_gaussian_explicit_bound(sigma):
    spec = ConcentrationSpec("gaussian", sigma**-2, 3)
    rep = concentration_constant_bound_check(linear_map(sigma, 3), spec)
    assert rep.passed and rep.worst_margin > 0.5


def test_laplace_explicit_bound():
    spec = ConcentrationSpec("exponential", math.sqrt(2), 1)
    rep = concentration_constant_bound_check(LAP, spec, np.linspace(-8, 8, 161)[:, None])
    assert rep.passed


def test_explicit_bound_fails_for_cubic():
    rep = concentration_constant_bound_check(CUBIC, ConcentrationSpec("gaussian", 1.0, 2))
    assert not rep.passed


def test_concentration_spec_validation():
    with pytest.raises(ValueError):
        ConcentrationSpec("poisson", 1.0, 2)
    with pytest.raises(ValueError):
        ConcentrationSpec("gaussian", 0.0, 2)
    with pytest.raises(ValueError, match="no explicit"):
        concentration_constant_bound_check(LAP, ConcentrationSpec("lee-vempala-profile", 1.0, 1))


def test_profile_needs_enough_samples():
    with pytest.raises(ValueError):
        concentration_profile(sample_gaussian(2, 100, 0))


def test_profile_tail_at_zero_is_at_most_one():
    fit = concentration_profile(sample_gaussian(2, 20_000, 1), rs=np.array([0.0, 0.5, 1.0]))
    assert np.all(fit.table["tail"][0] <= 1.0)


def test_lp_identity_d4():
    est = lp_derivative_norm(linear_map(1.0, 4), [1, 0, 0, 0], 0, n=100_000, seed=1)
    # E[(4 + |x|^2)^-1]^(1/2) with |x|^2 ~ chi2(4), by 40-digit quadrature
    assert 0 < est["estimate"] <= 0.5
    assert est["estimate"] == pytest.approx(0.372386067290087, rel=5e-3)


def test_lp_homogeneity():
    a = lp_derivative_norm(linear_map(1.0, 2), [0, 1], 2, n=20_000, seed=2)["estimate"]
    b = lp_derivative_norm(linear_map(2.0, 2), [0, 1], 2, n=20_000, seed=2)["estimate"]
    assert b == pytest.approx(2 * a, rel=1e-12)


def test_lp_guards():
    with pytest.raises(ValueError):
        lp_derivative_norm(LAP, [1.0], 39)
    with pytest.raises(NotImplementedError):
        lp_derivative_norm(ZERO, [1, 0], 0)


def test_lp_flags_heavy_tail():
    heavy = TransportMap(d=1, fn=lambda x: x, eig_fn=lambda x: np.exp(x**2 / 2))
    assert lp_derivative_norm(heavy, [1.0], 4, n=10_000, seed=0)["heavy_tail"]


def test_opnorm_linear_and_laplace():
    rep = opnorm_growth_check(linear_map(3.0, 2))
    assert rep.passed and rep.exponent == pytest.approx(0.0, abs=1e-9)
    # sup of 3 / (2 + r^2)^2 is at the origin; innermost probe shell sits slightly outside
    assert 0.74 < rep.details["constants"]["proved"] <= 0.75
    lap = opnorm_growth_check(LAP, np.linspace(3, 10, 50)[:, None])
    assert lap.exponent == pytest.approx(1.0, abs=0.1)


def test_opnorm_needs_jacobian():
    with pytest.raises(NotImplementedError):
        opnorm_growth_check(ZERO)


def test_eigen_log_variance():
    assert eigen_log_variance(linear_map(2.0, 3), n=1000).constant == pytest.approx(0.0, abs=1e-20)
    rep = eigen_log_variance(LAP, n=100_000, seed=3)
    # 1D quadrature oracle at 30 digits: Var(log T') = 0.1023595...
    assert rep.passed and rep.constant == pytest.approx(0.10235950752058, abs=3 * rep.tolerance + 1e-4)
    bad = TransportMap(d=1, fn=lambda x: -x, eig_fn=lambda x: -np.ones((len(x), 1)))
    with pytest.raises(ValueError, match="degenerate"):
        eigen_log_variance(bad, n=10)


def test_monotonicity_self_tests():
    assert monotonicity_check(LAP).passed
    anti = monotonicity_check(linear_map(-1.0, 2))
    assert not anti.passed and anti.constant < 0


def test_ball_certificate_origin():
    rep = ball_certificate(np.zeros(2), np.zeros(2), 2, mc_budget=1_000_000, seed=1)
    g0 = rep.details["gamma_B0"]
    assert g0["exact"] == pytest.approx(1 - math.exp(-4), rel=1e-12)
    assert abs(g0["estimate"] - g0["exact"]) < 4 * g0["se"]
    gb = rep.details["gamma_B"]
    assert gb["exact"] == pytest.approx(0.0015767048366517, rel=1e-9)
    assert abs(gb["estimate"] - gb["exact"]) < 4 * gb["se"]
    assert rep.passed and rep.details["lipschitz"]["max_ratio"] <= 1.5 + 1e-12


def test_ball_certificate_integral_branch():
    tgt = sample_target(make_power_potential(2, 1.5), 50_000, 3)
    Tx = np.array([20.0, 0.0])
    rep = ball_certificate(np.zeros(2), Tx, 2, mc_budget=200_000, seed=2, target_samples=tgt)
    assert rep.details["integral"]["ok"] and rep.passed
    short = ball_certificate(np.zeros(2), np.array([1.0, 0]), 2, mc_budget=200_000, seed=2, target_samples=tgt)
    assert "integral" not in short.details and any("skipped" in n for n in short.notes)
