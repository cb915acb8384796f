import numpy as np
import pytest

from otbounds import (
    brenier_1d, brenier_radial, linear_map, make_gaussian, make_laplace_product, make_power_potential,
)
from otbounds.numeric import (
    ConvergenceError, SemiDiscretePlan, entropic_map, pushforward_test, quantize_target, sd_map,
    sd_map_eval, semidiscrete_solve,
)
from otbounds.sampling import sample_gaussian, sample_target
from otbounds.verify import monotonicity_check

PM = np.array([[1.0, 0.0], [-1.0, 0.0]])


def test_single_point_plan():
    plan = semidiscrete_solve(np.array([[0.3, -1.0]]), seed=1)
    assert plan.mass_residual == 0.0
    np.testing.assert_array_equal(sd_map_eval(plan, np.array([[5.0, 5.0], [-3, 1]])), [[0.3, -1.0]] * 2)


@pytest.fixture(scope="module")
def two_point():
    return semidiscrete_solve(PM, tol=1e-3, mc_budget=200_000, seed=2)


def test_two_points_symmetric(two_point):
    assert abs(two_point.weights[0] - two_point.weights[1]) < 0.01
    assert two_point.mass_residual <= 1e-3
    np.testing.assert_array_equal(sd_map_eval(two_point, [3.0, 0.0]), [1.0, 0.0])
    np.testing.assert_array_equal(sd_map_eval(two_point, [-3.0, 0.0]), [-1.0, 0.0])


def test_boundary_tie_goes_to_lowest_index():
    plan = SemiDiscretePlan(PM, np.array([0.5, 0.5]), np.zeros(2), 0.0, 0)
    np.testing.assert_array_equal(sd_map_eval(plan, np.array([[0.0, 2.0], [0.0, -7.0]])), [[1.0, 0.0]] * 2)
    flipped = SemiDiscretePlan(PM[::-1].copy(), np.array([0.5, 0.5]), np.zeros(2), 0.0, 0)
    np.testing.assert_array_equal(sd_map_eval(flipped, [0.0, 2.0]), [-1.0, 0.0])


def test_four_symmetric_points():
    Y = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]])
    plan = semidiscrete_solve(Y, tol=1e-3, mc_budget=400_000, seed=3)
    assert np.ptp(plan.weights) < 0.02
    G = np.bincount(plan.assign(sample_gaussian(2, 400_000, 99).points), minlength=4) / 400_000
    np.testing.assert_allclose(G, 0.25, atol=4e-3)


def test_unequal_masses_and_gauge():
    Y = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
    m = np.array([0.6, 0.3, 0.1])
    plan = semidiscrete_solve(Y, m, tol=5e-4, mc_budget=300_000, seed=4)
    assert abs(plan.weights.mean()) < 1e-12
    obj = plan.trace["objective"]
    assert np.all(np.diff(obj) >= -1e-12)
    G = np.bincount(plan.assign(sample_gaussian(2, 300_000, 4).points), minlength=3) / 300_000
    np.testing.assert_allclose(G, m, atol=5e-4 + 1e-12)


def test_rejects_bad_input():
    with pytest.raises(ValueError, match="duplicate"):
        semidiscrete_solve(np.array([[0.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(ValueError, match="masses"):
        semidiscrete_solve(PM, np.array([0.7, 0.7]))


def test_non_convergence_reports_best():
    Y = sample_gaussian(2, 30, 5).points
    with pytest.raises(ConvergenceError) as exc:
        semidiscrete_solve(Y, tol=1e-9, mc_budget=20_000, seed=5, max_iter=2)
    assert exc.value.best is not None and exc.value.best.n_iter <= 2


def test_plan_csv_round_trip(tmp_path, two_point):
    side = two_point.to_csv(tmp_path / "plan.csv")
    back = SemiDiscretePlan.from_csv(tmp_path / "plan.csv")
    np.testing.assert_array_equal(back.weights, two_point.weights)
    np.testing.assert_array_equal(back.points, two_point.points)
    assert back.mc_budget == two_point.mc_budget
    import json
    assert json.load(open(side))["mass_residual"] == two_point.mass_residual


def test_semidiscrete_map_is_monotone():
    Y = sample_gaussian(2, 40, 6).points
    plan = semidiscrete_solve(Y, tol=2e-3, mc_budget=100_000, seed=6)
    rep = monotonicity_check(sd_map(plan), seed=1)
    assert rep.passed and rep.constant >= 0


@pytest.fixture(scope="module")
def power2_oracle():
    p = make_power_potential(2, 1.5)
    x = sample_gaussian(2, 1000, 77).points
    return p, x, brenier_radial(p)(x)


def test_semidiscrete_error_shrinks_with_n(power2_oracle):
    p, x, Tx = power2_oracle
    errs = []
    for N in (16, 64):
        Y, m = quantize_target(p, N, seed=N)
        plan = semidiscrete_solve(Y, m, mc_budget=5000 * N, seed=N)
        errs.append(np.linalg.norm(sd_map_eval(plan, x) - Tx, axis=1).mean())
    assert errs[1] < errs[0]


def test_quantize_masses():
    Y, m = quantize_target(sample_gaussian(2, 5000, 1).points, 20, seed=1)
    assert len(Y) == len(m) <= 20 and m.sum() == pytest.approx(1.0)


# ------------------------------------------------------------------ entropic
def test_entropic_identical_samples():
    eps = 0.01
    X = sample_gaussian(2, 2000, 1)
    T = entropic_map(X, X, eps)
    held = sample_gaussian(2, 500, 2).points
    held = held[np.linalg.norm(held, axis=1) < 2.5]
    assert np.linalg.norm(T(held) - held, axis=1).mean() < 3 * np.sqrt(eps)


def test_entropic_affine_slope():
    X = sample_gaussian(1, 2000, 3).points
    T = entropic_map(X, 2 * X, 0.05)
    x = np.linspace(-1.5, 1.5, 31)[:, None]
    slope = np.polyfit(x[:, 0], T(x)[:, 0], 1)[0]
    assert slope == pytest.approx(2.0, rel=0.05)


def test_entropic_large_epsilon_gives_mean():
    X = sample_gaussian(2, 500, 4).points
    Y = sample_gaussian(2, 500, 5).points + [3.0, -1.0]
    T = entropic_map(X, Y, 1e4)
    np.testing.assert_allclose(T(X[:20]), np.broadcast_to(Y.mean(0), (20, 2)), atol=1e-2)


def test_entropic_jacobian_symmetric_psd_and_consistent():
    X = sample_gaussian(2, 800, 6).points
    Y = sample_target(make_power_potential(2, 1.5), 800, 7).points
    T = entropic_map(X, Y, 0.1)
    x = sample_gaussian(2, 30, 8).points
    J = T.jacobian(x)
    np.testing.assert_allclose(J, np.swapaxes(J, 1, 2), atol=1e-12)
    assert np.all(np.linalg.eigvalsh(J) > -1e-10)
    h = 1e-5
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        np.testing.assert_allclose(J[:, :, j], (T(x + e) - T(x - e)) / (2 * h), rtol=1e-4, atol=1e-6)


def test_entropic_converges_as_epsilon_shrinks():
    lap = make_laplace_product(1)
    T = brenier_1d(lap)
    X = sample_gaussian(1, 2000, 9).points
    Y = T(X)  # matched samples
    held = np.linspace(-2, 2, 41)[:, None]
    err = {eps: np.abs(entropic_map(X, Y, eps)(held) - T(held)).mean() for eps in (0.1, 0.01)}
    assert err[0.01] < err[0.1]


def test_entropic_error_shrinks_with_inverse_epsilon(power2_oracle):
    p, x, Tx = power2_oracle
    X = sample_gaussian(2, 2000, 10)
    Y = sample_target(p, 2000, 11)
    errs = [np.linalg.norm(entropic_map(X, Y, eps)(x) - Tx, axis=1).mean() for eps in (1.0, 0.1)]
    assert errs[1] < errs[0]


def test_entropic_validation():
    X = np.zeros((3, 2))
    with pytest.raises(ValueError):
        entropic_map(X, np.zeros((3, 1)), 0.1)
    with pytest.raises(ValueError):
        entropic_map(X, X, 0.0)
    with pytest.raises(ConvergenceError):
        entropic_map(sample_gaussian(2, 300, 1), sample_gaussian(2, 300, 2), 1e-3, max_iters=3, tol=1e-12)


# ------------------------------------------------------------- pushforward
def test_pushforward_exact_laplace():
    lap = make_laplace_product(1)
    out = pushforward_test(brenier_1d(lap), lap, 100_000, 1)
    assert out["ks_stat"] < out["ks_crit_99"] and out["passed"]


def test_pushforward_identity():
    out = pushforward_test(linear_map(1.0, 3), make_gaussian(3), 50_000, 2)
    assert out["passed"]


def test_pushforward_detects_wrong_map():
    out = pushforward_test(linear_map(1.3, 2), make_gaussian(2), 50_000, 3)
    assert not out["passed"]


def test_pushforward_semidiscrete_power():
    p = make_power_potential(2, 1.5)
    Y, m = quantize_target(p, 256, seed=1)
    plan = semidiscrete_solve(Y, m, mc_budget=500_000, seed=2)
    out = pushforward_test(sd_map(plan), p, 100_000, 3)
    assert out["cov_diff_op"] < 0.1
