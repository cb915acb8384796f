import numpy as np
import pytest
from scipy import integrate

from otbounds import (
    hessian_band_check, is_radial, isotropize, make_gaussian, make_laplace_product, make_power_potential,
)
from otbounds.measures import power_isotropic_scale
from otbounds.sampling import sample_gaussian


def _fd_grad(f, x, h=1e-6):
    g = np.empty_like(x)
    for j in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[j] = h
        g[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.mark.parametrize("pot", [make_gaussian(3, 2.0), make_power_potential(3, 1.5), make_power_potential(2, 1.2)])
def test_gradient_and_hessian_match_finite_differences(pot, rng):
    x = rng.standard_normal((20, pot.d)) * 2
    np.testing.assert_allclose(pot.grad(x), _fd_grad(pot.V, x), rtol=1e-6, atol=1e-7)
    H = pot.hess(x)
    for j in range(pot.d):
        np.testing.assert_allclose(H[:, :, j], _fd_grad(lambda y: pot.grad(y)[:, j], x), rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_power_family_is_isotropic(d):
    p = 1.5
    a = power_isotropic_scale(d, p)
    dens = lambda r, k: r ** (d - 1 + k) * np.exp(-a * (d + r * r) ** (p / 2) + a * d ** (p / 2))
    z = integrate.quad(dens, 0, np.inf, args=(0,))[0]
    m2 = integrate.quad(dens, 0, np.inf, args=(2,))[0]
    assert m2 / z == pytest.approx(d, rel=1e-8)


def test_power_scale_is_one_half_at_p2():
    assert power_isotropic_scale(3, 2.0) == pytest.approx(0.5)


def test_power_rejects_out_of_range_exponent():
    with pytest.raises(ValueError):
        make_power_potential(2, 1.0)
    with pytest.raises(ValueError):
        make_power_potential(2, 2.5)


def test_radial_detection():
    assert is_radial(make_power_potential(3, 1.5))
    assert is_radial(make_gaussian(2))
    assert not is_radial(make_laplace_product(2))


def test_hessian_band(rng):
    pts = rng.standard_normal((500, 2)) * 3
    assert hessian_band_check(make_power_potential(2, 1.5), pts).passed
    assert hessian_band_check(make_gaussian(2), pts).passed
    lap = hessian_band_check(make_laplace_product(2), np.vstack([pts, [[0.0, 1.0]]]))
    assert not lap.passed
    assert any("non-smooth" in n for n in lap.notes)


def test_laplace_gradient_undefined_at_kinks():
    lap = make_laplace_product(2)
    g = lap.grad(np.array([[0.0, 1.0], [1.0, 1.0]]))
    assert np.all(np.isnan(g[0])) and np.all(np.isfinite(g[1]))


def test_isotropize_whitens():
    d = 2
    base = make_gaussian(d, 1.0)
    A = np.array([[2.0, 0.5], [0.0, 0.7]])
    X = sample_gaussian(d, 50_000, 3).points @ A.T + np.array([1.0, -2.0])
    from dataclasses import replace
    aniso = replace(base, value=lambda x: base.value((x - [1.0, -2.0]) @ np.linalg.inv(A).T))
    iso = isotropize(aniso, X)
    assert iso.isotropic and iso.centered
    # pushing X forward gives whitened points
    Aw = np.array(iso.params["affine_A"])
    Y = (X - iso.params["affine_m"]) @ Aw.T
    np.testing.assert_allclose(np.cov(Y, rowvar=False, bias=True), np.eye(d), atol=1e-10)
    with pytest.raises(ValueError):
        isotropize(base, X[:10])


def test_isotropize_rejects_singular():
    X = np.column_stack([np.arange(100.0), np.arange(100.0)])
    with pytest.raises(ValueError, match="singular"):
        isotropize(make_gaussian(2), X)
