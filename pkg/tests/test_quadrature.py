import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from otbounds.quadrature import LogConcaveLine, potential_line, radial_line
from otbounds import make_gaussian, make_laplace_product, make_power_potential, cdf_1d


LAPLACE_LINE = potential_line(make_laplace_product(1))
POWER_LINE = potential_line(make_power_potential(1, 1.5))


@pytest.fixture(scope="module")
def gauss_line():
    return LogConcaveLine(lambda t: 0.5 * np.asarray(t) ** 2)


def test_gaussian_tails_match_scipy(gauss_line):
    t = np.linspace(-35, 35, 141)
    np.testing.assert_allclose(gauss_line.logcdf(t), stats.norm.logcdf(t), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(gauss_line.logsf(t), stats.norm.logsf(t), rtol=1e-10, atol=1e-12)


def test_log_normaliser(gauss_line):
    assert gauss_line.log_z == pytest.approx(0.5 * np.log(2 * np.pi), abs=1e-12)


def test_quantile_in_far_tails(gauss_line):
    x = np.array([-30.0, -8.0, -1.0, 0.3, 6.0, 25.0])
    upper = x > 0
    logp = np.where(upper, stats.norm.logsf(x), stats.norm.logcdf(x))
    np.testing.assert_allclose(gauss_line.quantile_log(logp, upper), x, rtol=1e-10)


@given(st.floats(1e-12, 1 - 1e-12))
def test_ppf_inverts_cdf(p):
    line = LAPLACE_LINE
    t = line.ppf(np.array([p]))
    assert line.cdf(t)[0] == pytest.approx(p, rel=1e-8, abs=1e-14)


@given(st.lists(st.floats(-40, 40), min_size=2, max_size=20))
def test_cdf_monotone(xs):
    line = POWER_LINE
    xs = np.sort(np.array(xs))
    assert np.all(np.diff(line.cdf(xs)) >= 0)


def test_laplace_cdf_closed_form():
    lap = make_laplace_product(1)
    y = np.linspace(-12, 12, 97)
    exact = np.where(y < 0, 0.5 * np.exp(np.sqrt(2) * y), 1 - 0.5 * np.exp(-np.sqrt(2) * y))
    np.testing.assert_allclose(cdf_1d(lap, y), exact, atol=1e-10)


def test_cdf_examples():
    assert cdf_1d(make_gaussian(1), 0.0) == pytest.approx(0.5, abs=1e-12)
    # closed form 1 - exp(-sqrt(2) y) / 2 at y = 0.81193, computed at 40 digits
    assert cdf_1d(make_laplace_product(1), 0.81193) == pytest.approx(0.841403113045764, abs=1e-10)
    far = cdf_1d(make_laplace_product(1), np.array([-50.0, -30.0, -10.0]))
    assert np.all(np.diff(far) > 0) and far[0] < 1e-30


def test_radial_line_is_chi_for_gaussian():
    line = radial_line(make_gaussian(3))
    r = np.array([0.01, 0.5, 1.5, 3.0, 8.0, 20.0])
    np.testing.assert_allclose(line.logcdf(r), stats.chi(3).logcdf(r), rtol=1e-9)
    np.testing.assert_allclose(line.logsf(r), stats.chi(3).logsf(r), rtol=1e-9)


def test_cache_is_per_potential_and_options():
    lap = make_laplace_product(1)
    assert potential_line(lap) is potential_line(lap)
    assert potential_line(lap, max_step=0.25) is not potential_line(lap)
