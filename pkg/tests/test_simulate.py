import numpy as np
import pytest
from scipy import stats

from qgarch.core import CoefficientFunctions, DomainError, NumericalError
from qgarch.simulate import SimulationSpec, max_lag, preset_setting, simulate_qgarch


def test_spec_validation():
    coef = preset_setting("5.2", "normal")
    with pytest.raises(DomainError):
        SimulationSpec(coef, 0)
    with pytest.raises(DomainError):
        SimulationSpec(coef, 10, burn_in=-1)


def test_presets_true_values():
    th = preset_setting("5.2", "normal").at(0.05)
    assert (round(th.omega, 3), round(th.alpha1, 3), th.beta1) == (-0.164, -0.164, 0.8)
    th = preset_setting("5.3", "tukey").at(0.005)
    assert round(th.alpha1, 3) == -1.437
    assert preset_setting("5.2", "normal").at(0.005).omega == pytest.approx(-0.258, abs=5e-4)
    coef = preset_setting("5.4", "normal", 0.0)
    u = np.linspace(0.01, 0.99, 50)
    np.testing.assert_array_equal(coef.beta1_fn(u), 0.3)


def test_preset_errors():
    with pytest.raises(DomainError):
        preset_setting("6.1")
    with pytest.raises(DomainError):
        preset_setting("5.2", "cauchy")
    with pytest.raises(DomainError):
        preset_setting("5.4", "normal", 3.0)


def test_iid_when_alpha_zero():
    coef = CoefficientFunctions(stats.norm.ppf, lambda u: 0.0 * u, lambda u: 0.5 + 0.0 * u, "iid")
    y = simulate_qgarch(SimulationSpec(coef, 2000, seed=3))
    assert stats.kstest(y.values, "norm").statistic < 0.05


def test_median_near_zero():
    y = simulate_qgarch(SimulationSpec(preset_setting("5.2", "normal"), 100_000, seed=5))
    assert abs(np.median(y.values)) < 0.02


def test_deterministic():
    spec = SimulationSpec(preset_setting("5.3", "tukey"), 500, seed=99)
    np.testing.assert_array_equal(simulate_qgarch(spec).values, simulate_qgarch(spec).values)


def test_sign_matches_draw():
    spec = SimulationSpec(preset_setting("5.2", "tukey"), 3000, seed=8)
    y, u = simulate_qgarch(spec, return_draws=True)
    nz = u != 0.5
    np.testing.assert_array_equal(np.sign(y.values[nz]), np.sign(u[nz] - 0.5))


def test_path_matches_direct_recursion():
    coef = preset_setting("5.3", "normal")
    spec = SimulationSpec(coef, 200, burn_in=50, seed=4)
    y, _ = simulate_qgarch(spec, return_draws=True)
    u = np.random.default_rng(4).uniform(size=250)
    om, al, be = coef.draw(u)
    full = np.zeros(250)
    for t in range(250):
        lags = np.abs(full[:t][::-1])
        full[t] = om[t] + al[t] * np.sum(be[t] ** np.arange(t) * lags)
    np.testing.assert_allclose(y.values, full[50:], rtol=1e-10, atol=1e-12)


def test_truncation_refinement():
    coef = preset_setting("5.2", "tukey")
    a = simulate_qgarch(SimulationSpec(coef, 1000, seed=1, truncation_tol=1e-12)).values
    b = simulate_qgarch(SimulationSpec(coef, 1000, seed=1, truncation_tol=5e-13)).values
    np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-12)


def test_burn_in_reaches_stationarity():
    coef = preset_setting("5.2", "normal")
    a = np.abs(simulate_qgarch(SimulationSpec(coef, 20_000, burn_in=500, seed=21)).values)
    b = np.abs(simulate_qgarch(SimulationSpec(coef, 20_000, burn_in=1000, seed=22)).values)
    se = np.hypot(a.std() / np.sqrt(a.size), b.std() / np.sqrt(b.size))
    # serial dependence inflates the naive standard error
    assert abs(a.mean() - b.mean()) < 3 * 3 * se


def test_max_lag():
    assert max_lag(preset_setting("5.2", "normal"), 1e-12) == int(np.ceil(np.log(1e-12) / np.log(0.8)))


def test_explosive_path_reports_time():
    coef = CoefficientFunctions(
        lambda u: u - 0.5, lambda u: 50.0 * (u - 0.5), lambda u: 0.99 + 0.0 * u, "explosive"
    )
    with pytest.warns(RuntimeWarning), pytest.raises(NumericalError, match="t="):
        simulate_qgarch(SimulationSpec(coef, 5000, seed=0))
