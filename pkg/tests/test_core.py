import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qgarch.core import (
    CoefficientFunctions,
    DomainError,
    QGarchParams,
    ReturnSeries,
    SelfWeightConfig,
    TukeyGarchParams,
    check_loss,
    compute_self_weights,
    cond_quantile,
    cond_quantile_grad,
    cond_quantile_path,
    cond_quantile_path_grad,
    normal_quantile,
    psi,
    sample_quantile,
    stationarity_check,
    tukey_quantile,
    tukey_quantile_derivs,
    weight_tail_sum,
)
from qgarch.simulate import preset_setting

taus = st.floats(0.001, 0.999)
reals = st.floats(-1e3, 1e3, allow_nan=False)


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------


def test_series_rejects_nonfinite():
    with pytest.raises(DomainError, match="position 2"):
        ReturnSeries([1.0, np.nan])


def test_series_label_length():
    with pytest.raises(DomainError):
        ReturnSeries([1.0, 2.0], labels=("a",))


def test_series_is_read_only():
    s = ReturnSeries([1.0, 2.0])
    with pytest.raises(ValueError):
        s.values[0] = 3.0


def test_params_box():
    QGarchParams(0.1, 0.2, 1.0 - 1e-6)
    with pytest.raises(DomainError):
        QGarchParams(0.1, 0.2, 1.0 - 1e-7)
    with pytest.raises(DomainError):
        QGarchParams(0.1, math.inf, 0.5)


def test_tukey_params_invariants():
    with pytest.raises(DomainError):
        TukeyGarchParams(0.0, 0.1, 0.5, -0.2)
    with pytest.raises(DomainError):
        TukeyGarchParams(0.1, -0.1, 0.5, -0.2)
    with pytest.raises(DomainError):
        TukeyGarchParams(0.1, 0.1, 0.5, 1e-9)


def test_coefficient_functions_identification():
    with pytest.raises(DomainError, match="omega"):
        CoefficientFunctions(lambda u: u, lambda u: u - 0.5, lambda u: 0.5 + 0 * u)
    with pytest.raises(DomainError, match="beta1"):
        CoefficientFunctions(lambda u: u - 0.5, lambda u: u - 0.5, lambda u: 1.0 + 0 * u)


# --------------------------------------------------------------------------
# check loss
# --------------------------------------------------------------------------


@pytest.mark.parametrize("tau, x, expected", [(0.5, 2.0, 1.0), (0.3, 0.0, 0.0), (0.05, -1.0, 0.95)])
def test_check_loss_examples(tau, x, expected):
    assert check_loss(tau, x) == pytest.approx(expected)


@pytest.mark.parametrize("tau, x, expected", [(0.5, 1.0, 0.5), (0.05, -0.1, -0.95), (0.9, 0.0, 0.9)])
def test_psi_examples(tau, x, expected):
    assert psi(tau, x) == pytest.approx(expected)


@pytest.mark.parametrize("tau", [0.0, 1.0, -0.1])
def test_check_loss_domain(tau):
    with pytest.raises(DomainError):
        check_loss(tau, 1.0)


@given(taus, reals)
def test_check_loss_nonnegative_and_matches_psi(tau, x):
    loss = check_loss(tau, x)
    assert loss >= 0.0
    assert (loss == 0.0) == (x == 0.0)
    assert loss == pytest.approx(x * psi(tau, x), abs=1e-12)


# --------------------------------------------------------------------------
# conditional quantile
# --------------------------------------------------------------------------


def test_cond_quantile_examples():
    th = QGarchParams(0.1, 0.2, 0.5)
    assert cond_quantile(th, [1.0, 2.0], 3) == pytest.approx(0.6)
    assert cond_quantile(QGarchParams(0.3, 0.0, 0.7), [5.0, 1.0, 2.0], 4) == pytest.approx(0.3)
    fitted = QGarchParams(-0.380, -0.341, 0.790)
    assert cond_quantile(fitted, [1.0, 2.0], 3) == pytest.approx(-1.33139, abs=1e-10)


def test_cond_quantile_rejects_t0():
    with pytest.raises(DomainError):
        cond_quantile(QGarchParams(0.1, 0.2, 0.5), [], 0)


def test_cond_quantile_grad_examples():
    th = QGarchParams(0.1, 0.2, 0.5)
    np.testing.assert_allclose(cond_quantile_grad(th, [1.0, 2.0], 3), [1.0, 2.5, 0.2])
    np.testing.assert_array_equal(cond_quantile_grad(th, [], 1), [1.0, 0.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_recursion_matches_direct_sum(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 1000))
    a = np.abs(rng.standard_t(3, size=n))
    th = QGarchParams(rng.normal(), rng.normal(), rng.uniform(0, 0.999))
    path = cond_quantile_path(th, a)
    for t in (1, n // 2 + 1, n + 1):
        direct = th.omega + th.alpha1 * sum(th.beta1 ** (j - 1) * a[t - 1 - j] for j in range(1, t))
        assert path[t - 1] == pytest.approx(direct, rel=1e-10, abs=1e-12)


def _fd_grad(th, a, t, h=1e-6):
    g = np.empty(3)
    base = th.as_array()
    for k in range(3):
        up, dn = base.copy(), base.copy()
        up[k] += h
        dn[k] -= h
        g[k] = (cond_quantile(QGarchParams.from_array(up), a, t) - cond_quantile(QGarchParams.from_array(dn), a, t)) / (2 * h)
    return g


def test_grad_matches_finite_differences(rng):
    for _ in range(100):
        a = np.abs(rng.normal(size=50))
        th = QGarchParams(rng.normal(), rng.normal(), rng.uniform(0.05, 0.95))
        np.testing.assert_allclose(cond_quantile_grad(th, a, 51), _fd_grad(th, a, 51), rtol=1e-6, atol=1e-8)


def test_path_grad_consistent_with_pointwise(rng):
    a = rng.normal(size=40)
    th = QGarchParams(0.2, -0.3, 0.6)
    g = cond_quantile_path_grad(th, a)
    for t in (1, 7, 41):
        np.testing.assert_allclose(g[t - 1], cond_quantile_grad(th, np.abs(a), t), rtol=1e-12)


# --------------------------------------------------------------------------
# Tukey-lambda
# --------------------------------------------------------------------------


def test_tukey_examples():
    assert tukey_quantile(0.3, 1.0) == pytest.approx(-0.4)
    # mpmath at 30 digits; 0.1 * Q rounds to the -0.942 of the F_T design
    assert tukey_quantile(0.005, -0.2) == pytest.approx(-9.421984003851208, rel=1e-13)
    assert round(0.1 * tukey_quantile(0.005, -0.2), 3) == -0.942
    assert tukey_quantile(0.5, -0.37) == 0.0


def test_tukey_lambda_zero_rejected():
    with pytest.raises(DomainError):
        tukey_quantile(0.3, 0.0)


@given(taus, st.floats(-2.0, 2.0).filter(lambda v: abs(v) > 1e-3))
def test_tukey_antisymmetric(tau, lam):
    assert tukey_quantile(1.0 - tau, lam) == pytest.approx(-tukey_quantile(tau, lam), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("lam", [-0.5, -0.2, 0.14, 0.5])
def test_tukey_increasing(lam):
    grid = np.arange(1, 100) / 100
    assert np.all(np.diff(tukey_quantile(grid, lam)) > 0)


@settings(max_examples=50)
@given(st.floats(0.002, 0.998), st.floats(-1.0, 1.0).filter(lambda v: abs(v) > 0.01))
def test_tukey_derivs_match_finite_differences(tau, lam):
    _, d1, d2 = tukey_quantile_derivs(tau, lam)
    h = 1e-5
    fd1 = (tukey_quantile(tau, lam + h) - tukey_quantile(tau, lam - h)) / (2 * h)
    _, up, _ = tukey_quantile_derivs(tau, lam + h)
    _, dn, _ = tukey_quantile_derivs(tau, lam - h)
    fd2 = (up - dn) / (2 * h)
    assert d1 == pytest.approx(fd1, rel=1e-6, abs=1e-8)
    assert d2 == pytest.approx(fd2, rel=1e-6, abs=1e-7)


# --------------------------------------------------------------------------
# normal helpers
# --------------------------------------------------------------------------


def test_normal_quantile_values():
    assert abs(normal_quantile(0.5)) < 1e-12
    assert normal_quantile(0.005) == pytest.approx(-2.5758, abs=1e-4)
    assert normal_quantile(0.975) == pytest.approx(1.959964, abs=1e-6)
    with pytest.raises(DomainError):
        normal_quantile(1.0)


# --------------------------------------------------------------------------
# self-weights
# --------------------------------------------------------------------------


def test_weight_tail_sum():
    # mpmath nsum of exp(-ln^2(i+1)) over i >= 0
    assert weight_tail_sum() == pytest.approx(2.238181306796693, rel=1e-11)


def test_weights_below_threshold_are_constant():
    y = ReturnSeries(np.r_[np.full(50, 0.1), 1.0])
    w = compute_self_weights(y, c=0.5)
    np.testing.assert_allclose(w, weight_tail_sum() ** -3)
    assert w[0] == pytest.approx(0.08918959818902493, rel=1e-10)


def test_single_exceedance_doubles_its_summand():
    c = 1.0
    y = ReturnSeries([0.1, 2.0, 0.1, 0.1, 0.1])
    w = compute_self_weights(y, c=c)
    s_inf = weight_tail_sum()
    # at t = 4 the exceedance sits at lag i = 1 (kernel exp(-ln^2 2))
    assert w[3] ** (-1 / 3) == pytest.approx(s_inf + math.exp(-math.log(2.0) ** 2), rel=1e-12)


def test_weights_scale_invariant(rng):
    y = ReturnSeries(rng.standard_t(3, size=300))
    w1 = compute_self_weights(y)
    w2 = compute_self_weights(ReturnSeries(7.5 * y.values))
    np.testing.assert_allclose(w1, w2, rtol=1e-12)


def test_weights_are_predictable(rng):
    y = rng.standard_t(3, size=400)
    c = float(sample_quantile(y, 0.95))
    w_short = compute_self_weights(ReturnSeries(y[:200]), c=c)
    w_long = compute_self_weights(ReturnSeries(y), c=c)
    np.testing.assert_allclose(w_short, w_long[:200], rtol=1e-13)


def test_weights_match_direct_sum(rng):
    y = rng.standard_t(2, size=120)
    c = 0.8
    w = compute_self_weights(ReturnSeries(y), c=c)
    i = np.arange(200_000)
    kappa = np.exp(-np.log1p(i) ** 2)
    for t in (1, 2, 60, 120):
        past = np.abs(y[: t - 1][::-1])
        terms = np.ones(kappa.size)
        terms[: past.size] = np.maximum(1.0, past / c)
        assert w[t - 1] == pytest.approx(np.sum(kappa * terms) ** -3, rel=1e-10)


def test_weights_zero_threshold():
    with pytest.raises(DomainError):
        compute_self_weights(ReturnSeries(np.zeros(10)))


def test_threshold_conventions(rng):
    y = ReturnSeries(rng.normal(size=500))
    w_y = compute_self_weights(y)
    w_abs = compute_self_weights(y, SelfWeightConfig(c_from_abs=True))
    assert np.all(w_abs >= w_y - 1e-15)


# --------------------------------------------------------------------------
# stationarity
# --------------------------------------------------------------------------


def test_stationarity_trivial():
    coef = CoefficientFunctions(lambda u: u - 0.5, lambda u: 0 * u, lambda u: 0.5 + 0 * u)
    rep = stationarity_check(coef)
    assert rep.satisfied and rep.sum_estimate == 0.0


def test_stationarity_setting_53():
    assert stationarity_check(preset_setting("5.3", "normal")).satisfied


def test_stationarity_linear_garch():
    # sum_j E|alpha| beta^(j-1) = 0.1 E|Z| / (1 - 0.8)
    rep = stationarity_check(preset_setting("5.2", "normal"))
    assert rep.sum_estimate == pytest.approx(0.1 * math.sqrt(2 / math.pi) / 0.2, abs=4 * rep.std_error + 1e-3)
    assert rep.satisfied


def test_stationarity_s_above_one():
    rep = stationarity_check(preset_setting("5.2", "normal"), s=2.0)
    # (E alpha^2)^(1/2) sum beta^(j-1) = 0.1 / 0.2
    assert rep.sum_estimate == pytest.approx(0.5, rel=0.02)


def test_stationarity_monotone_in_beta():
    verdicts = []
    for b in (0.1, 0.5, 0.8, 0.9, 0.95):
        coef = CoefficientFunctions(lambda u: u - 0.5, lambda u: 0.2 * stats.norm.ppf(u), lambda u, b=b: b + 0 * u)
        verdicts.append(stationarity_check(coef).satisfied)
    assert verdicts == sorted(verdicts, reverse=True)
    assert verdicts[0] and not verdicts[-1]


def test_stationarity_rejects_small_draws():
    with pytest.raises(DomainError):
        stationarity_check(preset_setting("5.2", "normal"), mc_draws=100)
