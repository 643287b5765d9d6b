import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from qgarch._kernels import objective
from qgarch.core import DomainError, QGarchParams, ReturnSeries, check_loss, cond_quantile_path, psi
from qgarch.qr import (
    Box,
    QrFitConfig,
    bandwidth_bofinger,
    bandwidth_hall_sheather,
    multi_tau_fit,
    qr_asymptotic_cov,
    qr_fit,
    rearrange,
    resolve_weights,
    solve_linear_qr,
    weighted_check_loss,
)


def lp_oracle(y, z0, z1, c, tau):
    """Weighted linear QR as a linear program (HiGHS)."""
    n = y.size
    A = np.hstack([z0[:, None], z1[:, None], np.eye(n), -np.eye(n)])
    cost = np.r_[0.0, 0.0, c * tau, c * (1.0 - tau)]
    bounds = [(None, None)] * 2 + [(0, None)] * (2 * n)
    res = optimize.linprog(cost, A_eq=A, b_eq=y, bounds=bounds, method="highs")
    assert res.status == 0
    return res.fun


# --------------------------------------------------------------------------
# inner solver
# --------------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_inner_solver_matches_lp(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 201))
    z1 = np.abs(rng.standard_t(3, size=n)).cumsum() * rng.uniform(0.01, 1)
    z0 = np.ones(n)
    y = rng.standard_t(3, size=n) + 0.3 * z1
    c = rng.uniform(0.05, 1.0, size=n)
    tau = np.full(n, rng.uniform(0.01, 0.99))
    _, _, f = solve_linear_qr(y, z0, z1, c, tau)
    ref = lp_oracle(y, z0, z1, c, tau)
    assert f == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_inner_solver_per_row_tau(rng):
    n = 150
    z1 = rng.uniform(0, 3, size=n)
    y = rng.normal(size=n) * (1 + z1)
    c = np.ones(n)
    tau = rng.choice([0.1, 0.5, 0.9], size=n)
    _, _, f = solve_linear_qr(y, np.ones(n), z1, c, tau)
    assert f == pytest.approx(lp_oracle(y, np.ones(n), z1, c, tau), rel=1e-9)


def test_inner_solver_box(rng):
    n = 120
    z1 = rng.uniform(0, 2, size=n)
    y = 1.0 + 2.0 * z1 + rng.normal(size=n)
    c = np.ones(n)
    tau = np.full(n, 0.3)
    t0, t1, f = solve_linear_qr(y, np.ones(n), z1, c, tau, bounds1=(-math.inf, 0.5))
    assert t1 <= 0.5
    # brute force over the bounded slope
    grid = np.linspace(-3, 0.5, 701)
    best = min(
        optimize.minimize_scalar(lambda a: objective(y, np.ones(n), z1, c, tau, a, b), bounds=(-10, 10), method="bounded").fun
        for b in grid
    )
    assert f <= best + 1e-9


# --------------------------------------------------------------------------
# fit
# --------------------------------------------------------------------------


def test_constant_model_is_weighted_quantile(rng):
    y = ReturnSeries(rng.normal(size=400))
    cfg = QrFitConfig(0.1, box=Box(alpha1=(0.0, 0.0)), compute_cov=False)
    fit = qr_fit(y, cfg)
    w = resolve_weights(y, None)
    grid = np.sort(y.values)
    losses = [weighted_check_loss(y.values, q, w, 0.1) for q in grid]
    assert fit.objective_value == pytest.approx(min(losses), abs=1e-8)
    assert fit.theta_hat.alpha1 == 0.0


def test_fit_beats_random_parameters(garch_normal, rng):
    cfg = QrFitConfig(0.05, compute_cov=False)
    fit = qr_fit(garch_normal, cfg)
    w = resolve_weights(garch_normal, None)
    y = garch_normal.values
    for _ in range(100):
        th = QGarchParams(rng.normal(-0.2, 0.1), rng.normal(-0.2, 0.1), rng.uniform(0, 0.999))
        q = cond_quantile_path(th, y)[:-1]
        assert fit.objective_value <= weighted_check_loss(y, q, w, 0.05) + 1e-12
    q = cond_quantile_path(fit.theta_hat, y)[:-1]
    assert weighted_check_loss(y, q, w, 0.05) == pytest.approx(fit.objective_value, rel=1e-12)


def test_fit_recovers_truth(garch_normal):
    fit = qr_fit(garch_normal, QrFitConfig(0.05))
    truth = np.array([-0.1645, -0.1645, 0.8])
    assert np.all(np.abs(fit.theta_hat.as_array() - truth) < 4 * fit.std_errors + 0.02)


def test_scale_equivariance(garch_normal):
    k = 3.7
    cfg = QrFitConfig(0.1, weights="ones", compute_cov=False)
    a = qr_fit(garch_normal, cfg).theta_hat
    b = qr_fit(ReturnSeries(k * garch_normal.values), cfg).theta_hat
    # x_t(beta) scales with y, so only the intercept absorbs k
    assert b.omega == pytest.approx(k * a.omega, rel=1e-6, abs=1e-9)
    assert b.alpha1 == pytest.approx(a.alpha1, rel=1e-6, abs=1e-9)
    assert b.beta1 == pytest.approx(a.beta1, abs=1e-9)


def test_subgradient_condition(garch_normal):
    fit = qr_fit(garch_normal, QrFitConfig(0.05, weights="ones", compute_cov=False))
    y = garch_normal.values
    th = fit.theta_hat
    q = cond_quantile_path(th, y)[:-1]
    r = y - q
    z = np.column_stack([np.ones_like(y), cond_quantile_path(QGarchParams(0.0, 1.0, th.beta1), y)[:-1]])
    g = z.T @ psi(0.05, r)
    interp = np.abs(r) < 1e-9
    bound = np.abs(z[interp]).sum(axis=0) + 1e-8
    assert np.all(np.abs(g) <= bound)


def test_small_sample_rejected():
    with pytest.raises(DomainError):
        qr_fit(np.ones(10), QrFitConfig(0.5))
    with pytest.raises(DomainError):
        qr_fit(np.zeros(100), QrFitConfig(0.5))


def test_weights_length_checked(garch_normal):
    with pytest.raises(DomainError):
        qr_fit(garch_normal, QrFitConfig(0.5, weights=np.ones(5)))


# --------------------------------------------------------------------------
# bandwidths and covariance
# --------------------------------------------------------------------------


def test_bandwidth_values():
    assert bandwidth_hall_sheather(0.5, 1000) == pytest.approx(0.0971, abs=1e-4)
    assert bandwidth_bofinger(0.5, 1000) == pytest.approx(0.1627, abs=1e-4)
    assert bandwidth_bofinger(0.5, 10**5) / bandwidth_bofinger(0.5, 10**3) == pytest.approx(100 ** -0.2)


def test_covariance_symmetric(garch_normal):
    fit = qr_fit(garch_normal, QrFitConfig(0.05))
    np.testing.assert_allclose(fit.cov, fit.cov.T, atol=1e-10)
    assert np.all(np.diag(fit.cov) >= 0)
    assert fit.bandwidth_used[0] == "hs"


def test_covariance_invariant_to_weight_scale(garch_normal):
    w = resolve_weights(garch_normal, None)
    a = qr_fit(garch_normal, QrFitConfig(0.05, weights=w))
    b = qr_fit(garch_normal, QrFitConfig(0.05, weights=2 * w))
    np.testing.assert_allclose(a.cov, b.cov, rtol=1e-8)


def test_iid_intercept_variance_matches_textbook():
    # a single sample's difference-quotient density is noisy, so average
    tau, n = 0.25, 5000
    f = stats.norm.pdf(stats.norm.ppf(tau))
    textbook = tau * (1 - tau) / (f * f * n)
    cfg = QrFitConfig(tau, weights="ones", box=Box(alpha1=(0.0, 0.0)))
    ratios = []
    for seed in range(10):
        y = ReturnSeries(np.random.default_rng(seed).normal(size=n))
        fit = qr_fit(y, cfg)
        assert fit.cov[1, 1] == fit.cov[2, 2] == 0.0
        ratios.append(fit.cov[0, 0] / textbook)
    assert np.mean(ratios) == pytest.approx(1.0, abs=0.10)


def test_asymptotic_cov_from_fits(garch_normal):
    cfg = QrFitConfig(0.05, compute_cov=False)
    w = resolve_weights(garch_normal, None)
    fit = qr_fit(garch_normal, QrFitConfig(0.05))
    ell = fit.bandwidth_used[1]
    lo = qr_fit(garch_normal, cfg.with_tau(0.05 - ell))
    hi = qr_fit(garch_normal, cfg.with_tau(0.05 + ell))
    cov = qr_asymptotic_cov(garch_normal, qr_fit(garch_normal, cfg), lo, hi, w, ell)
    np.testing.assert_allclose(cov, fit.cov, rtol=1e-10)


# --------------------------------------------------------------------------
# multiple levels and rearrangement
# --------------------------------------------------------------------------


def test_multi_tau_single_level(garch_normal):
    cfg = QrFitConfig(0.1, compute_cov=False)
    (a,) = multi_tau_fit(garch_normal, [0.1], cfg)
    b = qr_fit(garch_normal, cfg)
    assert a.theta_hat == b.theta_hat


def test_multi_tau_rejects_reversed(garch_normal):
    with pytest.raises(DomainError):
        multi_tau_fit(garch_normal, [0.9, 0.1], QrFitConfig(0.1))


def test_rearrange_examples():
    np.testing.assert_array_equal(rearrange([1.0, 0.8, 1.2]), [0.8, 1.0, 1.2])
    np.testing.assert_array_equal(rearrange([-1.0, 0.0, 2.0]), [-1.0, 0.0, 2.0])


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
def test_rearrange_idempotent_and_multiset(values):
    r = rearrange(values)
    np.testing.assert_array_equal(rearrange(r), r)
    assert np.all(np.diff(r) >= 0)
    np.testing.assert_array_equal(np.sort(values), r)


def test_rearrange_reduces_check_loss():
    rng = np.random.default_rng(5)
    taus = np.array([0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95])
    done = 0
    while done < 100:
        n = 50
        y = rng.normal(size=n)
        q = np.sort(rng.normal(size=(n, taus.size)), axis=1) + rng.normal(scale=0.8, size=(n, taus.size))
        if np.all(np.diff(q, axis=1) >= 0):
            continue
        done += 1
        before = sum(check_loss(t, y - q[:, k]).sum() for k, t in enumerate(taus))
        r = rearrange(q, axis=1)
        after = sum(check_loss(t, y - r[:, k]).sum() for k, t in enumerate(taus))
        assert after <= before + 1e-12
