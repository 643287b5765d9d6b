"""Rolling one-step-ahead quantile forecasts and Value-at-Risk backtests.

Three forecasting methods are supported: self-weighted QR, composite QR
(``h`` chosen on a validation block) and filtered historical simulation
(FHS) built on a Gaussian QMLE of the linear GARCH(1,1) scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, signal, stats

from .core import DomainError, NumericalError, as_series, geometric_sums, sample_quantile
from .cqr import CqrConfig, cqr_fit, select_bandwidth_h
from .qr import QrFitConfig, qr_fit

METHODS = ("qr", "cqr", "fhs")
MAX_FAIL_FRACTION = 0.05
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


# --------------------------------------------------------------------------
# result types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ForecastRun:
    """Forecasts over the test block.

    ``origins`` are 0-based positions in the full series.  Failed origins
    carry a NaN forecast, ``hits`` False and an entry in ``failures``.
    """

    method: str
    tau: float
    window: int
    origins: np.ndarray
    y: np.ndarray
    forecasts: np.ndarray
    hits: np.ndarray
    failures: tuple = ()
    labels: Optional[tuple] = None
    h: Optional[float] = None

    def __post_init__(self):
        if not (len(self.origins) == len(self.y) == len(self.forecasts) == len(self.hits)):
            raise DomainError("origins, y, forecasts and hits must have equal length")

    def __len__(self):
        return len(self.forecasts)

    @property
    def valid(self):
        return np.isfinite(self.forecasts)


@dataclass(frozen=True)
class HitTest:
    """Backtest statistic with its chi-square reference."""

    statistic: float
    p_value: float
    df: int
    degenerate: bool = False


@dataclass(frozen=True)
class BacktestReport:
    ecr: float
    pe: float
    cc_pvalue: float
    dq_pvalue: float
    n_test: int
    cc: HitTest = None
    dq: HitTest = None

    def __post_init__(self):
        if not 0.0 <= self.ecr <= 100.0:
            raise DomainError(f"ecr must lie in [0, 100], got {self.ecr}")
        if self.pe < 0.0:
            raise DomainError("pe must be nonnegative")


# --------------------------------------------------------------------------
# coverage metrics and hit tests
# --------------------------------------------------------------------------


def _hits(hits):
    h = np.asarray(hits)
    if h.ndim != 1:
        raise DomainError("hits must be one-dimensional")
    return h.astype(bool)


def ecr_pe(run, tau=None):
    """Empirical coverage rate (percent) and prediction error.

    ``pe = |mean(hits) - tau| / sqrt(tau (1 - tau) / n_test)``; failed
    origins are excluded.

    Examples
    --------
    >>> hits = np.zeros(637, dtype=bool); hits[:39] = True
    >>> ecr, pe = ecr_pe(hits, 0.05)
    >>> round(ecr, 2), round(pe, 2)
    (6.12, 1.3)
    """
    if isinstance(run, ForecastRun):
        tau = run.tau if tau is None else tau
        hits = run.hits[run.valid]
    else:
        hits = _hits(run)
    if tau is None or not 0.0 < tau < 1.0:
        raise DomainError("tau must lie in (0, 1)")
    n = hits.size
    if n == 0:
        raise DomainError("empty forecast run")
    rate = float(np.mean(hits))
    pe = abs(rate - tau) / math.sqrt(tau * (1.0 - tau) / n)
    return 100.0 * rate, pe


def _xlogy(x, y):
    return 0.0 if x == 0 else x * math.log(y)


def _bernoulli_ll(n0, n1, p):
    return _xlogy(n0, 1.0 - p) + _xlogy(n1, p)


def cc_test(hits, tau):
    """Conditional-coverage likelihood-ratio test.

    ``LR_cc = LR_uc + LR_ind`` against chi-square(2), where ``LR_ind``
    compares a first-order Markov chain for the hits with independence.
    When the chain has no transitions out of one of the states the
    independence term is undefined; the result then falls back to
    ``LR_uc`` against chi-square(1) and is flagged ``degenerate``.
    """
    h = _hits(hits)
    if h.size < 20:
        raise DomainError(f"cc_test needs at least 20 hits, got {h.size}")
    if not 0.0 < tau < 1.0:
        raise DomainError("tau must lie in (0, 1)")
    n1 = int(h.sum())
    n0 = h.size - n1
    pi = n1 / h.size
    lr_uc = -2.0 * (_bernoulli_ll(n0, n1, tau) - _bernoulli_ll(n0, n1, pi))
    prev, cur = h[:-1], h[1:]
    n00 = int(np.sum(~prev & ~cur))
    n01 = int(np.sum(~prev & cur))
    n10 = int(np.sum(prev & ~cur))
    n11 = int(np.sum(prev & cur))
    if n00 + n01 == 0 or n10 + n11 == 0:
        lr_uc = max(lr_uc, 0.0)
        return HitTest(lr_uc, float(stats.chi2.sf(lr_uc, 1)), 1, True)
    p01 = n01 / (n00 + n01)
    p11 = n11 / (n10 + n11)
    p2 = (n01 + n11) / (n00 + n01 + n10 + n11)
    ll_markov = _bernoulli_ll(n00, n01, p01) + _bernoulli_ll(n10, n11, p11)
    ll_indep = _bernoulli_ll(n00 + n10, n01 + n11, p2)
    lr = max(lr_uc + -2.0 * (ll_indep - ll_markov), 0.0)
    return HitTest(lr, float(stats.chi2.sf(lr, 2)), 2, False)


def dq_test(hits, tau, lags=4):
    """Dynamic-quantile test on a constant and ``lags`` lagged hits.

    The statistic ``d' X'X d / (tau (1 - tau))`` with OLS coefficients ``d``
    of ``H_t - tau`` equals the squared norm of the fitted values, which
    stays defined when columns are collinear; the degrees of freedom are
    then the rank of ``X`` and the result is flagged ``degenerate``.
    """
    h = _hits(hits).astype(float)
    lags = int(lags)
    if lags < 1:
        raise DomainError("lags must be at least 1")
    if h.size <= lags + 10:
        raise DomainError(f"dq_test needs more than {lags + 10} hits, got {h.size}")
    if not 0.0 < tau < 1.0:
        raise DomainError("tau must lie in (0, 1)")
    n = h.size
    X = np.column_stack([np.ones(n - lags)] + [h[lags - k : n - k] for k in range(1, lags + 1)])
    yv = h[lags:] - tau
    coef, _, rank, _ = np.linalg.lstsq(X, yv, rcond=None)
    fitted = X @ coef
    stat = float(fitted @ fitted / (tau * (1.0 - tau)))
    return HitTest(stat, float(stats.chi2.sf(stat, rank)), int(rank), bool(rank < X.shape[1]))


def backtest(run, tau=None, lags=4):
    """ECR, PE, CC and DQ for a forecast run (failed origins excluded)."""
    tau = run.tau if tau is None else tau
    hits = run.hits[run.valid]
    ecr, pe = ecr_pe(hits, tau)
    cc = cc_test(hits, tau)
    dq = dq_test(hits, tau, lags)
    return BacktestReport(ecr, pe, cc.p_value, dq.p_value, int(hits.size), cc, dq)


# --------------------------------------------------------------------------
# filtered historical simulation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FhsFit:
    """Gaussian QMLE of ``h_t = a0 + a1 |y_{t-1}| + b1 h_{t-1}`` with residual quantile."""

    a0: float
    a1: float
    b1: float
    h1: float
    tau: float
    residual_quantile: float
    scale: np.ndarray = field(repr=False)
    loglik: float = 0.0

    @property
    def forecast_scale(self):
        return float(self.scale[-1])

    @property
    def forecast(self):
        """One-step quantile forecast ``q_tau(eps) * h_{n+1}``."""
        return self.residual_quantile * self.forecast_scale


def _scale_path(abs_y, a0, a1, b1, h1):
    """``h_1..h_{n+1}`` with ``h_1`` fixed."""
    u = a0 + a1 * abs_y
    rest = signal.lfilter([1.0], [1.0, -b1], u, zi=[b1 * h1])[0]
    return np.concatenate([[h1], rest])


def _qmle_objective(p, abs_y, y2, h1):
    a0, a1, b1 = p
    n = y2.size
    h = _scale_path(abs_y, a0, a1, b1, h1)
    hs = h[:n]
    if np.any(hs <= 0.0):
        return np.inf, np.zeros(3)
    f = 0.5 * np.sum(2.0 * np.log(hs) + y2 / (hs * hs))
    # dh_t = (1, |y_{t-1}|, h_{t-1}) + b1 dh_{t-1}, dh_1 = 0
    drive = np.column_stack([np.ones(n - 1), abs_y[: n - 1], h[: n - 1]])
    dh = np.vstack([np.zeros((1, 3)), signal.lfilter([1.0], [1.0, -b1], drive, axis=0)])
    g = (1.0 / hs - y2 / hs**3) @ dh
    return float(f), g


def fhs_fit(series, tau):
    """Gaussian QMLE of the linear GARCH(1,1) scale plus residual quantile.

    Parameters
    ----------
    series : ReturnSeries or array_like
        At least 200 observations.
    tau : float

    Returns
    -------
    FhsFit
    """
    series = as_series(series)
    y = series.values
    n = y.size
    if n < 200:
        raise DomainError(f"FHS needs at least 200 observations, got {n}")
    if not 0.0 < tau < 1.0:
        raise DomainError("tau must lie in (0, 1)")
    abs_y = np.abs(y)
    h1 = float(abs_y.mean() / _SQRT_2_OVER_PI)
    if not h1 > 0.0:
        raise DomainError("all observations are zero")
    y2 = y * y
    bounds = [(1e-8 * h1, None), (0.0, None), (0.0, 1.0 - 1e-6)]
    best = None
    for a1, b1 in ((0.1, 0.8), (0.05, 0.9), (0.2, 0.5)):
        x0 = np.array([h1 * (1.0 - b1 - a1 * _SQRT_2_OVER_PI), a1, b1])
        x0[0] = max(x0[0], 0.05 * h1)
        res = optimize.minimize(
            _qmle_objective, x0, args=(abs_y, y2, h1), jac=True, method="L-BFGS-B", bounds=bounds
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise NumericalError("QMLE failed to find a finite likelihood")
    a0, a1, b1 = (float(v) for v in best.x)
    h = _scale_path(abs_y, a0, a1, b1, h1)
    if np.any(h <= 0.0) or not np.all(np.isfinite(h)):
        raise NumericalError("QMLE produced a nonpositive scale")
    resid = y / h[:n]
    q = float(sample_quantile(resid, tau))
    return FhsFit(a0, a1, b1, h1, float(tau), q, h, -float(best.fun))


# --------------------------------------------------------------------------
# rolling forecasts
# --------------------------------------------------------------------------


def _qr_forecast(theta, history):
    x = geometric_sums(history, theta.beta1)[-1]
    return theta.omega + theta.alpha1 * x


def rolling_forecast(
    series,
    n0,
    method="qr",
    tau=0.05,
    n1=None,
    qr_cfg=None,
    cqr_cfg=None,
    h_grid=None,
    params=None,
    max_fail=MAX_FAIL_FRACTION,
):
    """Moving-window one-step-ahead forecasts.

    The first origin is ``n0 + n1`` (``n1 = 0`` when omitted).  At origin
    ``i`` the model is fitted on ``y[i - n0 : i]`` and the forecast of
    ``y[i]`` uses the whole history ``y[:i]`` in the geometric sum (QR and
    CQR).  FHS forecasts ``q_tau(eps) * h_{n0+1}`` from the window fit.

    Parameters
    ----------
    series : ReturnSeries or array_like
    n0 : int
        Window length, at least 100.
    method : {"qr", "cqr", "fhs"}
    tau : float
    n1 : int, optional
        Validation block length; required for CQR, where ``h`` is chosen
        from ``h_grid`` by fitting on ``y[:n0]`` and validating on
        ``y[n0 : n0 + n1]``.
    qr_cfg, cqr_cfg : optional
        Method settings; their quantile level is replaced by ``tau``.
    h_grid : array_like, optional
        Default ``0.01, 0.02, ..., 0.1``.
    params : QGarchParams, optional
        Frozen QR coefficients; disables refitting.
    max_fail : float
        Abort once more than this fraction of origins has failed.

    Returns
    -------
    ForecastRun
    """
    series = as_series(series)
    y = series.values
    N = y.size
    method = str(method).lower()
    if method not in METHODS:
        raise DomainError(f"method must be one of {METHODS}, got {method!r}")
    if not 0.0 < tau < 1.0:
        raise DomainError("tau must lie in (0, 1)")
    n0 = int(n0)
    if n0 < 100:
        raise DomainError(f"window n0 must be at least 100, got {n0}")
    n1 = 0 if n1 is None else int(n1)
    if method == "cqr" and n1 <= 0:
        raise DomainError("CQR forecasting needs a validation block n1")
    start = n0 + n1
    if start >= N:
        raise DomainError(f"no test observations: n0 + n1 = {start} >= n = {N}")
    if params is not None and method != "qr":
        raise DomainError("frozen parameters are only supported for the QR method")

    h_opt = None
    if method == "qr":
        base = QrFitConfig(tau, compute_cov=False) if qr_cfg is None else qr_cfg
        base = QrFitConfig(
            tau, base.weights if not isinstance(base.weights, np.ndarray) else None,
            base.beta_grid, base.refine_iters, base.box, base.bandwidth, False, base.self_weights,
        )
    elif method == "cqr":
        base = CqrConfig(tau) if cqr_cfg is None else cqr_cfg.replace(tau0=tau)
        base = base.replace(compute_cov=False)
        grid = np.round(np.arange(1, 11) * 0.01, 10) if h_grid is None else np.asarray(h_grid, float)
        h_opt, _ = select_bandwidth_h(series.slice(0, n0), series.slice(n0, n0 + n1), tau, grid, base)
        base = base.replace(h=h_opt)

    origins = np.arange(start, N)
    forecasts = np.full(origins.size, np.nan)
    failures = []
    limit = max_fail * origins.size
    for k, i in enumerate(origins):
        window = series.slice(i - n0, i)
        try:
            if method == "qr":
                theta = params if params is not None else qr_fit(window, base).theta_hat
                q = _qr_forecast(theta, y[:i])
            elif method == "cqr":
                fit = cqr_fit(window, base)
                q = float(_cqr_forecast(fit, y[:i]))
            else:
                q = fhs_fit(window, tau).forecast
            if not math.isfinite(q):
                raise NumericalError("non-finite forecast")
            forecasts[k] = q
        except (DomainError, NumericalError, ValueError) as exc:
            failures.append((int(i), str(exc)))
            if len(failures) > limit:
                raise NumericalError(
                    f"{len(failures)} of {origins.size} origins failed; last at t={i + 1}: {exc}"
                ) from exc
    if failures:
        warnings.warn(f"{len(failures)} forecast origins failed", RuntimeWarning, stacklevel=2)
    yt = y[start:]
    hits = np.isfinite(forecasts) & (yt < np.nan_to_num(forecasts, nan=-np.inf))
    labels = None if series.labels is None else series.labels[start:]
    return ForecastRun(method, float(tau), n0, origins, yt.copy(), forecasts, hits, tuple(failures), labels, h_opt)


def _cqr_forecast(fit, history):
    """CQR one-step forecast ``Q_tau0(lam) (a0/(1-b1) + a1 x_{n+1}(b1))``."""
    theta = fit.theta_at()
    return _qr_forecast(theta, history)


__all__ = [
    "ForecastRun",
    "HitTest",
    "BacktestReport",
    "FhsFit",
    "ecr_pe",
    "cc_test",
    "dq_test",
    "backtest",
    "fhs_fit",
    "rolling_forecast",
]
