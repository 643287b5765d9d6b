"""Constancy test for a coefficient curve with subsampling critical values.

The Cramer-von Mises statistic is ``S_n = n * delta * sum_k v(tau_k)^2`` with
``v(tau) = R theta(tau) - mean_k R theta(tau_k)`` over an equally spaced grid.
The Kolmogorov-Smirnov variant is ``sqrt(n) * max_k |v(tau_k)|``.  Critical
values come from statistics of overlapping blocks of estimated scores.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import DomainError, NumericalError, as_series, cond_quantile_path, cond_quantile_path_grad
from .qr import COND_WARN, QrFitConfig, multi_tau_fit, resolve_weights


def default_tau_grid(lo=0.7, hi=0.995, delta=0.005):
    k = int(round((hi - lo) / delta))
    return np.round(lo + delta * np.arange(k + 1), 12)


@dataclass(frozen=True)
class CvmConfig:
    """Settings of the constancy test.

    Parameters
    ----------
    tau_grid : array_like
        Equally spaced levels.
    R : array_like
        Contrast row selecting the coefficient; ``(0, 0, 1)`` tests ``beta1``.
    block_factor : float
        Block length ``b_n = floor(block_factor * sqrt(n))``.
    alpha : float
        Significance level for the critical value.
    statistic : {"cvm", "ks"}
    """

    tau_grid: np.ndarray = field(default_factory=default_tau_grid)
    R: tuple = (0.0, 0.0, 1.0)
    block_factor: float = 1.0
    alpha: float = 0.05
    statistic: str = "cvm"

    def __post_init__(self):
        g = np.asarray(self.tau_grid, dtype=float).ravel()
        if g.size < 2:
            raise DomainError("tau_grid needs at least two levels")
        if np.any(g <= 0.0) or np.any(g >= 1.0):
            raise DomainError("tau_grid must lie in (0, 1)")
        d = np.diff(g)
        if np.any(d <= 0.0) or np.ptp(d) > 1e-12:
            raise DomainError("tau_grid must be increasing with constant cell size")
        object.__setattr__(self, "tau_grid", g)
        r = np.asarray(self.R, dtype=float).ravel()
        if r.size != 3:
            raise DomainError("R must have three entries")
        object.__setattr__(self, "R", tuple(r))
        if self.statistic not in ("cvm", "ks"):
            raise DomainError("statistic must be 'cvm' or 'ks'")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError("alpha must lie in (0, 1)")
        if not self.block_factor > 0.0:
            raise DomainError("block_factor must be positive")

    @property
    def delta(self):
        return float(self.tau_grid[1] - self.tau_grid[0])

    def block_size(self, n):
        return int(math.floor(self.block_factor * math.sqrt(n)))


@dataclass(frozen=True)
class CvmResult:
    statistic_value: float
    critical_value: float
    p_value: float
    block_size: int
    subsample_statistics: np.ndarray
    statistic: str = "cvm"
    curve: np.ndarray = None

    @property
    def reject(self):
        return self.statistic_value > self.critical_value


def _contrast_values(fits, R):
    r = np.asarray(R, dtype=float)
    return np.array([r @ f.theta_hat.as_array() for f in fits])


def _functional(v, scale, delta, kind):
    """``scale^2 * delta * sum v^2`` (CvM) or ``scale * max |v|`` (KS) along the last axis."""
    if kind == "ks":
        return scale * np.max(np.abs(v), axis=-1)
    return scale * scale * delta * np.sum(v * v, axis=-1)


def cvm_statistic(fits, cfg, n=None):
    """Test statistic from per-level fits (or contrast values ``R theta(tau_k)``).

    Parameters
    ----------
    fits : sequence of QuantileFit, or array of contrast values
    cfg : CvmConfig
    n : int, optional
        Sample size; read from the fits when omitted.
    """
    if len(fits) != cfg.tau_grid.size:
        raise DomainError(f"expected {cfg.tau_grid.size} grid fits, got {len(fits)}")
    if hasattr(fits[0], "theta_hat"):
        for f, tau in zip(fits, cfg.tau_grid):
            if abs(f.tau - tau) > 1e-9:
                raise DomainError(f"missing fit at tau={tau:g}")
        values = _contrast_values(fits, cfg.R)
        n = fits[0].n if n is None else n
    else:
        values = np.asarray(fits, dtype=float)
    if n is None:
        raise DomainError("sample size n is required")
    # shifting by the first value first makes a constant curve give exactly 0
    d = values - values[0]
    v = d - d.mean()
    return float(_functional(v, math.sqrt(n), cfg.delta, cfg.statistic))


def estimated_scores(series, fits, weights, cfg):
    """Score matrix ``z_t(tau_k)`` (shape ``n x K``).

    ``m_t(tau) = w_t Omega1(tau)^{-1} qdot_t psi_tau(y_t - q_t)`` and
    ``z_t(tau) = R (m_t(tau) - mean_k m_t(tau_k))``.
    """
    series = as_series(series)
    y = series.values
    n = y.size
    w = resolve_weights(series, weights)
    r = np.asarray(cfg.R, dtype=float)
    if len(fits) != cfg.tau_grid.size:
        raise DomainError(f"expected {cfg.tau_grid.size} grid fits, got {len(fits)}")
    m = np.empty((n, len(fits)))
    for k, fit in enumerate(fits):
        if fit.omega1 is None:
            raise DomainError(f"fit at tau={fit.tau:g} carries no Omega1 estimate")
        cond = np.linalg.cond(fit.omega1)
        if not np.isfinite(cond) or cond > COND_WARN:
            raise NumericalError(f"Omega1 is singular at tau={fit.tau:g} (condition {cond:.3g})")
        # R Omega1^{-1} qdot_t = (Omega1^{-T} R) . qdot_t
        g = np.linalg.solve(fit.omega1.T, r)
        theta = fit.theta_hat
        q = cond_quantile_path(theta, y)[:-1]
        qdot = cond_quantile_path_grad(theta, y)[:-1]
        resid = y - q
        m[:, k] = w * (qdot @ g) * (fit.tau - (resid < 0.0))
    return m - m.mean(axis=1, keepdims=True)


def block_means(scores, b):
    """Means over the overlapping blocks ``{k, ..., k + b - 1}`` (shape ``L x K``)."""
    z = np.asarray(scores, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    c = np.vstack([np.zeros((1, z.shape[1])), np.cumsum(z, axis=0)])
    return (c[b:] - c[:-b]) / b


def subsample_test(scores, statistic_value, cfg, b=None):
    """Subsampling distribution, critical value and p-value.

    The critical value is the ``1 - alpha`` (type-7) quantile of the block
    statistics and the p-value is the fraction of block statistics at or
    above ``statistic_value``.
    """
    z = np.asarray(scores, dtype=float)
    n = z.shape[0]
    if b is None:
        b = cfg.block_size(n)
    if b > n:
        raise DomainError(f"block size {b} exceeds sample size {n}")
    if b < 2:
        raise DomainError(f"block size must be at least 2, got {b}")
    if n - b + 1 < 50:
        warnings.warn(f"only {n - b + 1} subsamples; critical value is unreliable", RuntimeWarning, stacklevel=2)
    v = block_means(z, b)
    stats = _functional(v, math.sqrt(b), cfg.delta, cfg.statistic)
    crit = float(np.quantile(stats, 1.0 - cfg.alpha, method="linear"))
    p = float(np.mean(stats >= statistic_value))
    return CvmResult(float(statistic_value), crit, p, int(b), stats, cfg.statistic)


def cvm_test(series, cfg=None, qr_cfg=None):
    """Fit the grid, compute the statistic and its subsampling critical value."""
    cfg = CvmConfig() if cfg is None else cfg
    series = as_series(series)
    qr_cfg = QrFitConfig(float(cfg.tau_grid[0])) if qr_cfg is None else qr_cfg
    w = resolve_weights(series, qr_cfg.weights, qr_cfg.self_weights)
    qr_cfg = QrFitConfig(
        qr_cfg.tau, w, qr_cfg.beta_grid, qr_cfg.refine_iters, qr_cfg.box,
        qr_cfg.bandwidth, True, qr_cfg.self_weights,
    )
    fits = multi_tau_fit(series, cfg.tau_grid, qr_cfg)
    stat = cvm_statistic(fits, cfg)
    z = estimated_scores(series, fits, w, cfg)
    res = subsample_test(z, stat, cfg)
    return CvmResult(
        res.statistic_value, res.critical_value, res.p_value, res.block_size,
        res.subsample_statistics, res.statistic, _contrast_values(fits, cfg.R),
    )
