"""Self-weighted quantile regression for the quantile GARCH(1,1) model.

For fixed ``beta1`` the conditional quantile ``omega + alpha1 * x_t(beta1)``
is linear in ``(omega, alpha1)``, so the weighted check-loss problem is a
two-parameter linear program solved exactly.  The outer problem in ``beta1``
is profiled on a grid and refined by golden-section search.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._kernels import arch_sums, objective, solve_qr1, solve_qr2
from .core import (
    EPS_BOX,
    DomainError,
    NumericalError,
    QGarchParams,
    SelfWeightConfig,
    as_series,
    compute_self_weights,
    cond_quantile_path,
    cond_quantile_path_grad,
    normal_pdf,
    normal_quantile,
)

MIN_N = 30
F_CAP = 1e3
COND_WARN = 1e12
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def default_beta_grid():
    return np.round(np.arange(1, 50) * 0.02, 10)


@dataclass(frozen=True)
class Box:
    """Bounds on ``(omega, alpha1, beta1)``; equal bounds fix a coefficient."""

    omega: tuple = (-math.inf, math.inf)
    alpha1: tuple = (-math.inf, math.inf)
    beta1: tuple = (0.0, 1.0 - EPS_BOX)

    def __post_init__(self):
        for name in ("omega", "alpha1", "beta1"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not lo <= hi:
                raise DomainError(f"empty bound for {name}: ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))
        lo, hi = self.beta1
        if lo < 0.0 or hi > 1.0 - EPS_BOX:
            raise DomainError(f"beta1 bounds must lie within [0, 1 - {EPS_BOX}]")


@dataclass(frozen=True)
class QrFitConfig:
    """Settings of :func:`qr_fit`.

    Parameters
    ----------
    tau : float
        Quantile level.
    weights : None, "ones" or array
        ``None`` computes self-weights with ``self_weights``.
    beta_grid : sequence of float
        Profile grid for ``beta1``.
    refine_iters : int
        Golden-section steps on the bracket around the best grid point.
    box : Box
    bandwidth : {"hs", "bofinger"}
        Density bandwidth used by the covariance estimator.
    compute_cov : bool
        Also fit at ``tau +- ell`` and return the sandwich covariance.
    """

    tau: float
    weights: object = None
    beta_grid: Sequence[float] = field(default_factory=default_beta_grid)
    refine_iters: int = 40
    box: Box = field(default_factory=Box)
    bandwidth: str = "hs"
    compute_cov: bool = True
    self_weights: SelfWeightConfig = field(default_factory=SelfWeightConfig)

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise DomainError(f"tau must lie in (0, 1), got {self.tau}")
        grid = np.asarray(self.beta_grid, dtype=float)
        if grid.size == 0 or np.any(grid < 0.0) or np.any(grid > 1.0 - EPS_BOX):
            raise DomainError("beta_grid must be nonempty and inside [0, 1 - 1e-6]")
        if self.bandwidth not in ("hs", "bofinger"):
            raise DomainError("bandwidth must be 'hs' or 'bofinger'")
        if self.refine_iters < 0:
            raise DomainError("refine_iters must be nonnegative")

    def with_tau(self, tau):
        return QrFitConfig(
            tau, self.weights, self.beta_grid, self.refine_iters, self.box,
            self.bandwidth, self.compute_cov, self.self_weights,
        )


@dataclass(frozen=True)
class QuantileFit:
    """Estimate at one quantile level.

    ``cov`` is the estimated covariance of ``theta_hat`` (the asymptotic
    sandwich divided by ``n``), so standard errors are ``sqrt(diag(cov))``.
    """

    tau: float
    theta_hat: QGarchParams
    objective_value: float
    cov: Optional[np.ndarray] = None
    bandwidth_used: Optional[tuple] = None
    weights_id: str = ""
    n: int = 0
    omega1: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def std_errors(self):
        if self.cov is None:
            return None
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))


# --------------------------------------------------------------------------
# bandwidths
# --------------------------------------------------------------------------


def bandwidth_bofinger(tau, n):
    """Bofinger bandwidth ``n^(-1/5) {4.5 f^4(z) / (2 z^2 + 1)^2}^(1/5)``."""
    if not 0.0 < tau < 1.0 or n < 2:
        raise DomainError("need 0 < tau < 1 and n >= 2")
    z = normal_quantile(tau)
    f = normal_pdf(z)
    return n ** (-0.2) * (4.5 * f**4 / (2.0 * z * z + 1.0) ** 2) ** 0.2


def bandwidth_hall_sheather(tau, n, alpha=0.05):
    """Hall-Sheather bandwidth ``n^(-1/3) z_a^(2/3) {1.5 f^2(z) / (2 z^2 + 1)}^(1/3)``."""
    if not 0.0 < tau < 1.0 or n < 2 or not 0.0 < alpha < 1.0:
        raise DomainError("need 0 < tau < 1, n >= 2 and 0 < alpha < 1")
    z = normal_quantile(tau)
    za = normal_quantile(1.0 - alpha / 2.0)
    f = normal_pdf(z)
    return n ** (-1.0 / 3.0) * za ** (2.0 / 3.0) * (1.5 * f * f / (2.0 * z * z + 1.0)) ** (1.0 / 3.0)


def density_bandwidth(tau, n, kind="hs"):
    """Bandwidth shrunk if needed so that ``tau +- ell`` stays inside (0, 1)."""
    ell = bandwidth_hall_sheather(tau, n) if kind == "hs" else bandwidth_bofinger(tau, n)
    return min(ell, 0.99 * min(tau, 1.0 - tau))


# --------------------------------------------------------------------------
# exact linear QR with box constraints
# --------------------------------------------------------------------------


def _clip(v, lo, hi):
    return min(max(v, lo), hi)


def solve_linear_qr(y, z0, z1, c, tau, bounds0=(-math.inf, math.inf), bounds1=(-math.inf, math.inf), start=(0.0, 0.0)):
    """Minimize ``sum c rho_tau(y - t0 z0 - t1 z1)`` over a box.

    ``tau`` may vary per row.  The unconstrained problem is solved exactly;
    when its solution leaves the box, the optimum of the convex problem lies
    on an edge, and each edge is a one-dimensional problem whose clipped
    minimizer is exact.

    Returns
    -------
    (t0, t1, objective)
    """
    lo0, hi0 = bounds0
    lo1, hi1 = bounds1
    if lo0 == hi0 and lo1 == hi1:
        return lo0, lo1, objective(y, z0, z1, c, tau, lo0, lo1)
    if lo1 == hi1:
        s = _clip(solve_qr1(y, z0, c, tau, lo1 * z1), lo0, hi0)
        return s, lo1, objective(y, z0, z1, c, tau, s, lo1)
    if lo0 == hi0:
        s = _clip(solve_qr1(y, z1, c, tau, lo0 * z0), lo1, hi1)
        return lo0, s, objective(y, z0, z1, c, tau, lo0, s)
    t0 = _clip(start[0], lo0, hi0) if math.isfinite(start[0]) else 0.0
    t1 = _clip(start[1], lo1, hi1) if math.isfinite(start[1]) else 0.0
    a, b, f, _ = solve_qr2(y, z0, z1, c, tau, t0, t1)
    if lo0 <= a <= hi0 and lo1 <= b <= hi1:
        return a, b, f
    best = None
    for bound in (lo0, hi0):
        if math.isfinite(bound):
            s = _clip(solve_qr1(y, z1, c, tau, bound * z0), lo1, hi1)
            cand = (bound, s, objective(y, z0, z1, c, tau, bound, s))
            if best is None or cand[2] < best[2]:
                best = cand
    for bound in (lo1, hi1):
        if math.isfinite(bound):
            s = _clip(solve_qr1(y, z0, c, tau, bound * z1), lo0, hi0)
            cand = (s, bound, objective(y, z0, z1, c, tau, s, bound))
            if best is None or cand[2] < best[2]:
                best = cand
    return best


# --------------------------------------------------------------------------
# weights
# --------------------------------------------------------------------------


def resolve_weights(series, weights, sw_cfg=SelfWeightConfig()):
    n = len(series)
    if weights is None:
        return compute_self_weights(series, sw_cfg)
    if isinstance(weights, str):
        if weights != "ones":
            raise DomainError(f"unknown weights option {weights!r}")
        return np.ones(n)
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != n:
        raise DomainError(f"weights length {w.size} does not match series length {n}")
    if np.any(~np.isfinite(w)) or np.any(w < 0.0):
        raise DomainError("weights must be finite and nonnegative")
    return w


def weights_id(w):
    return hashlib.sha1(np.ascontiguousarray(w, dtype=float).tobytes()).hexdigest()[:16]


# --------------------------------------------------------------------------
# profile estimator
# --------------------------------------------------------------------------


class _Profile:
    """Per-series cache of regressors ``x_t(beta)`` shared across levels."""

    def __init__(self, y, w):
        self.y = np.ascontiguousarray(y, dtype=float)
        self.abs_y = np.ascontiguousarray(np.abs(self.y))
        self.w = np.ascontiguousarray(w, dtype=float)
        self.ones = np.ones_like(self.y)
        self._x = {}

    def x(self, beta):
        key = float(beta)
        v = self._x.get(key)
        if v is None:
            v = np.ascontiguousarray(arch_sums(self.abs_y, key)[:-1])
            if len(self._x) < 256:
                self._x[key] = v
        return v

    def solve(self, beta, tau_arr, box, start):
        a, b, f = solve_linear_qr(
            self.y, self.ones, self.x(beta), self.w, tau_arr, box.omega, box.alpha1, start
        )
        return f, a, b


def _fit_profile(prof, tau, cfg):
    n = prof.y.size
    tau_arr = np.full(n, tau)
    box = cfg.box
    blo, bhi = box.beta1
    grid = np.asarray(cfg.beta_grid, dtype=float)
    grid = grid[(grid >= blo) & (grid <= bhi)]
    if grid.size == 0:
        grid = np.array([blo]) if blo == bhi else np.array([0.5 * (blo + bhi)])
    start = (0.0, 0.0)
    vals = np.empty(grid.size)
    sols = []
    for i, b in enumerate(grid):
        f, a0, a1 = prof.solve(b, tau_arr, box, start)
        vals[i] = f
        sols.append((a0, a1))
        start = (a0, a1)
    k = int(np.argmin(vals))  # first minimum, so ties go to the smaller beta
    best = (vals[k], grid[k], sols[k])
    evals = grid.size
    if cfg.refine_iters > 0 and blo < bhi:
        lo = grid[k - 1] if k > 0 else blo
        hi = grid[k + 1] if k + 1 < grid.size else bhi
        lo, hi = max(lo, blo), min(hi, bhi)
        warm = sols[k]

        def ev(b):
            nonlocal best, evals
            f, a0, a1 = prof.solve(b, tau_arr, box, warm)
            evals += 1
            if f < best[0] or (f == best[0] and b < best[1]):
                best = (f, b, (a0, a1))
            return f

        c = hi - _GOLDEN * (hi - lo)
        d = lo + _GOLDEN * (hi - lo)
        fc, fd = ev(c), ev(d)
        for _ in range(max(cfg.refine_iters - 2, 0)):
            if fc <= fd:
                hi, d, fd = d, c, fc
                c = hi - _GOLDEN * (hi - lo)
                fc = ev(c)
            else:
                lo, c, fc = c, d, fd
                d = lo + _GOLDEN * (hi - lo)
                fd = ev(d)
    f, b, (a0, a1) = best
    theta = QGarchParams(a0, a1, min(max(b, 0.0), 1.0 - EPS_BOX))
    return theta, f, {"profile_evaluations": evals, "grid_argmin": float(grid[k])}


def _validate_series(series):
    series = as_series(series)
    n = len(series)
    if n < MIN_N:
        raise DomainError(f"need at least {MIN_N} observations, got {n}")
    if not np.any(series.values[:-1] != 0.0):
        raise DomainError("degenerate regressor: all lagged |y| are zero")
    return series


def _estimate(series, w, tau, cfg, prof=None):
    if prof is None:
        prof = _Profile(series.values, w)
    theta, f, diag = _fit_profile(prof, tau, cfg)
    return theta, f, diag, prof


def qr_fit(series, cfg):
    """Self-weighted QR estimate at level ``cfg.tau``.

    Parameters
    ----------
    series : ReturnSeries or array_like
    cfg : QrFitConfig

    Returns
    -------
    QuantileFit
    """
    series = _validate_series(series)
    w = resolve_weights(series, cfg.weights, cfg.self_weights)
    return _qr_fit_with(series, w, cfg, _Profile(series.values, w))


def _qr_fit_with(series, w, cfg, prof):
    theta, f, diag, _ = _estimate(series, w, cfg.tau, cfg, prof)
    fit = QuantileFit(cfg.tau, theta, float(f), weights_id=weights_id(w), n=len(series), diagnostics=diag)
    if not cfg.compute_cov:
        return fit
    n = len(series)
    ell = density_bandwidth(cfg.tau, n, cfg.bandwidth)
    lo_theta = _estimate(series, w, cfg.tau - ell, cfg, prof)[0]
    hi_theta = _estimate(series, w, cfg.tau + ell, cfg, prof)[0]
    cov, omega1, info = _sandwich(series.values, w, cfg.tau, ell, theta, lo_theta, hi_theta, cfg.box)
    diag = dict(diag, **info)
    return QuantileFit(
        cfg.tau, theta, float(f), cov, (cfg.bandwidth, ell), fit.weights_id, n, omega1, diag
    )


def conditional_densities(y, ell, lo_theta, hi_theta, mid_theta=None):
    """Difference-quotient densities ``2 ell / (Q_{tau+ell} - Q_{tau-ell})``.

    Crossing quantiles are rearranged across the available levels first;
    points whose spread is still nonpositive are flagged as dropped.

    Returns
    -------
    f : ndarray
        Densities clipped to ``[0, F_CAP]`` (zero where dropped).
    keep : ndarray of bool
    """
    q_lo = cond_quantile_path(lo_theta, y)[:-1]
    q_hi = cond_quantile_path(hi_theta, y)[:-1]
    if mid_theta is not None:
        q_mid = cond_quantile_path(mid_theta, y)[:-1]
        stack = np.sort(np.vstack([q_lo, q_mid, q_hi]), axis=0)
        q_lo, q_hi = stack[0], stack[-1]
    else:
        q_lo, q_hi = np.minimum(q_lo, q_hi), np.maximum(q_lo, q_hi)
    spread = q_hi - q_lo
    keep = spread > 0.0
    f = np.zeros_like(spread)
    f[keep] = np.clip(2.0 * ell / spread[keep], 0.0, F_CAP)
    return f, keep


def _solve_psd(a, b, what):
    cond = np.linalg.cond(a)
    if not np.isfinite(cond):
        raise NumericalError(f"{what} is singular")
    if cond > COND_WARN:
        warnings.warn(f"{what} is ill-conditioned (condition number {cond:.3g})", RuntimeWarning, stacklevel=3)
    return np.linalg.solve(a, b), cond


def _free_mask(box, qdot):
    """Coefficients with a sandwich variance: not fixed by the box, nonzero gradient."""
    free = np.ones(3, dtype=bool)
    if box is not None:
        free &= np.array([lo < hi for lo, hi in (box.omega, box.alpha1, box.beta1)])
    free &= np.any(qdot != 0.0, axis=0)
    return free


def _sandwich(y, w, tau, ell, theta, lo_theta, hi_theta, box=None):
    n = y.size
    qdot = cond_quantile_path_grad(theta, y)[:-1]
    f, keep = conditional_densities(y, ell, lo_theta, hi_theta, theta)
    free = _free_mask(box, qdot)
    omega0 = (qdot * (w * w)[:, None]).T @ qdot / n
    nk = max(int(keep.sum()), 1)
    omega1 = (qdot * (f * w)[:, None]).T @ qdot / nk
    omega1 = 0.5 * (omega1 + omega1.T)
    sub = np.ix_(free, free)
    a, cond = _solve_psd(omega1[sub], omega0[sub], "Omega1")
    s, _ = _solve_psd(omega1[sub], a.T, "Omega1")
    sigma = np.zeros((3, 3))
    sigma[sub] = tau * (1.0 - tau) * 0.5 * (s + s.T)
    cov = sigma / n
    info = {"density_dropped": int(n - keep.sum()), "omega1_cond": float(cond), "free": free.tolist()}
    return cov, omega1, info


def qr_asymptotic_cov(series, fit, lo_fit, hi_fit, weights, ell=None, box=None):
    """Sandwich covariance of ``fit.theta_hat`` from fits at ``tau +- ell``.

    Returns the estimated covariance matrix of the estimator (the asymptotic
    covariance divided by ``n``).  Coefficients fixed by ``box``, and
    ``beta1`` when ``alpha1`` is zero, get zero rows and columns.
    """
    series = as_series(series)
    w = resolve_weights(series, weights)
    if ell is None:
        ell = 0.5 * (hi_fit.tau - lo_fit.tau)
    cov, _, _ = _sandwich(series.values, w, fit.tau, ell, fit.theta_hat, lo_fit.theta_hat, hi_fit.theta_hat, box)
    return cov


def multi_tau_fit(series, taus, cfg):
    """Independent fits at strictly increasing levels sharing one set of weights."""
    taus = np.asarray(taus, dtype=float).ravel()
    if taus.size == 0 or np.any(np.diff(taus) <= 0.0):
        raise DomainError("taus must be a nonempty strictly increasing sequence")
    if np.any(taus <= 0.0) or np.any(taus >= 1.0):
        raise DomainError("taus must lie in (0, 1)")
    series = _validate_series(series)
    w = resolve_weights(series, cfg.weights, cfg.self_weights)
    prof = _Profile(series.values, w)
    out = []
    for tau in taus:
        try:
            out.append(_qr_fit_with(series, w, cfg.with_tau(float(tau)), prof))
        except (DomainError, NumericalError) as exc:
            raise type(exc)(f"fit failed at tau={tau:g}: {exc}") from exc
    return out


def rearrange(values, axis=-1):
    """Monotone rearrangement: sort values along the level axis."""
    return np.sort(np.asarray(values, dtype=float), axis=axis)


def weighted_check_loss(y, q, w, tau):
    r = np.asarray(y, dtype=float) - np.asarray(q, dtype=float)
    return float(np.sum(w * r * (tau - (r < 0.0))))
