"""Self-weighted composite quantile regression under Tukey-lambda innovations.

The working model at level tau is

    q_{t,tau}(phi) = Q_tau(lam) * (a0 / (1 - b1) + a1 * x_t(b1)),

fitted jointly over K levels next to a target level ``tau0``.  For fixed
``(b1, lam)`` the model is linear in ``(A, a1)`` with ``A = a0 / (1 - b1)``,
so the inner problem is an exact constrained linear QR; the outer pair is
searched on a grid and refined locally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import fft as sfft

from ._kernels import arch_sums
from .core import (
    EPS_BOX,
    DomainError,
    NumericalError,
    QGarchParams,
    TukeyGarchParams,
    SelfWeightConfig,
    as_series,
    check_loss,
    geometric_sums,
    tukey_quantile,
    tukey_quantile_derivs,
)
from .qr import COND_WARN, F_CAP, bandwidth_hall_sheather, resolve_weights, solve_linear_qr

A_MIN = 1e-10
HAC_DOF = 4


def default_b1_grid():
    return np.round(np.arange(1, 50) * 0.02, 10)


def default_lambda_grid():
    g = np.round(np.arange(-18, 19) * 0.05, 10)
    return g[g != 0.0]


def cqr_levels(tau0, h, K):
    """Equally spaced levels ``tau0 +- h (k-1)/(K-1)`` moving toward the median."""
    if K < 3:
        raise DomainError("K must be at least 3")
    if not h > 0.0:
        raise DomainError("h must be positive")
    step = h * np.arange(K) / (K - 1)
    taus = tau0 + step if tau0 < 0.5 else tau0 - step
    if np.any(taus <= 0.0) or np.any(taus >= 1.0):
        raise DomainError("levels leave (0, 1)")
    if not (np.all(taus < 0.5) or np.all(taus > 0.5)):
        raise DomainError("levels must lie on one side of 0.5")
    return taus if tau0 < 0.5 else taus[::-1]


@dataclass(frozen=True)
class CqrConfig:
    """Settings of :func:`cqr_fit`.

    Parameters
    ----------
    tau0 : float
        Target level.
    h : float
        Width of the one-sided level band.
    K : int
        Number of levels in the band.
    weights : None, "ones" or array
    b1_grid, lambda_grid : array_like
        Outer search grid.
    refine_rounds : int
        Rounds of a 3x3 local grid with the step halved each round.
    box_a1_zero : bool
        Fix ``a1 = 0`` (constant-scale model).
    compute_cov : bool
    bandwidth_multiplier : float
        Multiplier of the automatic HAC bandwidth.
    simplified_cov : bool
        Use the covariance valid under correct specification.
    """

    tau0: float
    h: float = 0.1
    K: int = 19
    weights: object = None
    b1_grid: Sequence[float] = field(default_factory=default_b1_grid)
    lambda_grid: Sequence[float] = field(default_factory=default_lambda_grid)
    refine_rounds: int = 3
    box_a1_zero: bool = False
    compute_cov: bool = True
    bandwidth_multiplier: float = 1.0
    simplified_cov: bool = False
    self_weights: SelfWeightConfig = field(default_factory=SelfWeightConfig)

    def __post_init__(self):
        if not 0.0 < self.tau0 < 1.0:
            raise DomainError("tau0 must lie in (0, 1)")
        cqr_levels(self.tau0, self.h, self.K)
        b = np.asarray(self.b1_grid, dtype=float)
        lam = np.asarray(self.lambda_grid, dtype=float)
        if b.size == 0 or np.any(b < 0.0) or np.any(b > 1.0 - EPS_BOX):
            raise DomainError("b1_grid must be nonempty and inside [0, 1 - 1e-6]")
        if lam.size == 0 or np.any(np.abs(lam) < 1e-8):
            raise DomainError("lambda_grid must be nonempty and exclude 0")
        if self.refine_rounds < 0:
            raise DomainError("refine_rounds must be nonnegative")

    @property
    def taus(self):
        return cqr_levels(self.tau0, self.h, self.K)

    def replace(self, **kw):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return CqrConfig(**d)


@dataclass(frozen=True)
class CqrCovariance:
    """Asymptotic covariance of the composite estimator.

    ``sigma`` is the asymptotic sandwich of ``sqrt(n) (phi_hat - phi)``;
    ``cov_phi = sigma / n`` is the covariance of ``phi_hat`` itself.
    """

    sigma: np.ndarray
    n: int
    phi: TukeyGarchParams
    hac_bandwidth: float
    omega0: np.ndarray
    omega1: np.ndarray

    @property
    def cov_phi(self):
        return self.sigma / self.n

    def theta_cov_at(self, tau):
        """Covariance of ``g_tau(phi_hat)`` (already divided by ``n``)."""
        g = g_jacobian(self.phi, tau)
        out = g @ self.sigma @ g.T / self.n
        return 0.5 * (out + out.T)


@dataclass(frozen=True)
class CqrFit:
    phi_hat: TukeyGarchParams
    objective_value: float
    tau_levels: np.ndarray
    tau0: float
    n: int
    cov: Optional[np.ndarray] = None
    hac_bandwidth: Optional[float] = None
    covariance: Optional[CqrCovariance] = None
    diagnostics: dict = field(default_factory=dict)

    def theta_at(self, tau=None):
        return g_transform(self.phi_hat, self.tau0 if tau is None else tau)

    def theta_std_errors(self, tau=None):
        if self.covariance is None:
            return None
        c = self.covariance.theta_cov_at(self.tau0 if tau is None else tau)
        return np.sqrt(np.clip(np.diag(c), 0.0, None))


# --------------------------------------------------------------------------
# transform
# --------------------------------------------------------------------------


def g_transform(phi, tau):
    """``g_tau(phi) = (a0 Q / (1 - b1), a1 Q, b1)`` with ``Q = Q_tau(lam)``."""
    q = tukey_quantile(tau, phi.lam)
    return QGarchParams(phi.a0 * q / (1.0 - phi.b1), phi.a1 * q, phi.b1)


def g_jacobian(phi, tau):
    """3x4 Jacobian of ``g_tau`` with respect to ``(a0, a1, b1, lam)``."""
    q, dq, _ = tukey_quantile_derivs(tau, phi.lam)
    c = 1.0 - phi.b1
    return np.array(
        [
            [q / c, 0.0, phi.a0 * q / c**2, phi.a0 * dq / c],
            [0.0, q, 0.0, phi.a1 * dq],
            [0.0, 0.0, 1.0, 0.0],
        ]
    )


# --------------------------------------------------------------------------
# model paths and derivatives
# --------------------------------------------------------------------------


def scale_path(phi, y):
    """``h_t(phi)`` for ``t = 1..n+1``."""
    return phi.a0 / (1.0 - phi.b1) + phi.a1 * geometric_sums(y, phi.b1)


def cqr_quantile_path(phi, y, tau):
    """``q_{t,tau}(phi)`` for ``t = 1..n+1``; the last entry is the forecast."""
    return tukey_quantile(tau, phi.lam) * scale_path(phi, y)


def _scale_derivs(phi, y):
    """``h``, ``hdot`` (n+1 x 3) and ``hddot`` (n+1 x 3 x 3) over ``(a0, a1, b1)``."""
    s, ds, d2s = geometric_sums(y, phi.b1, derivs=True)
    c = 1.0 - phi.b1
    h = phi.a0 / c + phi.a1 * s
    hd = np.column_stack([np.full_like(s, 1.0 / c), s, phi.a0 / c**2 + phi.a1 * ds])
    hdd = np.zeros((s.size, 3, 3))
    hdd[:, 0, 2] = hdd[:, 2, 0] = 1.0 / c**2
    hdd[:, 1, 2] = hdd[:, 2, 1] = ds
    hdd[:, 2, 2] = 2.0 * phi.a0 / c**3 + phi.a1 * d2s
    return h, hd, hdd


def cqr_quantile_grad(phi, y, tau):
    """Rows ``qdot_{t,tau}`` (n+1 x 4) with respect to ``(a0, a1, b1, lam)``."""
    h, hd, _ = _scale_derivs(phi, y)
    q, dq, _ = tukey_quantile_derivs(tau, phi.lam)
    return np.column_stack([q * hd, dq * h])


def cqr_quantile_hessian(phi, y, tau):
    """Second derivatives ``qddot_{t,tau}`` (n+1 x 4 x 4)."""
    h, hd, hdd = _scale_derivs(phi, y)
    q, dq, d2q = tukey_quantile_derivs(tau, phi.lam)
    out = np.zeros((h.size, 4, 4))
    out[:, :3, :3] = q * hdd
    out[:, :3, 3] = dq * hd
    out[:, 3, :3] = dq * hd
    out[:, 3, 3] = d2q * h
    return out


def composite_objective(phi, y, w, taus):
    """``sum_t sum_k w_t rho_{tau_k}(y_t - q_{t,tau_k}(phi))``."""
    y = np.asarray(y, dtype=float)
    h = scale_path(phi, y)[:-1]
    total = 0.0
    for tau in taus:
        r = y - tukey_quantile(tau, phi.lam) * h
        total += float(np.sum(w * r * (tau - (r < 0.0))))
    return total


# --------------------------------------------------------------------------
# estimation
# --------------------------------------------------------------------------


class _Stacked:
    """Rows ``(t, k)`` of the composite problem in level-major order."""

    def __init__(self, y, w, taus, a1_zero):
        self.n = y.size
        self.K = taus.size
        self.y = np.ascontiguousarray(np.tile(y, self.K))
        self.c = np.ascontiguousarray(np.tile(w, self.K))
        self.tau = np.ascontiguousarray(np.repeat(taus, self.n))
        self.taus = taus
        self.abs_y = np.ascontiguousarray(np.abs(y))
        self.a1_bounds = (0.0, 0.0) if a1_zero else (0.0, math.inf)
        self._xcache = {}

    def x(self, b1):
        key = float(b1)
        v = self._xcache.get(key)
        if v is None:
            v = np.ascontiguousarray(np.tile(arch_sums(self.abs_y, key)[:-1], self.K))
            if len(self._xcache) < 64:
                self._xcache[key] = v
        return v

    def solve(self, b1, lam, start):
        qk = tukey_quantile(self.taus, lam)
        z0 = np.ascontiguousarray(np.repeat(qk, self.n))
        z1 = z0 * self.x(b1)
        a, a1, f = solve_linear_qr(self.y, z0, z1, self.c, self.tau, (A_MIN, math.inf), self.a1_bounds, start)
        return f, a, a1


def _search(prob, cfg):
    b_grid = np.asarray(cfg.b1_grid, dtype=float)
    l_grid = np.asarray(cfg.lambda_grid, dtype=float)
    # q at the middle level is kept fixed when lambda moves along the first row
    mid = prob.taus[prob.taus.size // 2]
    qmid = np.array([tukey_quantile(mid, lam) for lam in l_grid])
    best = None
    prev_row = None
    for b1 in b_grid:
        row = []
        for j, lam in enumerate(l_grid):
            if prev_row is not None:
                start = prev_row[j]
            elif j > 0:
                r = qmid[j - 1] / qmid[j]
                start = (row[-1][0] * r, row[-1][1] * r)
            else:
                start = (1.0, 0.1)
            f, a, a1 = prob.solve(b1, lam, start)
            row.append((a, a1))
            if best is None or f < best[0]:
                best = (f, b1, lam, a, a1)
        prev_row = row
    evals = b_grid.size * l_grid.size
    db = float(np.min(np.diff(b_grid))) if b_grid.size > 1 else 0.02
    dl = float(np.min(np.diff(l_grid))) if l_grid.size > 1 else 0.05
    for _ in range(cfg.refine_rounds):
        db, dl = db / 2.0, dl / 2.0
        f0, b0, l0, a0, a10 = best
        for i in (-1, 0, 1):
            for j in (-1, 0, 1):
                if i == 0 and j == 0:
                    continue
                b1 = min(max(b0 + i * db, 0.0), 1.0 - EPS_BOX)
                lam = l0 + j * dl
                if abs(lam) < 1e-8:
                    continue
                f, a, a1 = prob.solve(b1, lam, (a0, a10))
                evals += 1
                if f < best[0]:
                    best = (f, b1, lam, a, a1)
    return best, evals


def cqr_fit(series, cfg):
    """Composite QR estimate ``phi_hat`` over the levels of ``cfg``.

    Returns
    -------
    CqrFit
    """
    series = as_series(series)
    n = len(series)
    if n < 100:
        raise DomainError(f"need at least 100 observations, got {n}")
    y = series.values
    if not np.any(y[:-1] != 0.0):
        raise DomainError("degenerate regressor: all lagged |y| are zero")
    w = resolve_weights(series, cfg.weights, cfg.self_weights)
    taus = cfg.taus
    prob = _Stacked(y, w, taus, cfg.box_a1_zero)
    (f, b1, lam, a, a1), evals = _search(prob, cfg)
    phi = TukeyGarchParams(max(a, A_MIN) * (1.0 - b1), max(a1, 0.0), b1, lam)
    diag = {"grid_evaluations": evals}
    if not cfg.compute_cov:
        return CqrFit(phi, float(f), taus, cfg.tau0, n, diagnostics=diag)
    cv = cqr_asymptotic_cov(series, phi, taus, w, cfg.bandwidth_multiplier, cfg.simplified_cov)
    return CqrFit(phi, float(f), taus, cfg.tau0, n, cv.cov_phi, cv.hac_bandwidth, cv, diag)


# --------------------------------------------------------------------------
# HAC covariance
# --------------------------------------------------------------------------


def qs_kernel(x):
    """Quadratic-spectral kernel with ``K(0) = 1``."""
    x = np.asarray(x, dtype=float)
    z = 6.0 * math.pi * x / 5.0
    with np.errstate(divide="ignore", invalid="ignore"):
        k = 25.0 / (12.0 * math.pi**2 * x * x) * (np.sin(z) / z - np.cos(z))
    # the closed form cancels badly near 0; use its series sum_j (-1)^(j+1) 6j z^(2j-2) / (2j+1)!
    z2 = z * z
    series = sum((-1) ** (j + 1) * 6.0 * j / math.factorial(2 * j + 1) * z2 ** (j - 1) for j in range(1, 8))
    k = np.where(np.abs(z) < 0.5, series, k)
    return float(k) if k.ndim == 0 else k


def autocovariances(X):
    """``Gamma(l) = n^-1 sum_{t>l} X_t X_{t-l}'`` for ``l = 0..n-1`` (shape n x d x d)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    m = sfft.next_fast_len(2 * n, real=True)
    F = sfft.rfft(X, n=m, axis=0)
    cross = sfft.irfft(F[:, :, None] * np.conj(F[:, None, :]), n=m, axis=0)[:n]
    return cross / n


def hac_cov(X, B, d=HAC_DOF):
    """Kernel estimator ``n/(n-d) sum_l K(l/B) Gamma(l)`` with the QS kernel."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n <= d:
        raise DomainError(f"need n > d, got n={n}, d={d}")
    if not B > 0.0:
        raise DomainError("bandwidth must be positive")
    G = autocovariances(X)
    k = qs_kernel(np.arange(n) / B)
    S = np.tensordot(k[1:], G[1:], axes=1)
    out = G[0] + S + S.T
    out *= n / (n - d)
    return 0.5 * (out + out.T)


def ar1_alpha2(X, iota=None):
    """``alpha(2)`` from per-column AR(1) least-squares fits (no intercept)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    d = X.shape[1]
    iota = np.ones(d) if iota is None else np.asarray(iota, dtype=float)
    num = den = 0.0
    for i in range(d):
        x = X[:, i]
        if np.ptp(x) == 0.0:
            raise DomainError(f"column {i} of the score matrix is constant")
        x0, x1 = x[:-1], x[1:]
        rho = float(x0 @ x1 / (x0 @ x0))
        s2 = float(np.mean((x1 - rho * x0) ** 2))
        num += iota[i] * 4.0 * rho * rho * s2 * s2 / (1.0 - rho) ** 8
        den += iota[i] * s2 * s2 / (1.0 - rho) ** 4
    return num / den


def bandwidth_from_alpha2(n, a2):
    """``1.3221 (n alpha(2))^(1/5)`` floored at 1."""
    return max(1.3221 * (n * a2) ** 0.2, 1.0)


def auto_bandwidth(X, iota=None):
    """Automatic QS-kernel bandwidth from AR(1) approximations of the columns."""
    X = np.asarray(X, dtype=float)
    return bandwidth_from_alpha2(X.shape[0], ar1_alpha2(X, iota))


def _solve(a, b, what):
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > COND_WARN:
        raise NumericalError(f"{what} is singular or ill-conditioned (condition number {cond:.3g})")
    return np.linalg.solve(a, b)


def cqr_asymptotic_cov(series, phi, taus, weights=None, bandwidth_multiplier=1.0, simplified=False):
    """Sandwich covariance of the composite estimator.

    ``Omega1 = Omega12 - Omega11`` uses difference-quotient densities of the
    fitted parametric quantiles; ``Omega0`` is the QS-kernel HAC estimate of
    the long-run covariance of ``X_t = sum_k w_t qdot_k psi_k``.
    """
    series = as_series(series)
    y = series.values
    n = y.size
    w = resolve_weights(series, weights)
    taus = np.asarray(taus, dtype=float)
    h, hd, hdd = _scale_derivs(phi, y)
    h, hd, hdd = h[:-1], hd[:-1], hdd[:-1]
    om11 = np.zeros((4, 4))
    om12 = np.zeros((4, 4))
    X = np.zeros((n, 4))
    qdots = []
    for tau in taus:
        q, dq, d2q = tukey_quantile_derivs(tau, phi.lam)
        qt = q * h
        qd = np.column_stack([q * hd, dq * h])
        ps = tau - (y < qt)
        ell = min(bandwidth_hall_sheather(tau, n), 0.99 * min(tau, 1.0 - tau))
        spread = (tukey_quantile(tau + ell, phi.lam) - tukey_quantile(tau - ell, phi.lam)) * h
        f = np.zeros(n)
        pos = spread > 0.0
        f[pos] = np.clip(2.0 * ell / spread[pos], 0.0, F_CAP)
        om12 += (qd * (w * f)[:, None]).T @ qd
        wp = w * ps
        blk = np.zeros((4, 4))
        blk[:3, :3] = q * np.einsum("t,tij->ij", wp, hdd)
        v = dq * (wp @ hd)
        blk[:3, 3] = v
        blk[3, :3] = v
        blk[3, 3] = d2q * (wp @ h)
        om11 += blk
        X += qd * wp[:, None]
        qdots.append(qd)
    om11 /= n
    om12 /= n
    if simplified:
        om1 = om12
        om0 = np.zeros((4, 4))
        for i, ti in enumerate(taus):
            for j, tj in enumerate(taus):
                psi_ij = min(ti, tj) * (1.0 - max(ti, tj))
                om0 += psi_ij * (qdots[i] * (w * w)[:, None]).T @ qdots[j] / n
        om0 = 0.5 * (om0 + om0.T)
        B = float("nan")
    else:
        om1 = om12 - om11
        B0 = auto_bandwidth(X)
        B = B0 * bandwidth_multiplier
        om0 = hac_cov(X, B)
    om1 = 0.5 * (om1 + om1.T)
    a = _solve(om1, om0, "Omega1")
    sigma = _solve(om1, a.T, "Omega1")
    sigma = 0.5 * (sigma + sigma.T)
    return CqrCovariance(sigma, n, phi, B, om0, om1)


# --------------------------------------------------------------------------
# bandwidth selection
# --------------------------------------------------------------------------


def validation_loss(phi, train, validate, tau0):
    """Check loss at ``tau0`` over the validation block, using the full history."""
    full = np.concatenate([np.asarray(train, dtype=float), np.asarray(validate, dtype=float)])
    n0 = len(train)
    q = cqr_quantile_path(phi, full, tau0)[n0 : full.size]
    return float(np.sum(check_loss(tau0, full[n0:] - q)))


def select_bandwidth_h(train, validate, tau0, h_grid, cfg=None):
    """Choose ``h`` from ``h_grid`` by validation check loss at ``tau0``.

    Returns
    -------
    h_opt : float
    losses : ndarray
        Validation loss per grid value.
    """
    train = as_series(train)
    validate = as_series(validate)
    h_grid = np.asarray(h_grid, dtype=float).ravel()
    if h_grid.size == 0:
        raise DomainError("h_grid must be nonempty")
    if len(validate) < 50:
        raise DomainError("validation block needs at least 50 observations")
    cfg = CqrConfig(tau0) if cfg is None else cfg
    order = np.argsort(h_grid, kind="stable")
    losses = np.empty(h_grid.size)
    for i in order:
        h = float(h_grid[i])
        try:
            fit = cqr_fit(train, cfg.replace(tau0=tau0, h=h, compute_cov=False))
        except (DomainError, NumericalError) as exc:
            raise type(exc)(f"fit failed for h={h:g}: {exc}") from exc
        losses[i] = validation_loss(fit.phi_hat, train.values, validate.values, tau0)
    best = order[int(np.argmin(losses[order]))]  # first minimum along increasing h
    return float(h_grid[best]), losses
