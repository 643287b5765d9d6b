"""Domain types and numerical primitives for the quantile GARCH(1,1) model.

The conditional quantile at level tau is

    q_t(theta) = omega + alpha1 * x_t(beta1),
    x_t(beta)  = sum_{j=1}^{t-1} beta^(j-1) |y_{t-j}|,

with pre-sample values set to zero.  ``x_t`` is computed by the exact
recursion ``x_1 = 0, x_t = |y_{t-1}| + beta x_{t-1}``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from ._kernels import arch_sums, arch_sums_derivs

EPS_BOX = 1e-6
LAMBDA_MIN = 1e-8


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class NumericalError(RuntimeError):
    """A computation failed numerically (singular matrix, non-finite values, ...)."""


def _check_tau(tau):
    tau_arr = np.asarray(tau, dtype=float)
    if not np.all((tau_arr > 0.0) & (tau_arr < 1.0)):
        raise DomainError(f"quantile level must lie in (0, 1), got {tau}")
    return tau_arr


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ReturnSeries:
    """Ordered finite observations ``y_1..y_n`` with optional date labels."""

    values: np.ndarray
    labels: Optional[tuple] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size < 1:
            raise DomainError("a return series needs at least one observation")
        bad = np.flatnonzero(~np.isfinite(v))
        if bad.size:
            raise DomainError(f"non-finite value at position {bad[0] + 1}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != v.size:
                raise DomainError(
                    f"labels length {len(labels)} does not match values length {v.size}"
                )
            object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.values.size

    @property
    def abs_values(self):
        return np.abs(self.values)

    def slice(self, start, stop):
        labels = None if self.labels is None else self.labels[start:stop]
        return ReturnSeries(self.values[start:stop], labels)


@dataclass(frozen=True)
class QGarchParams:
    """Coefficients ``(omega, alpha1, beta1)`` at a single quantile level."""

    omega: float
    alpha1: float
    beta1: float

    def __post_init__(self):
        for name in ("omega", "alpha1", "beta1"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise DomainError(f"{name} must be finite, got {val}")
            object.__setattr__(self, name, val)
        if not 0.0 <= self.beta1 <= 1.0 - EPS_BOX:
            raise DomainError(f"beta1 must lie in [0, 1 - {EPS_BOX}], got {self.beta1}")

    def as_array(self):
        return np.array([self.omega, self.alpha1, self.beta1])

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class TukeyGarchParams:
    """Linear GARCH(1,1) coefficients with Tukey-lambda innovations.

    The conditional quantile at level tau is
    ``Q_tau(lam) * (a0 / (1 - b1) + a1 * x_t(b1))``.
    """

    a0: float
    a1: float
    b1: float
    lam: float

    def __post_init__(self):
        for name in ("a0", "a1", "b1", "lam"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise DomainError(f"{name} must be finite, got {val}")
            object.__setattr__(self, name, val)
        if self.a0 <= 0.0:
            raise DomainError(f"a0 must be positive, got {self.a0}")
        if self.a1 < 0.0:
            raise DomainError(f"a1 must be nonnegative, got {self.a1}")
        if not 0.0 <= self.b1 <= 1.0 - EPS_BOX:
            raise DomainError(f"b1 must lie in [0, 1 - {EPS_BOX}], got {self.b1}")
        if abs(self.lam) < LAMBDA_MIN:
            raise DomainError(f"lambda must be nonzero (|lambda| >= {LAMBDA_MIN})")

    def as_array(self):
        return np.array([self.a0, self.a1, self.b1, self.lam])

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


@dataclass(frozen=True)
class SelfWeightConfig:
    """Settings for the self-weights.

    Parameters
    ----------
    c_quantile : float
        Level of the sample quantile used as the threshold ``c``.
    truncation_tol : float
        The tail of the infinite weight sum is accumulated until terms drop
        below this value.
    c_from_abs : bool
        Take ``c`` as a quantile of ``|y|`` instead of ``y``.
    """

    c_quantile: float = 0.95
    truncation_tol: float = 1e-12
    c_from_abs: bool = False

    def __post_init__(self):
        if not 0.0 < self.c_quantile < 1.0:
            raise DomainError("c_quantile must lie in (0, 1)")
        if not self.truncation_tol > 0.0:
            raise DomainError("truncation_tol must be positive")


@dataclass(frozen=True)
class CoefficientFunctions:
    """Coefficient curves ``u -> (omega(u), alpha1(u), beta1(u))``.

    The callables must accept numpy arrays.  Identification requires
    ``omega(0.5) = alpha1(0.5) = 0``.
    """

    omega_fn: Callable
    alpha1_fn: Callable
    beta1_fn: Callable
    name: str = "custom"
    check_grid: int = field(default=999, repr=False)

    def __post_init__(self):
        u = np.linspace(0.0, 1.0, self.check_grid + 2)[1:-1]
        b = np.asarray(self.beta1_fn(u), dtype=float)
        if not np.all(np.isfinite(b)) or np.any(b < 0.0) or np.any(b >= 1.0):
            raise DomainError("beta1(u) must lie in [0, 1) on (0, 1)")
        half = np.array([0.5])
        if abs(float(np.asarray(self.omega_fn(half))[0])) > 1e-12:
            raise DomainError("omega(0.5) must equal 0")
        if abs(float(np.asarray(self.alpha1_fn(half))[0])) > 1e-12:
            raise DomainError("alpha1(0.5) must equal 0")

    def at(self, tau):
        """Return the true :class:`QGarchParams` at level ``tau``."""
        _check_tau(tau)
        t = np.array([float(tau)])
        return QGarchParams(
            float(np.asarray(self.omega_fn(t))[0]),
            float(np.asarray(self.alpha1_fn(t))[0]),
            float(np.asarray(self.beta1_fn(t))[0]),
        )

    def draw(self, u):
        u = np.asarray(u, dtype=float)
        return (
            np.asarray(self.omega_fn(u), dtype=float),
            np.asarray(self.alpha1_fn(u), dtype=float),
            np.asarray(self.beta1_fn(u), dtype=float),
        )


# --------------------------------------------------------------------------
# loss functions
# --------------------------------------------------------------------------


def check_loss(tau, x):
    """Check loss ``rho_tau(x) = x (tau - I(x < 0))``.

    Examples
    --------
    >>> check_loss(0.05, -1.0)
    0.95
    """
    _check_tau(tau)
    x = np.asarray(x, dtype=float)
    out = x * (tau - (x < 0.0))
    return float(out) if out.ndim == 0 else out


def psi(tau, x):
    """Subgradient ``psi_tau(x) = tau - I(x < 0)``; ``psi(tau, 0) = tau``."""
    _check_tau(tau)
    x = np.asarray(x, dtype=float)
    out = tau - (x < 0.0).astype(float)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# conditional quantile
# --------------------------------------------------------------------------


def _history(abs_history, t):
    if t < 1:
        raise DomainError(f"time index must be >= 1, got {t}")
    h = np.asarray(abs_history, dtype=float).ravel()
    if h.size < t - 1:
        raise DomainError(f"need {t - 1} past values for t={t}, got {h.size}")
    return h[: t - 1]


def cond_quantile(theta, abs_history, t):
    """Conditional quantile ``q_t(theta)`` from ``|y_1|..|y_{t-1}|``."""
    h = _history(abs_history, t)
    s = arch_sums(np.ascontiguousarray(h), theta.beta1)
    return theta.omega + theta.alpha1 * s[-1]


def cond_quantile_grad(theta, abs_history, t):
    """Gradient of ``q_t`` with respect to ``(omega, alpha1, beta1)``."""
    h = _history(abs_history, t)
    s, ds, _ = arch_sums_derivs(np.ascontiguousarray(h), theta.beta1)
    return np.array([1.0, s[-1], theta.alpha1 * ds[-1]])


def geometric_sums(y, beta, derivs=False):
    """``x_t(beta)`` for ``t = 1..n+1`` (length ``n + 1``).

    With ``derivs=True`` also returns the first and second beta-derivatives.
    """
    a = np.ascontiguousarray(np.abs(np.asarray(y, dtype=float)))
    if derivs:
        return arch_sums_derivs(a, float(beta))
    return arch_sums(a, float(beta))


def cond_quantile_path(theta, y):
    """``q_1..q_{n+1}`` for the whole sample; the last entry is the forecast."""
    return theta.omega + theta.alpha1 * geometric_sums(y, theta.beta1)


def cond_quantile_path_grad(theta, y):
    """Rows ``qdot_t`` for ``t = 1..n+1`` (shape ``(n + 1, 3)``)."""
    s, ds, _ = geometric_sums(y, theta.beta1, derivs=True)
    return np.column_stack([np.ones_like(s), s, theta.alpha1 * ds])


# --------------------------------------------------------------------------
# Tukey-lambda family
# --------------------------------------------------------------------------


def _check_lambda(lam):
    lam = float(lam)
    if not math.isfinite(lam) or abs(lam) < LAMBDA_MIN:
        raise DomainError(f"lambda must be finite and nonzero, got {lam}")
    return lam


def tukey_quantile(tau, lam):
    """Tukey-lambda quantile ``(tau^lam - (1-tau)^lam) / lam``."""
    tau = _check_tau(tau)
    lam = _check_lambda(lam)
    out = (tau**lam - (1.0 - tau) ** lam) / lam
    out = np.where(tau == 0.5, 0.0, out)
    return float(out) if out.ndim == 0 else out


def tukey_quantile_derivs(tau, lam):
    """Return ``(Q, dQ/dlam, d2Q/dlam2)`` of the Tukey-lambda quantile."""
    tau = _check_tau(tau)
    lam = _check_lambda(lam)
    a = tau**lam
    b = (1.0 - tau) ** lam
    la = lam * np.log(tau) - 1.0
    lb = lam * np.log1p(-tau) - 1.0
    q = np.where(tau == 0.5, 0.0, (a - b) / lam)
    q1 = np.where(tau == 0.5, 0.0, (a * la - b * lb) / lam**2)
    q2 = np.where(tau == 0.5, 0.0, (a * (la**2 + 1.0) - b * (lb**2 + 1.0)) / lam**3)
    if q.ndim == 0:
        return float(q), float(q1), float(q2)
    return q, q1, q2


# --------------------------------------------------------------------------
# normal distribution
# --------------------------------------------------------------------------


def normal_quantile(p):
    """Standard normal quantile function."""
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0.0) & (p < 1.0)):
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    out = special.ndtri(p)
    return float(out) if out.ndim == 0 else out


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# self-weights
# --------------------------------------------------------------------------

# kernel terms below this are dropped from the data part of the weight sum
_KAPPA_FLOOR = 1e-20


def _kappa(tol):
    i = np.arange(0, 100_000, dtype=float)
    k = np.exp(-np.log1p(i) ** 2)
    n_keep = int(np.argmax(k < tol))
    return k[:n_keep]


def weight_tail_sum(tol=1e-12):
    """``sum_{i>=0} exp(-ln^2(i+1))`` accumulated until terms fall below ``tol``."""
    return float(math.fsum(_kappa(tol)))


def sample_quantile(x, p):
    """Type-7 (linear interpolation) sample quantile."""
    return np.quantile(np.asarray(x, dtype=float), p, method="linear")


def self_weight_threshold(series, cfg=SelfWeightConfig()):
    vals = series.abs_values if cfg.c_from_abs else series.values
    c = float(sample_quantile(vals, cfg.c_quantile))
    if not c > 0.0:
        raise DomainError(f"self-weight threshold c must be positive, got {c}")
    return c


def compute_self_weights(series, cfg=SelfWeightConfig(), c=None):
    """Self-weights ``w_t = (sum_i kappa_i max(1, |y_{t-i-1}|/c))^(-3)``.

    ``kappa_i = exp(-ln^2(i+1))`` and pre-sample values are zero, so every
    weight depends only on the past.  Writing ``max(1, a) = 1 + (a - 1)_+``
    splits the sum into a constant tail ``S_inf`` and a finite convolution.

    Parameters
    ----------
    series : ReturnSeries
    cfg : SelfWeightConfig
    c : float, optional
        Threshold override.  By default the ``cfg.c_quantile`` sample
        quantile of the series.
    """
    if c is None:
        c = self_weight_threshold(series, cfg)
    elif not c > 0.0:
        raise DomainError(f"self-weight threshold c must be positive, got {c}")
    n = len(series)
    s_inf = weight_tail_sum(cfg.truncation_tol)
    excess = np.maximum(series.abs_values / c - 1.0, 0.0)
    kappa = _kappa(_KAPPA_FLOOR)
    total = np.full(n, s_inf)
    if n > 1:
        total[1:] += np.convolve(excess[:-1], kappa)[: n - 1]
    return total**-3.0


# --------------------------------------------------------------------------
# stationarity
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StationarityReport:
    satisfied: bool
    sum_estimate: float
    std_error: float
    j_max: int


def stationarity_check(coef, s=1.0, mc_draws=100_000, j_max=None, seed=0):
    """Monte-Carlo check of the moment condition for strict stationarity.

    For ``s <= 1`` estimates ``sum_j E[|alpha1(U)|^s beta1(U)^((j-1)s)]``;
    for ``s > 1`` estimates ``sum_j (E[...])^(1/s)``.  The condition is
    declared satisfied when the estimate plus two standard errors is below 1.
    """
    if not s > 0.0:
        raise DomainError("s must be positive")
    if mc_draws < 10_000:
        raise DomainError("mc_draws must be at least 10^4")
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=mc_draws)
    omega, alpha, beta = coef.draw(u)
    if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
        raise NumericalError("non-finite coefficient draw")
    if np.any(beta >= 1.0) or np.any(beta < 0.0):
        raise DomainError("beta1 draw outside [0, 1)")
    a = np.abs(alpha) ** s
    bs = beta**s
    if j_max is None:
        bmax = float(bs.max())
        j_max = 1 if bmax == 0.0 else int(math.ceil(math.log(1e-10) / math.log(bmax))) + 1
    if s <= 1.0:
        # closed-form finite geometric sum per draw
        with np.errstate(invalid="ignore", divide="ignore"):
            geo = np.where(bs == 1.0, j_max, (1.0 - bs**j_max) / (1.0 - bs))
        v = a * geo
        est = float(v.mean())
        se = float(v.std(ddof=1) / math.sqrt(mc_draws))
    else:
        j = np.arange(j_max)
        ej = np.array([np.mean(a * bs**k) for k in j])
        est = float(np.sum(ej ** (1.0 / s)))
        with np.errstate(divide="ignore"):
            grad = np.where(ej > 0.0, ej ** (1.0 / s - 1.0) / s, 0.0)
        # influence of each draw through every E_j
        infl = np.zeros(mc_draws)
        for k in j:
            if grad[k] != 0.0:
                infl += grad[k] * (a * bs**k - ej[k])
        se = float(infl.std(ddof=1) / math.sqrt(mc_draws))
    return StationarityReport(bool(est + 2.0 * se < 1.0), est, se, int(j_max))


def warn_if_nonstationary(coef, s=1.0, seed=0):
    rep = stationarity_check(coef, s=s, mc_draws=10_000, seed=seed)
    if not rep.satisfied:
        warnings.warn(
            f"stationarity moment sum {rep.sum_estimate:.4f} (se {rep.std_error:.4f}) "
            "is not certified below 1",
            RuntimeWarning,
            stacklevel=3,
        )
    return rep


def as_series(y) -> ReturnSeries:
    if isinstance(y, ReturnSeries):
        return y
    return ReturnSeries(np.asarray(y, dtype=float))


__all__ = [
    "EPS_BOX",
    "DomainError",
    "NumericalError",
    "ReturnSeries",
    "QGarchParams",
    "TukeyGarchParams",
    "SelfWeightConfig",
    "CoefficientFunctions",
    "StationarityReport",
    "check_loss",
    "psi",
    "cond_quantile",
    "cond_quantile_grad",
    "cond_quantile_path",
    "cond_quantile_path_grad",
    "geometric_sums",
    "tukey_quantile",
    "tukey_quantile_derivs",
    "normal_quantile",
    "normal_pdf",
    "compute_self_weights",
    "self_weight_threshold",
    "weight_tail_sum",
    "sample_quantile",
    "stationarity_check",
    "as_series",
]
