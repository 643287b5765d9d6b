"""Sample paths of the random-coefficient quantile GARCH(1,1) process.

    y_t = omega(U_t) + alpha1(U_t) * sum_{j>=1} beta1(U_t)^(j-1) |y_{t-j}|,

with ``U_t`` i.i.d. uniform and ``y_t = 0`` before the burn-in starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from ._kernels import simulate_path
from .core import (
    CoefficientFunctions,
    DomainError,
    NumericalError,
    ReturnSeries,
    normal_quantile,
    tukey_quantile,
    warn_if_nonstationary,
)

TUKEY_LAMBDA = -0.2


@dataclass(frozen=True)
class SimulationSpec:
    """Inputs of :func:`simulate_qgarch`.

    ``burn_in`` leading values are generated and discarded; the inner sum is
    truncated at the lag where ``max beta1 ** lag`` drops below
    ``truncation_tol``.
    """

    coef: CoefficientFunctions
    n: int
    burn_in: int = 500
    truncation_tol: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be at least 1")
        if self.burn_in < 0:
            raise DomainError("burn_in must be nonnegative")
        if not self.truncation_tol > 0.0:
            raise DomainError("truncation_tol must be positive")


def max_lag(coef, tol):
    """Truncation lag ``M`` with ``beta_max ** M < tol``."""
    u = (np.arange(10_000) + 0.5) / 10_000
    bmax = float(np.max(coef.beta1_fn(u)))
    if bmax >= 1.0:
        raise DomainError("beta1 reaches 1 on the check grid")
    if bmax <= 0.0:
        return 1
    return max(1, int(math.ceil(math.log(tol) / math.log(bmax))))


def simulate_qgarch(spec, return_draws=False, check_stationarity=True):
    """Simulate ``spec.n`` observations.

    Parameters
    ----------
    spec : SimulationSpec
    return_draws : bool
        Also return the uniform draws of the retained observations.
    check_stationarity : bool
        Warn when the moment condition with ``s = 1`` is not certified.

    Returns
    -------
    ReturnSeries, or (ReturnSeries, ndarray) when ``return_draws`` is set.
    """
    if check_stationarity:
        warn_if_nonstationary(spec.coef, s=1.0, seed=spec.seed)
    rng = np.random.default_rng(spec.seed)
    total = spec.n + spec.burn_in
    u = rng.uniform(size=total)
    omega, alpha, beta = spec.coef.draw(u)
    if np.any(beta >= 1.0) or np.any(beta < 0.0):
        t = int(np.flatnonzero((beta >= 1.0) | (beta < 0.0))[0])
        raise DomainError(f"beta1 draw outside [0, 1) at t={t - spec.burn_in + 1}")
    m = max_lag(spec.coef, spec.truncation_tol)
    y = simulate_path(
        np.ascontiguousarray(omega),
        np.ascontiguousarray(alpha),
        np.ascontiguousarray(beta),
        total,
        m,
    )
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise NumericalError(f"non-finite simulated value at t={int(bad[0]) - spec.burn_in + 1}")
    series = ReturnSeries(y[spec.burn_in :])
    if return_draws:
        return series, u[spec.burn_in :]
    return series


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------


def _inv_cdf(dist, u):
    u = np.asarray(u, dtype=float)
    if dist == "normal":
        return normal_quantile(u)
    return tukey_quantile(u, TUKEY_LAMBDA)


def _scaled(dist, u):
    return 0.1 * _inv_cdf(dist, u)


def _alpha_53(dist, u):
    u = np.asarray(u, dtype=float)
    return u - 0.5 + 0.1 * _inv_cdf(dist, u)


def _const(value, u):
    return np.full(np.shape(u), value, dtype=float)


def _beta_53(u):
    return 0.3 + 0.6 * np.abs(np.asarray(u, dtype=float) - 0.5)


def _beta_54(d, u):
    return 0.3 + d * (np.asarray(u, dtype=float) - 0.5) ** 2


def normalize_dist(dist):
    key = str(dist).lower().replace(" ", "")
    if key in ("normal", "n", "f_n", "gaussian"):
        return "normal"
    if key in ("tukey", "tukey(-0.2)", "tukey(−0.2)", "t", "f_t"):
        return "tukey"
    raise DomainError(f"unknown innovation distribution {dist!r}")


def preset_setting(name, dist="normal", d=0.0):
    """Coefficient functions of the standard simulation designs.

    ``"5.2"`` is a linear GARCH(1,1) with ``beta1 = 0.8``; ``"5.3"`` has
    level-dependent ``alpha1`` and ``beta1``; ``"5.4"`` has
    ``beta1 = 0.3 + d (u - 0.5)^2``.  ``dist`` is ``"normal"`` or
    ``"tukey"`` (Tukey-lambda with shape -0.2).
    """
    dist = normalize_dist(dist)
    name = str(name)
    omega = partial(_scaled, dist)
    if name == "5.2":
        return CoefficientFunctions(omega, partial(_scaled, dist), partial(_const, 0.8), f"5.2/{dist}")
    if name == "5.3":
        return CoefficientFunctions(omega, partial(_alpha_53, dist), _beta_53, f"5.3/{dist}")
    if name == "5.4":
        d = float(d)
        if 0.3 + 0.25 * d >= 1.0 or 0.3 + 0.25 * d < 0.0:
            raise DomainError("d makes beta1 leave [0, 1)")
        return CoefficientFunctions(omega, partial(_scaled, dist), partial(_beta_54, d), f"5.4/{dist}/d={d:g}")
    raise DomainError(f"unknown setting {name!r}; expected 5.2, 5.3 or 5.4")
