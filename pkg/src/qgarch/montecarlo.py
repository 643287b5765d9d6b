"""Monte-Carlo replication harness for the simulation designs.

Replication ``r`` simulates with seed ``seed + r``.  Replications run in
worker processes; ``QGARCH_THREADS`` caps the number of workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from .core import DomainError, NumericalError, cond_quantile_path
from .cqr import CqrConfig, cqr_asymptotic_cov, cqr_fit
from .inference import CvmConfig, cvm_test
from .qr import QrFitConfig, qr_fit, resolve_weights
from .simulate import SimulationSpec, preset_setting, simulate_qgarch

PARAM_NAMES = ("omega", "alpha1", "beta1")


def worker_count(requested=None):
    """Number of worker processes, capped by ``QGARCH_THREADS`` and the CPU count."""
    cap = os.environ.get("QGARCH_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise DomainError(f"QGARCH_THREADS must be an integer, got {cap!r}") from None
    if requested is not None:
        n = min(n, max(1, int(requested)))
    return n


@dataclass(frozen=True)
class Replication:
    index: int
    seed: int
    result: object = None
    error: str = None

    @property
    def ok(self):
        return self.error is None


def _run_one(task, seed, r):
    try:
        return Replication(r, seed + r, task(seed + r))
    except (DomainError, NumericalError, FloatingPointError) as exc:
        return Replication(r, seed + r, error=f"{type(exc).__name__}: {exc}")


def replicate(task, reps, seed=0, workers=None):
    """Run ``task(seed + r)`` for ``r = 0..reps-1``; results are ordered by ``r``.

    ``task`` must be picklable when more than one worker is used.
    Domain and numerical failures are recorded, not raised.
    """
    reps = int(reps)
    if reps < 1:
        raise DomainError("reps must be at least 1")
    workers = worker_count(workers)
    run = partial(_run_one, task, int(seed))
    if workers == 1 or reps == 1:
        return [run(r) for r in range(reps)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(run, range(reps), chunksize=max(1, reps // (4 * workers))))


# --------------------------------------------------------------------------
# replication tasks
# --------------------------------------------------------------------------


def simulate_setting(setting, dist, n, seed, d=0.0):
    coef = preset_setting(setting, dist, d)
    return simulate_qgarch(SimulationSpec(coef, n, seed=seed), check_stationarity=False)


def qr_task(setting, dist, n, tau, seed, d=0.0, bandwidth="hs"):
    """Estimate and standard errors of the QR fit on one simulated path."""
    y = simulate_setting(setting, dist, n, seed, d)
    fit = qr_fit(y, QrFitConfig(tau, bandwidth=bandwidth))
    return {"estimate": fit.theta_hat.as_array(), "se": fit.std_errors}


def cqr_task(setting, dist, n, tau, seed, d=0.0, h=0.1, K=19, multipliers=(1.0,)):
    """CQR estimate of ``theta(tau)`` with standard errors per HAC multiplier.

    The one-step forecasts of CQR, QR and the true coefficients at the end
    of the path are included for out-of-sample comparisons.
    """
    y = simulate_setting(setting, dist, n, seed, d)
    fit = cqr_fit(y, CqrConfig(tau, h=h, K=K, compute_cov=False))
    w = resolve_weights(y, None)
    ses = []
    for m in multipliers:
        cv = cqr_asymptotic_cov(y, fit.phi_hat, fit.tau_levels, w, m)
        ses.append(np.sqrt(np.clip(np.diag(cv.theta_cov_at(tau)), 0.0, None)))
    qfit = qr_fit(y, QrFitConfig(tau, compute_cov=False))
    truth = preset_setting(setting, dist, d).at(tau)
    return {
        "estimate": fit.theta_at().as_array(),
        "phi": fit.phi_hat.as_array(),
        "se": np.array(ses),
        "qr_estimate": qfit.theta_hat.as_array(),
        "cqr_forecast": float(cond_quantile_path(fit.theta_at(), y.values)[-1]),
        "qr_forecast": float(cond_quantile_path(qfit.theta_hat, y.values)[-1]),
        "true_forecast": float(cond_quantile_path(truth, y.values)[-1]),
    }


def cvm_task(setting, dist, n, seed, d=0.0, block_factor=1.0, statistic="cvm"):
    y = simulate_setting(setting, dist, n, seed, d)
    res = cvm_test(y, CvmConfig(block_factor=block_factor, statistic=statistic))
    return {"statistic": res.statistic_value, "critical": res.critical_value, "reject": res.reject, "p": res.p_value}


# --------------------------------------------------------------------------
# summaries
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SummaryRow:
    parameter: str
    truth: float
    bias: float
    esd: float
    asd: float


def summarize(estimates, ses, truth, names=PARAM_NAMES):
    """Bias, empirical SD and mean asymptotic SD per parameter."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    se = np.atleast_2d(np.asarray(ses, dtype=float))
    truth = np.asarray(truth, dtype=float)
    if est.shape[0] < 2:
        raise DomainError("need at least two successful replications")
    bias = est.mean(axis=0) - truth
    esd = est.std(axis=0, ddof=1)
    asd = np.nanmean(se, axis=0)
    return [SummaryRow(nm, float(t), float(b), float(e), float(a)) for nm, t, b, e, a in zip(names, truth, bias, esd, asd)]


def run_qr_study(setting, dist, n, tau, reps, seed=0, d=0.0, workers=None):
    """Table of Bias/ESD/ASD for the QR estimator and the replication records."""
    task = partial(_qr_task_seed, setting, dist, n, tau, d)
    reps_out = replicate(task, reps, seed, workers)
    good = [r.result for r in reps_out if r.ok]
    truth = preset_setting(setting, dist, d).at(tau).as_array()
    rows = summarize([g["estimate"] for g in good], [g["se"] for g in good], truth)
    return rows, reps_out


def run_cqr_study(setting, dist, n, tau, reps, seed=0, d=0.0, h=0.1, K=19, multipliers=(1.0,), workers=None):
    """Bias/ESD table for ``theta(tau)`` from CQR; ASD uses the first multiplier."""
    task = partial(cqr_task_seed, setting, dist, n, tau, h, K, tuple(multipliers), d)
    reps_out = replicate(task, reps, seed, workers)
    good = [r.result for r in reps_out if r.ok]
    truth = preset_setting(setting, dist, d).at(tau).as_array()
    rows = summarize([g["estimate"] for g in good], [g["se"][0] for g in good], truth)
    return rows, reps_out


def run_cvm_study(setting, dist, n, reps, seed=0, d=0.0, block_factor=1.0, workers=None):
    task = partial(_cvm_task_seed, setting, dist, n, d, block_factor)
    reps_out = replicate(task, reps, seed, workers)
    good = [r.result for r in reps_out if r.ok]
    if not good:
        raise NumericalError("every replication failed")
    return float(np.mean([g["reject"] for g in good])), reps_out


def _qr_task_seed(setting, dist, n, tau, d, seed):
    return qr_task(setting, dist, n, tau, seed, d)


def _cvm_task_seed(setting, dist, n, d, block_factor, seed):
    return cvm_task(setting, dist, n, seed, d, block_factor)


def cqr_task_seed(setting, dist, n, tau, h, K, multipliers, d, seed):
    return cqr_task(setting, dist, n, tau, seed, d=d, h=h, K=K, multipliers=multipliers)
