"""Command-line interface.

Exit status is 0 on success, 1 on usage or domain errors and 2 on
numerical failures.  Errors go to standard error as ``error[CODE]: message``.
"""

from __future__ import annotations

import argparse
import sys
import warnings

import numpy as np

from . import io
from .backtest import cc_test, dq_test, ecr_pe, rolling_forecast
from .core import DomainError, NumericalError, SelfWeightConfig
from .cqr import CqrConfig, cqr_fit, select_bandwidth_h
from .inference import CvmConfig, cvm_test, default_tau_grid
from .montecarlo import run_cqr_study, run_cvm_study, run_qr_study
from .qr import QrFitConfig, qr_fit
from .simulate import SimulationSpec, preset_setting, simulate_qgarch

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _weights(args):
    return "ones" if args.weights == "ones" else None


def _sw(args):
    return SelfWeightConfig(c_quantile=args.c_quantile, c_from_abs=args.c_from_abs)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_simulate(args):
    coef = preset_setting(args.setting, args.dist, args.d)
    y = simulate_qgarch(SimulationSpec(coef, args.n, burn_in=args.burn_in, seed=args.seed))
    io.write_series(args.out, y)


def _qr_cfg(args, tau):
    return QrFitConfig(tau, _weights(args), bandwidth=args.bandwidth, self_weights=_sw(args))


def cmd_fit(args):
    y = io.ingest(args.input, args.kind)
    out = []
    for tau in args.tau:
        fit = qr_fit(y, _qr_cfg(args, tau))
        th = fit.theta_hat
        out.append(
            {
                "tau": tau,
                "theta": {"omega": th.omega, "alpha1": th.alpha1, "beta1": th.beta1},
                "std_errors": fit.std_errors,
                "cov": fit.cov,
                "bandwidth": fit.bandwidth_used,
                "objective": fit.objective_value,
                "n": fit.n,
                "weights_id": fit.weights_id,
            }
        )
    io.write_json(args.out, {"method": "qr", "fits": out})


def _cqr_cfg(args, tau, h):
    return CqrConfig(
        tau, h=h, K=args.K, weights=_weights(args), self_weights=_sw(args),
        bandwidth_multiplier=args.bandwidth_multiplier, simplified_cov=args.simplified_cov,
    )


def cmd_cqr_fit(args):
    y = io.ingest(args.input, args.kind)
    fit = cqr_fit(y, _cqr_cfg(args, args.tau, args.h))
    th = fit.theta_at()
    p = fit.phi_hat
    io.write_json(
        args.out,
        {
            "method": "cqr",
            "tau": args.tau,
            "h": args.h,
            "K": args.K,
            "phi": {"a0": p.a0, "a1": p.a1, "b1": p.b1, "lam": p.lam},
            "cov_phi": fit.cov,
            "theta": {"omega": th.omega, "alpha1": th.alpha1, "beta1": th.beta1},
            "theta_std_errors": fit.theta_std_errors(),
            "hac_bandwidth": fit.hac_bandwidth,
            "objective": fit.objective_value,
            "n": fit.n,
        },
    )


def cmd_select_h(args):
    y = io.ingest(args.input, args.kind)
    n0, n1 = args.n0, args.n1
    if n0 + n1 > len(y):
        raise DomainError(f"n0 + n1 = {n0 + n1} exceeds the sample size {len(y)}")
    cfg = _cqr_cfg(args, args.tau, 0.1)
    h, losses = select_bandwidth_h(y.slice(0, n0), y.slice(n0, n0 + n1), args.tau, args.h_grid, cfg)
    io.write_json(args.out, {"tau": args.tau, "h_opt": h, "h_grid": args.h_grid, "validation_loss": losses})


def cmd_cvm_test(args):
    y = io.ingest(args.input, args.kind)
    cfg = CvmConfig(
        default_tau_grid(args.tau_lo, args.tau_hi, args.delta),
        block_factor=args.block_factor, alpha=args.alpha, statistic=args.statistic,
    )
    res = cvm_test(y, cfg, _qr_cfg(args, args.tau_lo))
    io.write_json(
        args.out,
        {
            "statistic": res.statistic,
            "S_n": res.statistic_value,
            "c_alpha": res.critical_value,
            "p": res.p_value,
            "reject": res.reject,
            "block_size": res.block_size,
            "tau_grid": cfg.tau_grid,
            "curve": res.curve,
        },
    )


def cmd_forecast(args):
    y = io.ingest(args.input, args.kind)
    run = rolling_forecast(
        y, args.n0, args.method, args.tau, n1=args.n1,
        qr_cfg=_qr_cfg(args, args.tau) if args.method == "qr" else None,
        cqr_cfg=_cqr_cfg(args, args.tau, 0.1) if args.method == "cqr" else None,
        h_grid=args.h_grid,
    )
    io.write_forecasts(args.out, run)


def cmd_backtest(args):
    _, _, q, hits = io.read_forecasts(args.input)
    hits = hits[np.isfinite(q)]
    ecr, pe = ecr_pe(hits, args.tau)
    cc = cc_test(hits, args.tau)
    dq = dq_test(hits, args.tau, args.lags)
    io.write_json(
        args.out,
        {"tau": args.tau, "n_test": int(hits.size), "ecr": ecr, "pe": pe,
         "cc_pvalue": cc.p_value, "cc": cc, "dq_pvalue": dq.p_value, "dq": dq},
    )


def cmd_montecarlo(args):
    if args.method == "cvm":
        rate, reps = run_cvm_study(args.setting, args.dist, args.n, args.reps, args.seed, args.d, args.block_factor, args.workers)
        failed = sum(not r.ok for r in reps)
        io.write_table(args.out, ["setting", "dist", "d", "n", "reps", "failed", "rejection_rate"],
                       [[args.setting, args.dist, float(args.d), args.n, args.reps, failed, rate]])
        return
    if args.method == "qr":
        rows, reps = run_qr_study(args.setting, args.dist, args.n, args.tau, args.reps, args.seed, args.d, args.workers)
    else:
        rows, reps = run_cqr_study(args.setting, args.dist, args.n, args.tau, args.reps, args.seed, args.d, workers=args.workers)
    failed = sum(not r.ok for r in reps)
    io.write_table(
        args.out,
        ["parameter", "truth", "Bias", "ESD", "ASD", "reps", "failed"],
        [[r.parameter, r.truth, r.bias, r.esd, r.asd, args.reps, failed] for r in rows],
    )


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _add_input(p):
    p.add_argument("--input", "-i", required=True, help="CSV with header 'date,value'")
    p.add_argument("--kind", choices=("returns", "prices"), default="returns")


def _add_weights(p):
    p.add_argument("--weights", choices=("self", "ones"), default="self")
    p.add_argument("--c-quantile", type=float, default=0.95, help="level of the self-weight threshold")
    p.add_argument("--c-from-abs", action="store_true", help="take the threshold from |y|")
    p.add_argument("--bandwidth", choices=("hs", "bofinger"), default="hs")


def _add_cqr(p):
    p.add_argument("--K", type=int, default=19)
    p.add_argument("--bandwidth-multiplier", type=float, default=1.0, help="scales the HAC bandwidth")
    p.add_argument("--simplified-cov", action="store_true")


def build_parser():
    parser = _Parser(prog="qgarch", description="Quantile GARCH(1,1) estimation, testing and forecasting.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a preset design")
    p.add_argument("--setting", choices=("5.2", "5.3", "5.4"), required=True)
    p.add_argument("--dist", default="normal")
    p.add_argument("--d", type=float, default=0.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="self-weighted QR at one or more levels")
    _add_input(p)
    _add_weights(p)
    p.add_argument("--tau", type=_float_list, required=True, help="level(s), comma separated")
    p.add_argument("--out", "-o", default="fit.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cqr-fit", help="composite QR at a target level")
    _add_input(p)
    _add_weights(p)
    _add_cqr(p)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--out", "-o", default="fit.json")
    p.set_defaults(func=cmd_cqr_fit)

    p = sub.add_parser("select-h", help="choose the CQR bandwidth on a validation block")
    _add_input(p)
    _add_weights(p)
    _add_cqr(p)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--n0", type=int, required=True)
    p.add_argument("--n1", type=int, required=True)
    p.add_argument("--h-grid", type=_float_list, default=[0.01 * k for k in range(1, 11)])
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_select_h)

    p = sub.add_parser("cvm-test", help="test constancy of beta1 over a level interval")
    _add_input(p)
    _add_weights(p)
    p.add_argument("--tau-lo", type=float, default=0.7)
    p.add_argument("--tau-hi", type=float, default=0.995)
    p.add_argument("--delta", type=float, default=0.005)
    p.add_argument("--block-factor", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--statistic", choices=("cvm", "ks"), default="cvm")
    p.add_argument("--out", "-o", default="cvm.json")
    p.set_defaults(func=cmd_cvm_test)

    p = sub.add_parser("forecast", help="rolling one-step-ahead quantile forecasts")
    _add_input(p)
    _add_weights(p)
    _add_cqr(p)
    p.add_argument("--method", choices=("qr", "cqr", "fhs"), default="qr")
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--n0", type=int, required=True)
    p.add_argument("--n1", type=int, default=None)
    p.add_argument("--h-grid", type=_float_list, default=None)
    p.add_argument("--out", "-o", default="forecasts.csv")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("backtest", help="ECR, PE, CC and DQ of a forecasts file")
    p.add_argument("--input", "-i", required=True, help="forecasts CSV (date,y,q_hat,hit)")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--lags", type=int, default=4)
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("montecarlo", help="replicate a simulation design")
    p.add_argument("--method", choices=("qr", "cqr", "cvm"), default="qr")
    p.add_argument("--setting", choices=("5.2", "5.3", "5.4"), required=True)
    p.add_argument("--dist", default="normal")
    p.add_argument("--d", type=float, default=0.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block-factor", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", "-o", default="table.csv")
    p.set_defaults(func=cmd_montecarlo)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            args.func(args)
    except UsageError as exc:
        print(f"error[E_USAGE]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error[E_DOMAIN]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error[E_NUMERIC]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
