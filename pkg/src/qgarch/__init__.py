"""Quantile GARCH(1,1): simulation, self-weighted quantile regression,
composite quantile regression, constancy testing and VaR backtesting."""

from .backtest import BacktestReport, ForecastRun, cc_test, dq_test, ecr_pe, fhs_fit, rolling_forecast
from .core import (
    CoefficientFunctions,
    DomainError,
    NumericalError,
    QGarchParams,
    ReturnSeries,
    SelfWeightConfig,
    TukeyGarchParams,
    check_loss,
    compute_self_weights,
    cond_quantile,
    cond_quantile_grad,
    stationarity_check,
    tukey_quantile,
)
from .cqr import CqrConfig, CqrFit, cqr_asymptotic_cov, cqr_fit, g_transform, select_bandwidth_h
from .inference import CvmConfig, CvmResult, cvm_statistic, cvm_test, subsample_test
from .io import ingest
from .qr import Box, QrFitConfig, QuantileFit, multi_tau_fit, qr_asymptotic_cov, qr_fit, rearrange
from .simulate import SimulationSpec, preset_setting, simulate_qgarch

__version__ = "0.1.0"

__all__ = [
    "BacktestReport",
    "ForecastRun",
    "cc_test",
    "dq_test",
    "ecr_pe",
    "fhs_fit",
    "rolling_forecast",
    "CoefficientFunctions",
    "DomainError",
    "NumericalError",
    "QGarchParams",
    "ReturnSeries",
    "SelfWeightConfig",
    "TukeyGarchParams",
    "check_loss",
    "compute_self_weights",
    "cond_quantile",
    "cond_quantile_grad",
    "stationarity_check",
    "tukey_quantile",
    "CqrConfig",
    "CqrFit",
    "cqr_asymptotic_cov",
    "cqr_fit",
    "g_transform",
    "select_bandwidth_h",
    "CvmConfig",
    "CvmResult",
    "cvm_statistic",
    "cvm_test",
    "subsample_test",
    "ingest",
    "Box",
    "QrFitConfig",
    "QuantileFit",
    "multi_tau_fit",
    "qr_asymptotic_cov",
    "qr_fit",
    "rearrange",
    "SimulationSpec",
    "preset_setting",
    "simulate_qgarch",
]
