"""D-vine copula quantile regression.

Kernel-smoothed margins map the data to the copula scale, a regression
D-vine with the response at its head is grown by forward covariate
selection, and conditional quantiles come from nested inverse h-functions.
"""
from .bicop import (
    BiCop,
    CopulaDomainError,
    CopulaNumericError,
    Criterion,
    Family,
    fit_bicop_mle,
    param_to_tau,
    sample_bicop,
    select_bicop,
    tau_to_param,
)
from .dvine import (
    DVineRegression,
    QuantRegModel,
    cll,
    cond_cdf,
    cond_quantile,
    fit_dvine_regression,
    fit_quantreg,
    predict_quantile,
    stress_predict,
)
from .io import ModelFormatError, dumps, load_model, loads, save_model
from .margins import KernelMargin, PseudoData, fit_kernel_cdf, pit_transform

__version__ = "0.1.0"

__all__ = [
    "BiCop", "CopulaDomainError", "CopulaNumericError", "Criterion", "Family",
    "fit_bicop_mle", "param_to_tau", "sample_bicop", "select_bicop", "tau_to_param",
    "DVineRegression", "QuantRegModel", "cll", "cond_cdf", "cond_quantile",
    "fit_dvine_regression", "fit_quantreg", "predict_quantile", "stress_predict",
    "ModelFormatError", "dumps", "load_model", "loads", "save_model",
    "KernelMargin", "PseudoData", "fit_kernel_cdf", "pit_transform",
]
