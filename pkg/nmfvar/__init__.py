"""NMF-VAR: non-negative matrix tri-factorization with lagged covariates.

Fits Y ≈ XΘA where A stacks lagged observations, which turns the
factorization into a low-rank, non-negative VAR(D) with interpretable bases.
"""

from nmfvar.artifacts import load_model, read_frame_csv
from nmfvar.clustering_diagnostics import (
    hard_assign,
    lagged_correlation,
    r_squared,
    r_squared_by_variable,
    time_membership,
    variable_membership,
)
from nmfvar.design_matrices import build_identity_design, build_kernel_design, build_lag_design
from nmfvar.errors import ConfigurationError, InputError, NmfVarError, NumericError
from nmfvar.model_selection import compare_methods, cross_validate, rank_sweep
from nmfvar.nmf_solver import FactorModel, FitOptions, fit
from nmfvar.preprocessing import PipelineSpec, TimeSeriesFrame, apply_pipeline, invert_pipeline, parse_pipeline
from nmfvar.var_analysis import companion_form, fit_ols_var, forecast, parameter_reduction, var_coefficients

__version__ = "1.0.0"
