"""Probabilistic solar irradiance forecasting with stochastic differential equations."""

from .benchmarks import (
    ArxParams, CalibrationTable, ClimatologyTable, arx_loglik, calibration_table, climatology_loglik,
    fit_arx, fit_arx_glm, fit_climatology, residual_acf,
)
from .data import IrradianceSeries, SiteGeometry, load_csv, sample_path, split_train_test, write_csv
from .density import (
    DensityGrid, Exogenous, PathEnsemble, PredictiveDensity, fokker_planck_solve, forecast, quantiles,
    rolling_forecasts, simulate_paths, solve_fokker_planck,
)
from .estimators import ARXForecaster, ClimatologyForecaster, SDEForecaster, check_series
from .exceptions import (
    ConfigurationError, DataError, DomainError, NumericalError, ParseError, SolarSDEError,
)
from .filtering import FitOptions, FitReport, filter_pass, fit, information_criteria, neg_log_likelihood
from .lamperti import TransformedModel
from .models import MODELS, ModelSpec, ParamVector, default_params, get_model
from .synthetic import simulate_series, true_params

__version__ = "0.1.0"
