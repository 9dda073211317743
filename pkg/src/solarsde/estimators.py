"""scikit-learn style wrappers around the models and benchmarks."""

from __future__ import annotations

from collections.abc import Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import benchmarks as B
from .data import DEFAULT_SITE, IrradianceSeries, SiteGeometry
from .density import N_GRID, PredictiveDensity, quantiles, rolling_forecasts
from .exceptions import DataError, DomainError
from .filtering import FitOptions, FitReport, filter_pass, fit
from .lamperti import TransformedModel
from .models import ParamVector, get_model

_GHI_COLUMNS = ("ghi", "ghi_wm2", "irradiance")
_NWP_COLUMNS = ("nwp", "nwp_wm2")


def check_series(X, site: SiteGeometry = DEFAULT_SITE) -> IrradianceSeries:
    """Coerce ``X`` to an :class:`IrradianceSeries`.

    Accepts a series as is, or a DataFrame indexed by UTC timestamps with an
    irradiance column (``ghi``/``ghi_wm2``) and an ``nwp`` column. A
    ``max_irradiance`` column is used when present, otherwise computed.
    """
    if isinstance(X, IrradianceSeries):
        return X
    if not isinstance(X, pd.DataFrame):
        raise DataError(f"expected IrradianceSeries or DataFrame, got {type(X).__name__}")
    ghi = next((c for c in _GHI_COLUMNS if c in X.columns), None)
    nwp = next((c for c in _NWP_COLUMNS if c in X.columns), None)
    if ghi is None or nwp is None:
        raise DataError(f"DataFrame needs an irradiance column {_GHI_COLUMNS} and an nwp column {_NWP_COLUMNS}")
    if not isinstance(X.index, pd.DatetimeIndex):
        raise DataError("DataFrame must be indexed by timestamps")
    y = X[ghi].to_numpy(dtype=float)
    if "max_irradiance" in X.columns:
        return IrradianceSeries(X.index, y, X[nwp].to_numpy(float), X["max_irradiance"].to_numpy(float),
                                ~np.isfinite(y), site)
    return IrradianceSeries.from_arrays(X.index, y, X[nwp].to_numpy(float), site)


def _check_horizon(horizon: int):
    if int(horizon) != horizon or horizon < 1:
        raise DomainError("horizon must be a positive integer")


class SDEForecaster(BaseEstimator):
    """Continuous-discrete SDE model fitted by maximum likelihood.

    ``params`` fixes the starting point for estimation (or the parameters
    themselves when ``fit`` is skipped via :meth:`from_params`).
    """

    def __init__(self, model="M7", params: Mapping | None = None, fit_options: FitOptions | None = None,
                 n_grid: int = N_GRID):
        self.model = model
        self.params = params
        self.fit_options = fit_options
        self.n_grid = n_grid

    @classmethod
    def from_params(cls, model, params: Mapping, **kw) -> SDEForecaster:
        est = cls(model=model, params=params, **kw)
        est.spec_ = get_model(model)
        est.params_ = ParamVector({k: params[k] for k in est.spec_.param_names})
        est.report_ = None
        return est

    @classmethod
    def from_report(cls, report: FitReport, **kw) -> SDEForecaster:
        est = cls.from_params(report.model_id, report.params, **kw)
        est.report_ = report
        return est

    def fit(self, X, y=None):
        series = check_series(X)
        self.spec_ = get_model(self.model)
        self.report_ = fit(self.spec_, series, self.params, self.fit_options)
        self.params_ = self.report_.params
        return self

    def score(self, X, y=None) -> float:
        """Log-likelihood of ``X`` under the fitted model."""
        check_is_fitted(self, "params_")
        return filter_pass(self.spec_, self.params_, check_series(X)).log_lik

    def transform(self, X) -> np.ndarray:
        """Filtered state in original coordinates, one row per timestamp."""
        check_is_fitted(self, "params_")
        res = filter_pass(self.spec_, self.params_, check_series(X))
        out = res.filtered_mean[:, : self.spec_.state_dim].copy()
        out[:, 0] = TransformedModel(self.spec_).psi_inv(out[:, 0], self.params_["sigma_x"])
        return out

    def residuals(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        return filter_pass(self.spec_, self.params_, check_series(X)).studentized

    def predict_density(self, X, horizon: int = 1, origins: Sequence[int] | None = None) -> list[PredictiveDensity]:
        check_is_fitted(self, "params_")
        _check_horizon(horizon)
        return rolling_forecasts(self.spec_, self.params_, check_series(X), int(horizon), origins, self.n_grid)

    def predict_quantiles(self, X, probs=(0.05, 0.5, 0.95), horizon: int = 1,
                          origins: Sequence[int] | None = None) -> np.ndarray:
        return np.array([quantiles(d, probs) for d in self.predict_density(X, horizon, origins)])

    def predict(self, X, horizon: int = 1, origins: Sequence[int] | None = None) -> np.ndarray:
        """Predictive medians ``horizon`` hours after each origin."""
        return self.predict_quantiles(X, (0.5,), horizon, origins)[:, 0]


class ARXForecaster(BaseEstimator):
    def __init__(self, glm: bool = False, night_floor: float = 1.0):
        self.glm = glm
        self.night_floor = night_floor

    def fit(self, X, y=None):
        series = check_series(X)
        self.params_ = B.fit_arx_glm(series, self.night_floor) if self.glm else B.fit_arx(series)
        return self

    def score(self, X, y=None) -> float:
        check_is_fitted(self, "params_")
        return B.arx_loglik(self.params_, check_series(X))

    def loglik_terms(self, X):
        check_is_fitted(self, "params_")
        return B.arx_loglik_terms(self.params_, check_series(X))

    def predict(self, X) -> np.ndarray:
        """One-step means; the first entry has no predecessor and is NaN."""
        check_is_fitted(self, "params_")
        series = check_series(X)
        out = np.full(len(series), np.nan)
        out[1:] = self.params_.predict(series.observed[:-1], series.nwp[1:])
        return out


class ClimatologyForecaster(BaseEstimator):
    def __init__(self, mode: str = "unconditional", bin_width: float = B.BIN_WIDTH):
        self.mode = mode
        self.bin_width = bin_width

    def fit(self, X, y=None):
        self.table_ = B.fit_climatology(check_series(X), self.mode, self.bin_width)
        return self

    def score(self, X, y=None) -> float:
        check_is_fitted(self, "table_")
        return B.climatology_loglik(self.table_, check_series(X))

    def loglik_terms(self, X):
        check_is_fitted(self, "table_")
        return B.climatology_loglik_terms(self.table_, check_series(X))
