"""Reference forecasters and forecast evaluation.

ARX and ARX with an irradiance-dependent variance, three climatologies,
log-likelihood on held-out data, quantile calibration and residual ACF.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import IrradianceSeries
from .density import PredictiveDensity, quantiles
from .exceptions import DataError, DomainError
from .filtering import filter_pass

MIN_PAIRS = 100
GLM_EXPONENT = 1.5  # variance grows as Max^(3/2), i.e. sd as Max^(3/4)
BIN_WIDTH = 20.0
CLIMATOLOGY_MODES = ("unconditional", "by_hour", "by_hour_month")
DEFAULT_PROBS = tuple(round(0.1 * i, 1) for i in range(1, 10))
_LOG2PI = math.log(2.0 * math.pi)


# --------------------------------------------------------------------------
# ARX
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ArxParams:
    """``Y[k+1] = theta1 Y[k] + theta2 NWP[k+1] + noise``.

    Noise variance is ``sigma^2`` for the plain model and
    ``sigma^2 * max(Max^1.5, night_floor)`` for the GLM variant.
    """

    theta1: float
    theta2: float
    sigma: float
    variance_exponent: float = 0.0
    night_floor: float = 1.0
    n_pairs: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")

    @property
    def glm(self) -> bool:
        return self.variance_exponent > 0

    def variance_scale(self, max_irradiance) -> np.ndarray:
        mx = np.asarray(max_irradiance, dtype=float)
        if not self.glm:
            return np.ones_like(mx)
        return np.maximum(mx ** self.variance_exponent, self.night_floor)

    def predict(self, prev, nwp_next) -> np.ndarray:
        return self.theta1 * np.asarray(prev, float) + self.theta2 * np.asarray(nwp_next, float)

    def as_dict(self) -> dict:
        return {"theta1": self.theta1, "theta2": self.theta2, "sigma": self.sigma,
                "variance_exponent": self.variance_exponent, "night_floor": self.night_floor}


def _pairs(series: IrradianceSeries) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(index of target, previous y, target y, nwp at target, Max at target) for usable pairs."""
    y = series.irradiance
    ok = ~series.missing[:-1] & ~series.missing[1:]
    idx = np.nonzero(ok)[0] + 1
    return idx, y[idx - 1], y[idx], series.nwp[idx], series.max_irradiance[idx]


def _check_pairs(n: int):
    if n < MIN_PAIRS:
        raise DataError(f"need at least {MIN_PAIRS} consecutive observed pairs, got {n}")


def fit_arx(series: IrradianceSeries) -> ArxParams:
    """Ordinary least squares; sigma from the mean squared residual."""
    _, prev, target, nwp, _ = _pairs(series)
    _check_pairs(prev.size)
    design = np.column_stack([prev, nwp])
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    return ArxParams(float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid ** 2))), n_pairs=prev.size)


def fit_arx_glm(series: IrradianceSeries, night_floor: float = 1.0) -> ArxParams:
    """Weighted least squares with weights ``1 / max(Max^1.5, night_floor)``."""
    if not night_floor > 0:
        raise DomainError("night_floor must be positive")
    _, prev, target, nwp, mx = _pairs(series)
    _check_pairs(prev.size)
    scale = np.maximum(mx ** GLM_EXPONENT, night_floor)
    w = 1.0 / np.sqrt(scale)
    design = np.column_stack([prev, nwp])
    coef, *_ = np.linalg.lstsq(design * w[:, None], target * w, rcond=None)
    resid = target - design @ coef
    sigma = float(np.sqrt(np.mean(resid ** 2 / scale)))
    return ArxParams(float(coef[0]), float(coef[1]), sigma, GLM_EXPONENT, night_floor, prev.size)


def arx_loglik_terms(params: ArxParams, series: IrradianceSeries) -> tuple[np.ndarray, np.ndarray]:
    """(target indices, Gaussian log-density of each one-step prediction)."""
    idx, prev, target, nwp, mx = _pairs(series)
    var = params.sigma ** 2 * params.variance_scale(mx)
    resid = target - params.predict(prev, nwp)
    return idx, -0.5 * (_LOG2PI + np.log(var) + resid ** 2 / var)


def arx_loglik(params: ArxParams, series: IrradianceSeries) -> float:
    return float(np.sum(arx_loglik_terms(params, series)[1]))


# --------------------------------------------------------------------------
# Climatology
# --------------------------------------------------------------------------

@dataclass
class ClimatologyTable:
    """Histogram climatology on a shared bin grid, one histogram per bucket."""

    mode: str
    bin_width: float
    lower: float
    n_bins: int
    counts: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)

    def bucket_keys(self, series: IrradianceSeries) -> list:
        return _bucket_keys(self.mode, series)

    def bin_index(self, y) -> np.ndarray:
        idx = np.floor((np.asarray(y, dtype=float) - self.lower) / self.bin_width).astype(int)
        return np.clip(idx, 0, self.n_bins - 1)

    def density(self, key, y) -> np.ndarray:
        """Add-one smoothed histogram density of bucket ``key`` at ``y``."""
        if key not in self.counts:
            raise DomainError(f"climatology has no bucket {key!r}")
        counts = self.counts[key]
        total = counts.sum() + self.n_bins
        return (counts[self.bin_index(y)] + 1.0) / (total * self.bin_width)


def _bucket_keys(mode: str, series: IrradianceSeries) -> list:
    ts = series.timestamps
    if mode == "unconditional":
        return [0] * len(ts)
    if mode == "by_hour":
        return list(ts.hour)
    if mode == "by_hour_month":
        return list(zip(ts.month, ts.hour))
    raise DomainError(f"unknown climatology mode {mode!r}; expected one of {CLIMATOLOGY_MODES}")


def fit_climatology(series: IrradianceSeries, mode: str = "unconditional",
                    bin_width: float = BIN_WIDTH) -> ClimatologyTable:
    if mode not in CLIMATOLOGY_MODES:
        raise DomainError(f"unknown climatology mode {mode!r}; expected one of {CLIMATOLOGY_MODES}")
    if not bin_width > 0:
        raise DomainError("bin_width must be positive")
    obs = ~series.missing
    if not obs.any():
        raise DataError("no observations to build a climatology from")
    if mode == "by_hour_month":
        span = series.timestamps[-1] - series.timestamps[0]
        if span < np.timedelta64(365 * 24 - 1, "h"):
            raise DataError("by_hour_month needs at least one full year of training data")
    y = series.irradiance[obs]
    keys = [k for k, o in zip(_bucket_keys(mode, series), obs) if o]
    lower = math.floor(y.min() / bin_width) * bin_width
    n_bins = int(math.floor((y.max() - lower) / bin_width)) + 1
    table = ClimatologyTable(mode, bin_width, lower, n_bins)
    grouped: dict = {}
    for k, v in zip(keys, y):
        grouped.setdefault(k, []).append(v)
    expected = {"unconditional": 1, "by_hour": 24, "by_hour_month": 24 * 12}[mode]
    if len(grouped) < expected:
        raise DataError(f"{mode} climatology: only {len(grouped)} of {expected} buckets have data")
    for k, vals in grouped.items():
        vals = np.sort(np.asarray(vals))
        table.samples[k] = vals
        table.counts[k] = np.bincount(table.bin_index(vals), minlength=n_bins).astype(float)
    return table


def climatology_loglik_terms(table: ClimatologyTable, series: IrradianceSeries) -> tuple[np.ndarray, np.ndarray]:
    obs = np.nonzero(~series.missing)[0]
    keys = table.bucket_keys(series)
    out = np.empty(obs.size)
    for j, i in enumerate(obs):
        out[j] = table.density(keys[i], series.irradiance[i])[()]
    return obs, np.log(out)


def climatology_loglik(table: ClimatologyTable, series: IrradianceSeries) -> float:
    return float(np.sum(climatology_loglik_terms(table, series)[1]))


# --------------------------------------------------------------------------
# SDE models on held-out data
# --------------------------------------------------------------------------

def sde_loglik_split(model, p: Mapping, series: IrradianceSeries, n_train: int) -> tuple[float, float]:
    """(train, test) log-likelihood from one filter pass over the whole series.

    The test part is conditioned on the training data, as in a forecast
    made continuously through the boundary.
    """
    if not 0 < n_train <= len(series):
        raise DomainError("n_train must lie in 1..len(series)")
    terms = filter_pass(model, p, series).log_lik_terms
    return float(np.nansum(terms[:n_train])), float(np.nansum(terms[n_train:]))


def split_loglik(terms_idx: np.ndarray, terms: np.ndarray, n_train: int) -> tuple[float, float]:
    train = terms_idx < n_train
    return float(np.sum(terms[train])), float(np.sum(terms[~train]))


def sde_loglik_terms(model, p: Mapping, series: IrradianceSeries) -> tuple[np.ndarray, np.ndarray]:
    """(observation indices, one-step log-likelihood terms) from one filter pass."""
    terms = filter_pass(model, p, series).log_lik_terms
    idx = np.nonzero(np.isfinite(terms))[0]
    return idx, terms[idx]


def common_loglik(scored: Mapping[str, tuple[np.ndarray, np.ndarray]],
                  n_train: int) -> tuple[dict[str, tuple[float, float]], np.ndarray]:
    """Split log-likelihoods restricted to observations every model scores.

    ARX needs the previous observation as well, so with missing values it
    scores fewer points than the filter; totals over different point sets
    are not comparable. Returns ``({name: (train, test)}, common indices)``.
    """
    if not scored:
        return {}, np.empty(0, dtype=int)
    common = None
    for idx, _ in scored.values():
        common = idx if common is None else np.intersect1d(common, idx)
    out = {}
    for name, (idx, terms) in scored.items():
        keep = np.isin(idx, common)
        out[name] = split_loglik(idx[keep], terms[keep], n_train)
    return out, common


# --------------------------------------------------------------------------
# Calibration
# --------------------------------------------------------------------------

@dataclass
class CalibrationTable:
    probs: np.ndarray
    frequencies: np.ndarray
    n: int
    label: str = ""

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.probs.tolist(), self.frequencies.tolist()))

    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.frequencies - self.probs)))


def calibration_table(forecasts: Sequence[PredictiveDensity], observations, probs=DEFAULT_PROBS,
                      exclude_night: bool = True, label: str = "") -> CalibrationTable:
    """Frequency with which observations fall at or below each predictive quantile.

    Pairs with a missing observation are skipped, as are night hours (zero
    observation scale) unless ``exclude_night`` is False.
    """
    obs = np.asarray(observations, dtype=float)
    if len(forecasts) != obs.size:
        raise DomainError(f"{len(forecasts)} forecasts but {obs.size} observations")
    probs = np.asarray(probs, dtype=float)
    hits = np.zeros(probs.size)
    n = 0
    for f, y in zip(forecasts, obs):
        if not np.isfinite(y) or (exclude_night and f.scale == 0.0):
            continue
        hits += y <= quantiles(f, probs)
        n += 1
    if n == 0:
        raise DomainError("no aligned forecast/observation pairs to evaluate")
    return CalibrationTable(probs, hits / n, n, label)


def write_calibration_csv(tables: Mapping[str, CalibrationTable], path) -> None:
    """Rows per nominal quantile, one column per labelled table."""
    tables = dict(tables)
    if not tables:
        raise DomainError("no calibration tables to write")
    probs = next(iter(tables.values())).probs
    for name, t in tables.items():
        if not np.allclose(t.probs, probs):
            raise DomainError(f"table {name!r} uses different quantile levels")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantile", *tables])
        for i, q in enumerate(probs):
            w.writerow([f"{q:.2f}", *(f"{t.frequencies[i]:.4f}" for t in tables.values())])


# --------------------------------------------------------------------------
# Residual diagnostics
# --------------------------------------------------------------------------

@dataclass
class AcfResult:
    acf: np.ndarray  # lags 0..max_lag
    band: float
    n: int

    def fraction_inside(self, first_lag: int = 1) -> float:
        return float(np.mean(np.abs(self.acf[first_lag:]) <= self.band))


def residual_acf(residuals, max_lag: int = 40) -> AcfResult:
    """Biased sample ACF of the finite residuals with +/- 2/sqrt(N) bands."""
    r = np.asarray(residuals, dtype=float)
    r = r[np.isfinite(r)]
    n = r.size
    if max_lag < 1 or n <= max_lag:
        raise DomainError(f"need more than max_lag={max_lag} finite residuals, got {n}")
    d = r - r.mean()
    c0 = float(np.dot(d, d)) / n
    if c0 == 0:
        raise DomainError("residuals are constant")
    acf = np.array([1.0] + [float(np.dot(d[:-k], d[k:])) / n / c0 for k in range(1, max_lag + 1)])
    return AcfResult(acf, 2.0 / math.sqrt(n), n)
