"""Synthetic irradiance data drawn from the models themselves.

Used in place of measured data for tests, the CLI demo and the bundled
sample file. NWP is the clear-sky envelope times a slowly varying cloudiness
factor; observations are simulated model states plus Gaussian noise.
"""

from __future__ import annotations

import math
from collections.abc import Mapping

import numpy as np
import pandas as pd
from scipy.special import expit

from .data import DEFAULT_SITE, IrradianceSeries, SiteGeometry, extraterrestrial_irradiance, interval_midpoints
from .density import Exogenous, simulate_paths
from .exceptions import DomainError
from .models import ParamVector, _get, get_model

DEFAULT_START = "2009-01-01T01:00Z"
SIM_STEP = 0.05
HOURS_PER_YEAR = 8760

# Ground truth for tests and examples. For the logistic models sigma_x is kept
# moderate: around 0.9 the filter's Gaussian approximation biases theta upward.
TRUE_PARAMS = {
    1: dict(theta=0.5, mu=1.0, sigma_x=30.0, sigma_eps=10.0),
    2: dict(theta=0.6, mu=0.85, beta=0.004, sigma_x=0.1, sigma_eps=10.0),
    3: dict(theta=0.6, mu=0.85, beta=0.004, sigma_x=0.3, sigma_eps=10.0),
    4: dict(theta=0.6, mu=0.85, beta=0.004, sigma_x=0.4, sigma_eps=10.0),
    5: dict(theta=0.6, mu=0.75, beta=0.004, gamma=0.8, sigma_x=0.4, sigma_eps=10.0),
    6: dict(theta_A=0.3, mu_A=math.log(0.6), sigma_A=0.3, mu=0.75, beta=0.004, gamma=0.8,
            sigma_x=0.4, sigma_eps=10.0),
    7: dict(theta_A=0.3, mu_A=math.log(0.6), sigma_A=0.3, mu=0.75, beta=0.004, gamma=0.8,
            sigma_x=0.4, sigma_eps=10.0, omega1=0.1, omega2=0.5),
}


def true_params(model) -> ParamVector:
    spec = get_model(model)
    return ParamVector({k: TRUE_PARAMS[spec.model_id][k] for k in spec.param_names})


def hourly_index(n_hours: int, start=DEFAULT_START) -> pd.DatetimeIndex:
    ts = pd.Timestamp(start)
    ts = ts.tz_localize("UTC") if ts.tz is None else ts.tz_convert("UTC")
    return pd.date_range(ts, periods=n_hours, freq="h")


def years_to_hours(years: int, start=DEFAULT_START) -> int:
    """Calendar hours in ``years`` years from ``start`` (leap days included)."""
    t0 = pd.Timestamp(start)
    return int((t0 + pd.DateOffset(years=years) - t0) / pd.Timedelta(hours=1))


def synthetic_nwp(max_irradiance: np.ndarray, rng: np.random.Generator, persistence: float = 0.9,
                  spread: float = 1.5) -> np.ndarray:
    """Clear-sky envelope scaled by an AR(1)-driven cloudiness factor in (0.05, 0.9)."""
    n = len(max_irradiance)
    shocks = rng.standard_normal(n) * spread * math.sqrt(1 - persistence ** 2)
    u = np.empty(n)
    u[0] = rng.standard_normal() * spread
    for k in range(1, n):
        u[k] = persistence * u[k - 1] + shocks[k]
    return (0.05 + 0.85 * expit(u)) * np.asarray(max_irradiance, dtype=float)


def _initial_state(spec, p: Mapping, nwp0: float, mx0: float) -> np.ndarray:
    if spec.model_id == 1:
        x = _get(p, "mu") * nwp0
    elif spec.diffusion_kind == "additive":
        x = 0.5 * _get(p, "mu")
    else:
        x = 0.5
    x0 = [x]
    if spec.stochastic_rate:
        x0.append(_get(p, "mu_A"))
    return np.array(x0)


def simulate_series(model, p: Mapping | None = None, n_hours: int = HOURS_PER_YEAR, seed: int = 0,
                    start=DEFAULT_START, site: SiteGeometry = DEFAULT_SITE, nwp=None,
                    step: float = SIM_STEP, x0=None) -> IrradianceSeries:
    """Simulate ``n_hours`` hourly observations from a model.

    ``nwp`` overrides the generated forecast input. Observations may be
    negative because of the additive noise; they are kept as drawn.
    """
    spec = get_model(model)
    if n_hours < 2:
        raise DomainError("n_hours must be at least 2")
    p = true_params(spec) if p is None else ParamVector({k: _get(p, k) for k in spec.param_names})
    nwp_ss, path_ss, obs_ss = np.random.SeedSequence(seed).spawn(3)
    ts = hourly_index(n_hours, start)
    mx = extraterrestrial_irradiance(interval_midpoints(ts), site)
    if nwp is None:
        nwp = synthetic_nwp(mx, np.random.default_rng(nwp_ss))
    else:
        nwp = np.broadcast_to(np.asarray(nwp, dtype=float), (n_hours,)).copy()
    series = IrradianceSeries(ts, np.zeros(n_hours), nwp, mx, np.zeros(n_hours, bool), site)
    exog = Exogenous.from_series(series)
    if x0 is None:
        x0 = _initial_state(spec, p, nwp[0], mx[0])
    path_seed = int(path_ss.generate_state(1)[0])
    ens = simulate_paths(spec, p, x0, 0.0, float(n_hours - 1), 1, step, path_seed, exog, record="hourly",
                         block_size=1)
    x = ens.values[0, :, 0]
    scale = np.ones(n_hours) if spec.model_id == 1 else _get(p, "gamma") * mx
    noise = np.random.default_rng(obs_ss).standard_normal(n_hours) * _get(p, "sigma_eps")
    y = scale * x + noise
    return IrradianceSeries(ts, y, nwp, mx, np.zeros(n_hours, bool), site)


def simulate_states(model, p: Mapping | None = None, n_hours: int = HOURS_PER_YEAR, seed: int = 0,
                    **kw) -> tuple[IrradianceSeries, np.ndarray]:
    """As :func:`simulate_series` but also returns the noise-free observation ``scale * X``."""
    spec = get_model(model)
    p = true_params(spec) if p is None else p
    series = simulate_series(spec, p, n_hours, seed, **kw)
    return series, series.irradiance - _noise(seed, n_hours, _get(p, "sigma_eps"))


def _noise(seed: int, n_hours: int, sigma_eps: float) -> np.ndarray:
    _, _, obs_ss = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(obs_ss).standard_normal(n_hours) * sigma_eps
