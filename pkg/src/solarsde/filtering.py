"""Continuous-discrete extended Kalman filter and maximum-likelihood fitting.

The filter runs on the Lamperti-transformed system, where the diffusion is
state independent. Between observations the mean and covariance follow::

    dm/dt = f(m, t)
    dP/dt = A P + P A^T + G G^T,   A = df/dz

integrated with classical RK4 using at least 10 sub-steps per hour, with
shorter steps wherever the drift slope is steep (see ``_kernels.step_size``). Exogenous
inputs are held constant over each hour: the interval ending at timestamp
``k`` uses row ``k``.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from . import _kernels as K
from .data import IrradianceSeries
from .exceptions import DataError, DomainError, NumericalError
from .lamperti import (
    TransformedModel, transformed_diffusion, transformed_drift, transformed_drift_jacobian,
)
from .models import (
    ExogenousAt, ModelSpec, ParamVector, _get, constrain, default_params, get_model, unconstrain,
)

logger = logging.getLogger(__name__)

SUBSTEPS = 10  # minimum RK4 sub-steps per hour
EPS_STATE = K.EPS_STATE
INITIAL_Z_VARIANCE = 0.25


@dataclass(frozen=True)
class FilterState:
    mean: np.ndarray
    cov: np.ndarray
    time: float
    neg_log_lik: float = 0.0
    innovations: tuple = ()


def information_criteria(log_lik: float, n_params: int, n_obs: int) -> tuple[float, float]:
    """Return ``(AIC, BIC)``."""
    if n_obs < 1:
        raise DomainError("n_obs must be at least 1")
    aic = 2.0 * n_params - 2.0 * log_lik
    bic = n_params * math.log(n_obs) - 2.0 * log_lik
    return aic, bic


def _clamp_z(tm: TransformedModel, z0: float, sigma_x: float) -> float:
    if tm.kind == "additive":
        return z0
    lo = float(tm.psi(EPS_STATE, sigma_x))
    hi = float(tm.psi(1.0 - EPS_STATE, sigma_x)) if tm.kind == "logistic" else -lo
    return min(max(z0, lo), hi)


def predict(fs: FilterState, tm: TransformedModel, t_next: float, ex: ExogenousAt, p: Mapping,
            substeps_per_hour: int = SUBSTEPS) -> FilterState:
    """Propagate mean and covariance to ``t_next`` with inputs held at ``ex``."""
    if not t_next > fs.time:
        raise DomainError(f"t_next={t_next} must exceed current time {fs.time}")
    duration = t_next - fs.time
    G = transformed_diffusion(tm, p)
    GG = G @ G.T
    s = _get(p, "sigma_x")
    h_max = duration / max(substeps_per_hour, 1)

    def rhs(m, P):
        z = m.copy()
        z[0] = _clamp_z(tm, z[0], s)
        A = transformed_drift_jacobian(tm, z, None, ex, p)
        rate = 2.0 * np.abs(np.diag(A)).max()
        return transformed_drift(tm, z, None, ex, p), A @ P + P @ A.T + GG, rate

    m = np.array(fs.mean, dtype=float)
    P = np.array(fs.cov, dtype=float)
    t = 0.0
    steps = 0
    while duration - t > 1e-12 * duration:
        if steps == K.MAX_STEPS:
            raise NumericalError(f"moment ODE needs more than {K.MAX_STEPS} steps at t={fs.time + t:g}")
        k1 = rhs(m, P)
        # same step rule as the compiled kernel: shrink where the slope is steep
        h = float(K.step_size(k1[2], h_max, duration - t))
        k2 = rhs(m + 0.5 * h * k1[0], P + 0.5 * h * k1[1])
        k3 = rhs(m + 0.5 * h * k2[0], P + 0.5 * h * k2[1])
        k4 = rhs(m + h * k3[0], P + h * k3[1])
        m = m + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        P = P + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        t += h
        steps += 1
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(P))):
            raise NumericalError(f"non-finite moments at t={fs.time + t:g}")
    P = 0.5 * (P + P.T)
    return FilterState(m, P, t_next, fs.neg_log_lik, fs.innovations)


def update(fs: FilterState, y: float, tm: TransformedModel, ex: ExogenousAt, p: Mapping) -> FilterState:
    """Condition on observation ``y`` (NaN means missing: state unchanged)."""
    if y is None or not np.isfinite(y):
        return fs
    s = _get(p, "sigma_x")
    z0 = _clamp_z(tm, float(fs.mean[0]), s)
    x0 = float(tm.psi_inv(z0, s))
    scale = 1.0 if tm.base.model_id == 1 else _get(p, "gamma") * ex.max_irradiance
    C = np.zeros(tm.state_dim)
    C[0] = scale * float(tm.g(x0, s))
    S = _get(p, "sigma_eps") ** 2
    P = np.asarray(fs.cov, dtype=float)
    R = float(C @ P @ C + S)
    if not R > 0:
        raise NumericalError(f"innovation variance {R} is not positive at t={fs.time:g}")
    eps = float(y - scale * x0)
    gain = P @ C / R
    mean = np.asarray(fs.mean, dtype=float) + gain * eps
    J = np.eye(tm.state_dim) - np.outer(gain, C)
    P_new = J @ P @ J.T + S * np.outer(gain, gain)
    P_new = 0.5 * (P_new + P_new.T)
    nll = fs.neg_log_lik + 0.5 * (math.log(2 * math.pi * R) + eps * eps / R)
    return FilterState(mean, P_new, fs.time, nll, fs.innovations + ((eps, R),))


def exogenous_arrays(series: IrradianceSeries) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (
        np.ascontiguousarray(series.nwp, dtype=float),
        np.ascontiguousarray(series.max_irradiance, dtype=float),
        np.ascontiguousarray(series.hour_of_day, dtype=float),
    )


def initial_state(spec: ModelSpec, p: Mapping, series: IrradianceSeries) -> tuple[np.ndarray, np.ndarray]:
    """Initial transformed mean/covariance as 2-vectors / 2x2 matrices.

    X is obtained by inverting the observation equation at the first
    non-missing daytime observation; A starts at its stationary law.
    """
    spec = get_model(spec)
    tm = TransformedModel(spec)
    s = _get(p, "sigma_x")
    gamma = _get(p, "gamma")
    x0 = 0.5 if spec.bounded else (1.0 if spec.diffusion_kind == "linear" else 0.0)
    for y, miss, mx in zip(series.irradiance, series.missing, series.max_irradiance):
        if miss:
            continue
        scale = 1.0 if spec.model_id == 1 else gamma * mx
        if scale > 0:
            x0 = y / scale
            break
    if spec.bounded:
        x0 = min(max(x0, EPS_STATE), 1.0 - EPS_STATE)
    elif spec.diffusion_kind == "linear":
        x0 = max(x0, EPS_STATE)
    m0 = np.zeros(2)
    P0 = np.zeros((2, 2))
    m0[0] = float(tm.psi(x0, s))
    P0[0, 0] = INITIAL_Z_VARIANCE
    if spec.stochastic_rate:
        m0[1] = _get(p, "mu_A")
        P0[1, 1] = _get(p, "sigma_A") ** 2 / (2.0 * _get(p, "theta_A"))
    return m0, P0


@dataclass
class FilterResult:
    """Per-step output of a filter pass (index 0 is the initial state)."""

    neg_log_lik: float
    n_obs: int
    innovations: np.ndarray
    innovation_var: np.ndarray
    predicted: np.ndarray
    filtered_mean: np.ndarray
    filtered_cov: np.ndarray

    @property
    def log_lik(self) -> float:
        return -self.neg_log_lik

    @property
    def studentized(self) -> np.ndarray:
        return self.innovations / np.sqrt(self.innovation_var)

    @property
    def log_lik_terms(self) -> np.ndarray:
        """Per-observation log predictive density (NaN where nothing was observed)."""
        r = self.innovation_var
        return -0.5 * (np.log(2.0 * np.pi * r) + self.innovations ** 2 / r)


def _kernel_args(spec: ModelSpec, p: Mapping, series: IrradianceSeries):
    nwp, mx, hour = exogenous_arrays(series)
    y = np.ascontiguousarray(np.where(series.missing, 0.0, series.irradiance), dtype=float)
    missing = np.ascontiguousarray(series.missing, dtype=np.bool_)
    return (spec.model_id, K.KIND_CODES[spec.diffusion_kind], spec.stochastic_rate,
            spec.kernel_params(p), y, missing, nwp, mx, hour)


def filter_pass(spec, p: Mapping, series: IrradianceSeries, substeps: int = SUBSTEPS) -> FilterResult:
    """Sequential predict/update over the whole series."""
    spec = get_model(spec)
    if len(series) == 0:
        raise DataError("cannot filter an empty series")
    n = len(series)
    m0, P0 = initial_state(spec, p, series)
    innov = np.empty(n)
    rvar = np.empty(n)
    yhat = np.empty(n)
    m_filt = np.empty((n, 2))
    P_filt = np.empty((n, 2, 2))
    nll, used, status, where = K.ekf_pass(*_kernel_args(spec, p, series), m0, P0, substeps,
                                          innov, rvar, yhat, m_filt, P_filt)
    if status != K.STATUS_OK:
        reason = "non-finite moment prediction" if status == K.STATUS_NONFINITE_PREDICT else "non-positive innovation variance"
        raise NumericalError(f"{reason} at index {where} ({series.timestamps[where]})")
    return FilterResult(nll, int(used), innov, rvar, yhat, m_filt, P_filt)


def neg_log_likelihood(spec, p: Mapping, series: IrradianceSeries, substeps: int = SUBSTEPS) -> float:
    """Negative log-likelihood; ``inf`` when the filter breaks down."""
    spec = get_model(spec)
    m0, P0 = initial_state(spec, p, series)
    return float(K.ekf_nll(*_kernel_args(spec, p, series), m0, P0, substeps))


@dataclass
class FitOptions:
    nelder_mead_maxiter: int = 4000
    bfgs_maxiter: int = 300
    xatol: float = 1e-4
    fatol: float = 1e-4
    gtol: float = 1e-4
    fd_step: float = 1e-5
    ftol_converged: float = 1e-6
    substeps: int = SUBSTEPS
    polish: bool = True


@dataclass
class FitReport:
    model_id: int
    params: ParamVector
    log_lik: float
    aic: float
    bic: float
    n_obs: int
    n_params: int
    converged: bool
    iterations: int
    message: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"model_id": f"M{self.model_id}"}
        out.update(self.params.as_dict())
        out.update(log_lik=self.log_lik, aic=self.aic, bic=self.bic, n_obs=self.n_obs,
                   n_params=self.n_params, converged=self.converged,
                   iterations=self.iterations, message=self.message)
        out.update(self.extra)
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> FitReport:
        spec = get_model(d["model_id"])
        params = ParamVector({k: d[k] for k in spec.param_names})
        known = set(spec.param_names) | {"model_id", "log_lik", "aic", "bic", "n_obs", "n_params",
                                         "converged", "iterations", "message"}
        return cls(spec.model_id, params, float(d["log_lik"]), float(d["aic"]), float(d["bic"]),
                   int(d["n_obs"]), int(d["n_params"]), bool(d["converged"]), int(d["iterations"]),
                   str(d.get("message", "")), {k: v for k, v in d.items() if k not in known})

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n")

    @classmethod
    def load(cls, path) -> FitReport:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _central_gradient(fun, x: np.ndarray, step: float) -> np.ndarray:
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (fun(x + e) - fun(x - e)) / (2.0 * step)
    return grad


def fit(spec, series: IrradianceSeries, p_init: Mapping | None = None,
        opts: FitOptions | None = None) -> FitReport:
    """Maximum-likelihood estimate via Nelder-Mead followed by BFGS polish."""
    spec = get_model(spec)
    opts = opts or FitOptions()
    p_init = ParamVector(p_init) if p_init is not None else default_params(spec)
    x0 = unconstrain(p_init, spec)
    model_id, kind, stoch, _, y, missing, nwp, mx, hour = _kernel_args(spec, p_init, series)

    def objective(free):
        # long line-search steps can underflow positive parameters to 0
        try:
            p = constrain(free, spec)
            pv = spec.kernel_params(p)
            if not (np.all(np.isfinite(pv)) and pv[K.SIGMA_X] > 0 and pv[K.SIGMA_EPS] > 0):
                return 1e300
            m0, P0 = initial_state(spec, p, series)
            val = K.ekf_nll(model_id, kind, stoch, pv, y, missing, nwp, mx, hour, m0, P0, opts.substeps)
        except (ArithmeticError, DomainError):
            return 1e300
        return val if np.isfinite(val) else 1e300

    start_val = objective(x0)
    if not start_val < 1e300:
        raise NumericalError(f"{spec.name}: likelihood is not finite at the initial parameters")

    iterations = 0
    res = optimize.minimize(
        objective, x0, method="Nelder-Mead",
        options={"maxiter": opts.nelder_mead_maxiter, "xatol": opts.xatol,
                 "fatol": opts.fatol, "adaptive": spec.n_params > 5},
    )
    x_best, f_best = res.x, res.fun
    iterations += res.nit
    message = f"nelder-mead: {res.message}"
    converged = bool(res.success)

    if opts.polish:
        history = [f_best]

        def record(xk):
            history.append(objective(xk))

        res2 = optimize.minimize(
            objective, x_best, method="BFGS",
            jac=lambda v: _central_gradient(objective, v, opts.fd_step),
            callback=record, options={"maxiter": opts.bfgs_maxiter, "gtol": opts.gtol},
        )
        iterations += res2.nit
        if res2.fun <= f_best:
            x_best, f_best = res2.x, res2.fun
        last_change = abs(history[-1] - history[-2]) if len(history) > 1 else 0.0
        converged = bool(res2.success or last_change < opts.ftol_converged)
        message += f"; bfgs: {res2.message}"

    params = constrain(x_best, spec)
    result = filter_pass(spec, params, series, opts.substeps)
    log_lik = result.log_lik
    aic, bic = information_criteria(log_lik, spec.n_params, result.n_obs)
    logger.info("%s fit: LL=%.3f converged=%s", spec.name, log_lik, converged)
    return FitReport(spec.model_id, params, log_lik, aic, bic, result.n_obs, spec.n_params,
                     converged, iterations, message)
