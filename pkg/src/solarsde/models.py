"""SDE state-space models for hourly solar irradiance.

Seven nested models are provided. ``X`` is irradiance itself (M1, W/m^2) or
the fraction of the extraterrestrial envelope that reaches the ground
(M2-M7). M6 and M7 add a second state ``A`` whose exponential is the
reversion rate of ``X``.

The drift target shared by M2-M7 is::

    (NWP + beta) / (gamma * Max + DELTA) * (mu - omega1 * sin(2 pi h / 24 + omega2))

with ``gamma = 1`` for M2-M4 and ``omega1 = 0`` below M7.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

DELTA = 0.01

# Canonical parameter order used by the compiled kernels.
PARAM_NAMES = (
    "theta", "mu", "sigma_x", "sigma_eps", "beta", "gamma",
    "theta_A", "mu_A", "sigma_A", "omega1", "omega2",
)
PARAM_INDEX = {name: i for i, name in enumerate(PARAM_NAMES)}
# Values used when a model does not carry the parameter.
_NEUTRAL = {
    "theta": 1.0, "mu": 1.0, "sigma_x": 1.0, "sigma_eps": 1.0, "beta": 0.0,
    "gamma": 1.0, "theta_A": 1.0, "mu_A": 0.0, "sigma_A": 0.0,
    "omega1": 0.0, "omega2": 0.0,
}
# Constraint transform of each parameter: free value -> constrained value.
TRANSFORMS = {
    "theta": "log", "mu": "log", "sigma_x": "log", "sigma_eps": "log",
    "beta": "log", "gamma": "logit", "theta_A": "log", "mu_A": "identity",
    "sigma_A": "log", "omega1": "bounded_by_mu", "omega2": "identity",
}

ADDITIVE, LINEAR, LOGISTIC = "additive", "linear", "logistic"


class ParamVector(Mapping):
    """Immutable mapping of parameter names to floats."""

    __slots__ = ("_values",)

    def __init__(self, values=None, **kwargs):
        merged = dict(values or {}, **kwargs)
        unknown = set(merged) - set(PARAM_NAMES)
        if unknown:
            raise KeyError(f"unknown parameters: {sorted(unknown)}")
        self._values = {k: float(merged[k]) for k in PARAM_NAMES if k in merged}

    def __getitem__(self, key: str) -> float:
        return self._values[key]

    def __iter__(self):
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v:.6g}" for k, v in self._values.items())
        return f"ParamVector({inner})"

    def __eq__(self, other):
        if isinstance(other, Mapping):
            return dict(self) == dict(other)
        return NotImplemented

    def __hash__(self):
        return hash(tuple(self._values.items()))

    def replace(self, **kwargs) -> ParamVector:
        return ParamVector(self._values, **kwargs)

    def as_dict(self) -> dict[str, float]:
        return dict(self._values)


@dataclass(frozen=True)
class ExogenousAt:
    nwp: float
    max_irradiance: float
    hour_of_day: float = 12.0

    def __post_init__(self):
        if self.nwp < 0 or self.max_irradiance < 0:
            raise DomainError("exogenous inputs must be non-negative")


@dataclass(frozen=True)
class ModelSpec:
    model_id: int
    param_names: tuple[str, ...]
    diffusion_kind: str
    stochastic_rate: bool = False

    @property
    def name(self) -> str:
        return f"M{self.model_id}"

    @property
    def state_dim(self) -> int:
        return 2 if self.stochastic_rate else 1

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    def bounded(self) -> bool:
        """True when X lives in (0, 1)."""
        return self.diffusion_kind == LOGISTIC

    @property
    def scaled_observation(self) -> bool:
        return self.model_id >= 2

    @property
    def state_space(self) -> tuple[tuple[float, float], ...]:
        x_space = {
            ADDITIVE: (-math.inf, math.inf),
            LINEAR: (0.0, math.inf),
            LOGISTIC: (0.0, 1.0),
        }[self.diffusion_kind]
        if self.stochastic_rate:
            return (x_space, (-math.inf, math.inf))
        return (x_space,)

    def kernel_params(self, p: Mapping) -> np.ndarray:
        """Dense parameter array in ``PARAM_NAMES`` order, neutral-filled."""
        missing = [k for k in self.param_names if k not in p]
        if missing:
            raise KeyError(f"{self.name} requires parameters {missing}")
        out = np.array([_NEUTRAL[k] for k in PARAM_NAMES])
        for k in self.param_names:
            out[PARAM_INDEX[k]] = p[k]
        return out

    def __str__(self) -> str:
        return self.name


_BASE = ("theta", "mu", "beta", "sigma_x", "sigma_eps")
_RATE = ("theta_A", "mu_A", "sigma_A", "mu", "beta", "gamma", "sigma_x", "sigma_eps")

MODELS = {
    1: ModelSpec(1, ("theta", "mu", "sigma_x", "sigma_eps"), ADDITIVE),
    2: ModelSpec(2, _BASE, ADDITIVE),
    3: ModelSpec(3, _BASE, LINEAR),
    4: ModelSpec(4, _BASE, LOGISTIC),
    5: ModelSpec(5, _BASE + ("gamma",), LOGISTIC),
    6: ModelSpec(6, _RATE, LOGISTIC, stochastic_rate=True),
    7: ModelSpec(7, _RATE + ("omega1", "omega2"), LOGISTIC, stochastic_rate=True),
}


def get_model(model) -> ModelSpec:
    """Look up a model by ``ModelSpec``, integer id, or name like ``"M4"``."""
    if isinstance(model, ModelSpec):
        return model
    key = model
    if isinstance(model, str):
        key = model.strip().upper().lstrip("M")
    try:
        return MODELS[int(key)]
    except (KeyError, ValueError):
        raise DomainError(f"unknown model {model!r}; expected M1..M7") from None


def default_params(model) -> ParamVector:
    """Generic starting values for estimation."""
    spec = get_model(model)
    if spec.model_id == 1:
        return ParamVector(theta=0.5, mu=1.0, sigma_x=30.0, sigma_eps=10.0)
    base = dict(theta=0.5, mu=0.8, beta=0.005, sigma_x=0.8, sigma_eps=10.0,
                gamma=0.8, theta_A=0.5, mu_A=math.log(0.5), sigma_A=0.3,
                omega1=0.05, omega2=0.0)
    if spec.model_id in (3,):
        base["sigma_x"] = 0.5
    return ParamVector({k: base[k] for k in spec.param_names})


def _as_state(spec: ModelSpec, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (spec.state_dim,):
        raise DomainError(f"{spec.name} expects a state of dimension {spec.state_dim}, got {x.shape}")
    lo, hi = spec.state_space[0]
    if not (np.isfinite(x).all() and lo <= x[0] <= hi):
        raise DomainError(f"{spec.name}: state {x[0]!r} outside state space [{lo}, {hi}]")
    return x


def _get(p: Mapping, name: str) -> float:
    return float(p[name]) if name in p else _NEUTRAL[name]


def drift_target(spec: ModelSpec, ex: ExogenousAt, p: Mapping) -> float:
    """Level that X reverts to."""
    if spec.model_id == 1:
        return _get(p, "mu") * ex.nwp
    scale = _get(p, "mu") - _get(p, "omega1") * math.sin(2 * math.pi * ex.hour_of_day / 24 + _get(p, "omega2"))
    return (ex.nwp + _get(p, "beta")) / (_get(p, "gamma") * ex.max_irradiance + DELTA) * scale


def _rate(spec: ModelSpec, x: np.ndarray, p: Mapping) -> float:
    return math.exp(x[1]) if spec.stochastic_rate else _get(p, "theta")


def drift(spec: ModelSpec, x, t, ex: ExogenousAt, p: Mapping) -> np.ndarray:
    """Drift vector f(x, t); time enters only through ``ex``."""
    spec = get_model(spec)
    x = _as_state(spec, x)
    out = np.empty(spec.state_dim)
    out[0] = _rate(spec, x, p) * (drift_target(spec, ex, p) - x[0])
    if spec.stochastic_rate:
        out[1] = _get(p, "theta_A") * (_get(p, "mu_A") - x[1])
    return out


def diffusion_x(spec: ModelSpec, x0: float, sigma_x: float) -> float:
    """Diffusion of the X component as a scalar function of X."""
    if spec.diffusion_kind == ADDITIVE:
        return sigma_x
    if spec.diffusion_kind == LINEAR:
        return sigma_x * x0
    return sigma_x * x0 * (1.0 - x0)


def diffusion(spec: ModelSpec, x, t, p: Mapping) -> np.ndarray:
    """Diagonal diffusion matrix g(x, t)."""
    spec = get_model(spec)
    x = _as_state(spec, x)
    g = np.zeros((spec.state_dim, spec.state_dim))
    g[0, 0] = diffusion_x(spec, x[0], _get(p, "sigma_x"))
    if spec.stochastic_rate:
        g[1, 1] = _get(p, "sigma_A")
    return g


def observation_scale(spec: ModelSpec, ex: ExogenousAt, p: Mapping) -> float:
    if spec.model_id == 1:
        return 1.0
    return _get(p, "gamma") * ex.max_irradiance


def observe(spec: ModelSpec, x, t, ex: ExogenousAt, p: Mapping) -> float:
    """Noise-free predicted observation in W/m^2."""
    spec = get_model(spec)
    x = _as_state(spec, x)
    return observation_scale(spec, ex, p) * x[0]


def drift_jacobian(spec: ModelSpec, x, t, ex: ExogenousAt, p: Mapping) -> np.ndarray:
    spec = get_model(spec)
    x = _as_state(spec, x)
    rate = _rate(spec, x, p)
    jac = np.zeros((spec.state_dim, spec.state_dim))
    jac[0, 0] = -rate
    if spec.stochastic_rate:
        jac[0, 1] = rate * (drift_target(spec, ex, p) - x[0])
        jac[1, 1] = -_get(p, "theta_A")
    return jac


def observation_jacobian(spec: ModelSpec, x, t, ex: ExogenousAt, p: Mapping) -> np.ndarray:
    spec = get_model(spec)
    _as_state(spec, x)
    row = np.zeros(spec.state_dim)
    row[0] = observation_scale(spec, ex, p)
    return row


def _logit(u: float) -> float:
    return math.log(u) - math.log1p(-u)


def _expit(v: float) -> float:
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def unconstrain(p: Mapping, spec) -> np.ndarray:
    """Map a parameter vector to unconstrained reals (schema order)."""
    spec = get_model(spec)
    out = np.empty(spec.n_params)
    for i, name in enumerate(spec.param_names):
        v = float(p[name])
        kind = TRANSFORMS[name]
        if kind == "log":
            if not v > 0:
                raise DomainError(f"{name}={v} must be strictly positive")
            out[i] = math.log(v)
        elif kind == "logit":
            if not 0 < v < 1:
                raise DomainError(f"{name}={v} must lie strictly inside (0, 1)")
            out[i] = _logit(v)
        elif kind == "bounded_by_mu":
            mu = float(p["mu"])
            if not abs(v) < mu:
                raise DomainError(f"{name}={v} must satisfy |{name}| < mu={mu}")
            out[i] = math.atanh(v / mu)
        else:
            out[i] = v
    return out


def constrain(free, spec) -> ParamVector:
    """Inverse of :func:`unconstrain`."""
    spec = get_model(spec)
    free = np.asarray(free, dtype=float)
    if free.shape != (spec.n_params,):
        raise DomainError(f"{spec.name} expects {spec.n_params} free values, got {free.shape}")
    values = {}
    deferred = []
    for name, v in zip(spec.param_names, free):
        kind = TRANSFORMS[name]
        if kind == "log":
            values[name] = math.exp(v)
        elif kind == "logit":
            values[name] = _expit(v)
        elif kind == "bounded_by_mu":
            deferred.append((name, v))
        else:
            values[name] = float(v)
    for name, v in deferred:
        values[name] = values["mu"] * math.tanh(v)
    return ParamVector(values)
