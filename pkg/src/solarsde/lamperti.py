"""Lamperti transforms to unit-diffusion coordinates.

For a scalar diffusion ``g(x)`` the transform ``z = psi(x) = int dx / g(x)``
gives ``dZ = (f / g - g_x / 2) dt + dW`` (``psi`` does not depend on time
here). Closed forms are used for the three diffusion shapes in play::

    additive   g = s          psi = x / s
    linear     g = s x        psi = log(x) / s
    logistic   g = s x (1-x)  psi = log(x / (1 - x)) / s

The rate state ``A`` of M6/M7 already has constant diffusion and is passed
through unchanged.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .exceptions import DomainError
from .models import (
    ADDITIVE, LINEAR, LOGISTIC, ExogenousAt, ModelSpec, _get, drift_target, get_model,
)


@dataclass(frozen=True)
class TransformedModel:
    base: ModelSpec

    @classmethod
    def of(cls, model) -> TransformedModel:
        return cls(get_model(model))

    @property
    def kind(self) -> str:
        return self.base.diffusion_kind

    @property
    def state_dim(self) -> int:
        return self.base.state_dim

    def psi(self, x, sigma_x: float):
        """Forward map of the X component (vectorised, no domain checks)."""
        x = np.asarray(x, dtype=float)
        if self.kind == ADDITIVE:
            return x / sigma_x
        if self.kind == LINEAR:
            with np.errstate(divide="ignore"):
                return np.log(x) / sigma_x
        with np.errstate(divide="ignore"):
            return logit(x) / sigma_x

    def psi_inv(self, z, sigma_x: float):
        z = np.asarray(z, dtype=float)
        if self.kind == ADDITIVE:
            return sigma_x * z
        if self.kind == LINEAR:
            return np.exp(sigma_x * z)
        return expit(sigma_x * z)

    def dpsi(self, x, sigma_x: float):
        """Derivative of :meth:`psi`, differentiated term by term."""
        x = np.asarray(x, dtype=float)
        if self.kind == ADDITIVE:
            return np.full_like(x, 1.0 / sigma_x)
        if self.kind == LINEAR:
            return 1.0 / (sigma_x * x)
        # d/dx [log x - log(1 - x)] / s
        return (1.0 / x + 1.0 / (1.0 - x)) / sigma_x

    def g(self, x, sigma_x: float):
        x = np.asarray(x, dtype=float)
        if self.kind == ADDITIVE:
            return np.full_like(x, sigma_x)
        if self.kind == LINEAR:
            return sigma_x * x
        return sigma_x * x * (1.0 - x)

    def g_x(self, x, sigma_x: float):
        x = np.asarray(x, dtype=float)
        if self.kind == ADDITIVE:
            return np.zeros_like(x)
        if self.kind == LINEAR:
            return np.full_like(x, sigma_x)
        return sigma_x * (1.0 - 2.0 * x)

    def g_xx(self, x, sigma_x: float):
        x = np.asarray(x, dtype=float)
        if self.kind == LOGISTIC:
            return np.full_like(x, -2.0 * sigma_x)
        return np.zeros_like(x)

    def inv_g(self, z, sigma_x: float):
        """``1 / g(psi_inv(z))`` computed without cancellation at the edges."""
        z = np.asarray(z, dtype=float)
        if self.kind == ADDITIVE:
            return np.full_like(z, 1.0 / sigma_x)
        if self.kind == LINEAR:
            return np.exp(-sigma_x * z) / sigma_x
        # 1 / (x (1 - x)) = 2 + e^{s z} + e^{-s z}
        sz = sigma_x * z
        return (2.0 + np.exp(sz) + np.exp(-sz)) / sigma_x



def _check_open(tm: TransformedModel, x0: float):
    lo, hi = tm.base.state_space[0]
    if not (lo < x0 < hi):
        raise DomainError(f"{tm.base.name}: x={x0!r} not in the open state space ({lo}, {hi})")


def forward(tm: TransformedModel, x, p: Mapping) -> np.ndarray:
    """Map an original state vector to transformed coordinates."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (tm.state_dim,):
        raise DomainError(f"expected state of dimension {tm.state_dim}")
    _check_open(tm, float(x[0]))
    z = x.copy()
    z[0] = tm.psi(x[0], _get(p, "sigma_x"))
    return z


def inverse(tm: TransformedModel, z, p: Mapping) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (tm.state_dim,):
        raise DomainError(f"expected state of dimension {tm.state_dim}")
    x = z.copy()
    x[0] = tm.psi_inv(z[0], _get(p, "sigma_x"))
    return x


def transformed_drift(tm: TransformedModel, z, t, ex: ExogenousAt, p: Mapping) -> np.ndarray:
    """Drift of the unit-diffusion system at transformed state ``z``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    s = _get(p, "sigma_x")
    x0 = float(tm.psi_inv(z[0], s))
    rate = math.exp(z[1]) if tm.base.stochastic_rate else _get(p, "theta")
    f = rate * (drift_target(tm.base, ex, p) - x0)
    out = np.empty(tm.state_dim)
    out[0] = f * float(tm.inv_g(z[0], s)) - 0.5 * float(tm.g_x(x0, s))
    if tm.base.stochastic_rate:
        out[1] = _get(p, "theta_A") * (_get(p, "mu_A") - z[1])
    return out


def transformed_drift_jacobian(tm: TransformedModel, z, t, ex: ExogenousAt, p: Mapping) -> np.ndarray:
    """Analytic Jacobian of :func:`transformed_drift` with respect to ``z``.

    With ``x = psi_inv(z)`` and ``dx/dz = g``:
    ``d/dz [f/g - g_x/2] = f_x - f g_x / g - g g_xx / 2``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    s = _get(p, "sigma_x")
    x0 = float(tm.psi_inv(z[0], s))
    rate = math.exp(z[1]) if tm.base.stochastic_rate else _get(p, "theta")
    gap = drift_target(tm.base, ex, p) - x0
    f = rate * gap
    inv_g = float(tm.inv_g(z[0], s))
    g = float(tm.g(x0, s))
    jac = np.zeros((tm.state_dim, tm.state_dim))
    jac[0, 0] = -rate - f * float(tm.g_x(x0, s)) * inv_g - 0.5 * g * float(tm.g_xx(x0, s))
    if tm.base.stochastic_rate:
        jac[0, 1] = f * inv_g
        jac[1, 1] = -_get(p, "theta_A")
    return jac


def transformed_diffusion(tm: TransformedModel, p: Mapping) -> np.ndarray:
    """Constant diffusion matrix of the transformed system."""
    g = np.eye(tm.state_dim)
    if tm.base.stochastic_rate:
        g[1, 1] = _get(p, "sigma_A")
    return g
