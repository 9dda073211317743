"""Predictive densities: Fokker-Planck propagation and Monte Carlo paths.

The Fokker-Planck equation is solved for the Lamperti-transformed state,
whose diffusion is constant, on a uniform cell-centred grid. Fluxes between
cells use exponentially fitted upwinding (Scharfetter-Gummel), which keeps
the scheme positive for strong advection; zero-flux walls conserve mass
exactly. Time stepping is Crank-Nicolson after a few implicit-Euler
half-steps (Rannacher start) that damp the oscillations a point mass would
otherwise trigger.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.linalg import solve_banded
from scipy.special import ndtr

from . import _kernels as K
from .data import IrradianceSeries
from .exceptions import ConfigurationError, DomainError
from .filtering import SUBSTEPS, filter_pass
from .lamperti import TransformedModel
from .models import ModelSpec, _get, get_model

N_GRID = 400
FP_DT = 0.05
BOUND_EPS = 1e-5
DRIFT_CAP = 1e6
M2D_NOTE = "X density conditional on the mean path of A (Gaussian moment approximation)"


@dataclass(frozen=True)
class Exogenous:
    """Hourly exogenous inputs; the interval ending at hour ``k`` uses row ``k``."""

    nwp: np.ndarray
    max_irradiance: np.ndarray
    hour_of_day: np.ndarray

    @classmethod
    def from_series(cls, series: IrradianceSeries) -> Exogenous:
        return cls(np.asarray(series.nwp, float), np.asarray(series.max_irradiance, float),
                   np.asarray(series.hour_of_day, float))

    @classmethod
    def constant(cls, n_hours: int, nwp: float = 0.0, max_irradiance: float = 0.0,
                 hour_of_day: float = 12.0) -> Exogenous:
        n = n_hours + 1
        return cls(np.full(n, float(nwp)), np.full(n, float(max_irradiance)), np.full(n, float(hour_of_day)))

    def __len__(self) -> int:
        return len(self.nwp)

    def at(self, k: int) -> tuple[float, float, float]:
        if not 0 <= k < len(self.nwp):
            raise DomainError(f"no exogenous input for hour index {k} (have {len(self.nwp)})")
        return float(self.nwp[k]), float(self.max_irradiance[k]), float(self.hour_of_day[k])


@dataclass
class DensityGrid:
    """Density on a uniform cell-centred grid.

    ``support`` is the computational coordinate. When ``model`` is set the
    coordinate is the Lamperti variable of that model (with ``sigma_x``) and
    :meth:`state_support` maps it back to the original state.
    """

    support: np.ndarray
    values: np.ndarray
    time: float = 0.0
    model: ModelSpec | None = None
    sigma_x: float = 1.0

    @property
    def dz(self) -> float:
        return float(self.support[1] - self.support[0])

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([self.support - self.dz / 2, [self.support[-1] + self.dz / 2]])

    @classmethod
    def grid(cls, lo: float, hi: float, n: int = N_GRID) -> np.ndarray:
        edges = np.linspace(lo, hi, n + 1)
        return 0.5 * (edges[1:] + edges[:-1])

    @classmethod
    def gaussian(cls, support, mean: float, var: float, **kw) -> DensityGrid:
        """Cell-averaged normal density (exact mass per cell)."""
        support = np.asarray(support, dtype=float)
        dz = support[1] - support[0]
        edges = np.concatenate([support - dz / 2, [support[-1] + dz / 2]])
        if var <= 0:
            return cls.point_mass(support, mean, **kw)
        cdf = ndtr((edges - mean) / math.sqrt(var))
        mass = np.diff(cdf)
        return cls(support, mass / mass.sum() / dz, **kw)

    @classmethod
    def point_mass(cls, support, at: float, **kw) -> DensityGrid:
        """Unit mass split linearly between the two nearest cells."""
        support = np.asarray(support, dtype=float)
        dz = support[1] - support[0]
        pos = (at - support[0]) / dz
        if not 0 <= pos <= len(support) - 1:
            raise DomainError(f"point {at} outside grid")
        i = min(int(math.floor(pos)), len(support) - 2)
        frac = pos - i
        values = np.zeros_like(support)
        values[i] = (1 - frac) / dz
        values[i + 1] = frac / dz
        return cls(support, values, **kw)

    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.support))

    def moments(self) -> tuple[float, float]:
        w = self.values * self.dz
        w = w / w.sum()
        mean = float(np.sum(w * self.support))
        return mean, float(np.sum(w * (self.support - mean) ** 2))

    def cell_cdf(self) -> np.ndarray:
        """CDF at the cell edges."""
        c = np.concatenate([[0.0], np.cumsum(self.values * self.dz)])
        return c / c[-1]

    def cdf_at(self, z) -> np.ndarray:
        """Piecewise-linear CDF (exact for the piecewise-constant density)."""
        return np.interp(z, self.edges, self.cell_cdf())

    def state_support(self) -> np.ndarray:
        if self.model is None:
            return self.support
        return TransformedModel(self.model).psi_inv(self.support, self.sigma_x)

    def to_state(self) -> DensityGrid:
        """Density over the original state (non-uniform support)."""
        if self.model is None:
            return self
        tm = TransformedModel(self.model)
        x = tm.psi_inv(self.support, self.sigma_x)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            vals = self.values * tm.inv_g(self.support, self.sigma_x)
        return DensityGrid(x, np.nan_to_num(vals), self.time)


@dataclass
class PathEnsemble:
    n_paths: int
    step: float
    times: np.ndarray
    values: np.ndarray  # (n_paths, n_times, state_dim), original coordinates
    transformed: np.ndarray  # same shape, Lamperti coordinates
    seed: int

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1, :]


@dataclass
class PredictiveDensity:
    """Density of the next observation(s) in W/m^2.

    ``atoms``/``weights`` describe the noise-free observation ``scale * X``
    before convolution with N(0, sigma_eps^2).
    """

    support: np.ndarray
    values: np.ndarray
    time: pd.Timestamp | None
    horizon: int
    atoms: np.ndarray
    weights: np.ndarray
    sigma_eps: float
    scale: float
    metadata: dict = field(default_factory=dict)

    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.support))

    def cdf(self, y) -> np.ndarray:
        """Exact CDF of the discretised mixture."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return ndtr((y[:, None] - self.atoms[None, :]) / self.sigma_eps) @ self.weights

    def mean(self) -> float:
        return float(np.dot(self.atoms, self.weights))

    def std(self) -> float:
        m = self.mean()
        return math.sqrt(float(np.dot((self.atoms - m) ** 2, self.weights)) + self.sigma_eps ** 2)


def quantiles(density, probs: Sequence[float]) -> np.ndarray:
    """Inverse CDF by linear interpolation of the cumulative trapezoid.

    Works for :class:`DensityGrid` (returned in original state coordinates)
    and :class:`PredictiveDensity`.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.size == 0:
        raise DomainError("probs must not be empty")
    if np.any((probs <= 0) | (probs >= 1)):
        raise DomainError("probs must lie strictly inside (0, 1)")
    if probs.size > 1 and np.any(np.diff(probs) <= 0):
        raise DomainError("probs must be strictly increasing")
    x = np.asarray(density.support, dtype=float)
    v = np.clip(np.asarray(density.values, dtype=float), 0.0, None)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(x))])
    cum /= cum[-1]
    # keep the first point of each plateau so interp stays monotone
    keep = np.concatenate([[True], np.diff(cum) > 0])
    q = np.interp(probs, cum[keep], x[keep])
    if isinstance(density, DensityGrid) and density.model is not None:
        q = TransformedModel(density.model).psi_inv(q, density.sigma_x)
    return q


# --------------------------------------------------------------------------
# Fokker-Planck solver
# --------------------------------------------------------------------------

def _bernoulli(w: np.ndarray) -> np.ndarray:
    """B(w) = w / (e^w - 1) with the removable singularity at 0."""
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = w / np.expm1(w)
    small = np.abs(w) < 1e-8
    out[small] = 1.0 - 0.5 * w[small]
    return out


def _operator(drift_iface: np.ndarray, D: float, dz: float) -> np.ndarray:
    """Banded (1,1) generator L with dp/dt = L p, zero flux at both walls."""
    w = drift_iface * dz / D
    a = D / dz * _bernoulli(-w)  # outflow to the right from cell i
    b = D / dz * _bernoulli(w)  # inflow from cell i+1
    n = drift_iface.size + 1
    ab = np.zeros((3, n))
    ab[0, 1:] = b / dz  # upper: coefficient of p_{i+1}
    ab[2, :-1] = a / dz  # lower: coefficient of p_{i-1}
    diag = np.zeros(n)
    diag[:-1] -= a / dz
    diag[1:] -= b / dz
    ab[1] = diag
    return ab


def _banded_matvec(ab: np.ndarray, p: np.ndarray) -> np.ndarray:
    out = ab[1] * p
    out[:-1] += ab[0, 1:] * p[1:]
    out[1:] += ab[2, :-1] * p[:-1]
    return out


def _check_resolution(init: DensityGrid, D: float, duration: float):
    _, var = init.moments()
    spread = math.sqrt(var + 2.0 * D * duration)
    if spread < 2.0 * init.dz:
        raise ConfigurationError(
            f"grid too coarse: solution spread {spread:.3g} spans fewer than 2 cells "
            f"of width {init.dz:.3g}; refine the grid (increase n_grid or narrow its range)"
        )


def _propagate(p: np.ndarray, dz: float, D: float, drift_at: Callable[[float], np.ndarray],
               t0: float, t1: float, dt: float, rannacher: int) -> tuple[np.ndarray, int]:
    """Advance ``p`` from t0 to t1; returns (p, remaining Rannacher half-steps)."""
    n_steps = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / n_steps
    cache = {}
    t = t0
    for _ in range(n_steps):
        sub = [(h / 2, 1.0), (h / 2, 1.0)] if rannacher > 0 else [(h, 0.5)]
        for hh, theta in sub:
            f = drift_at(t + hh / 2)
            key = (id(f), hh, theta)
            if key not in cache or cache[key][0] is not f:
                L = _operator(f, D, dz)
                lhs = -theta * hh * L
                lhs[1] += 1.0
                cache = {key: (f, L, lhs)}
            _, L, lhs = cache[key]
            rhs = p + (1.0 - theta) * hh * _banded_matvec(L, p) if theta < 1 else p
            p = solve_banded((1, 1), lhs, rhs)
            t += hh
        rannacher = max(0, rannacher - 2)
    return p, rannacher


def solve_fokker_planck(init: DensityGrid, drift: Callable[[np.ndarray, float], np.ndarray],
                        diffusion: float, t0: float, t1: float, dt: float = FP_DT,
                        rannacher_steps: int = 4) -> DensityGrid:
    """Propagate ``init`` under dX = drift(X, t) dt + diffusion dW.

    ``drift`` is evaluated at the interior cell interfaces.
    """
    if not t1 > t0:
        raise DomainError("t1 must exceed t0")
    D = 0.5 * diffusion ** 2
    _check_resolution(init, D, t1 - t0)
    iface = init.edges[1:-1]
    p, _ = _propagate(init.values * 1.0, init.dz, D, lambda t: drift(iface, t), t0, t1, dt, rannacher_steps)
    return DensityGrid(init.support, p, t1, init.model, init.sigma_x)


def state_grid(spec, p: Mapping, mean_path: np.ndarray | None = None, sd: float | None = None,
               n: int = N_GRID) -> np.ndarray:
    """Computational grid in Lamperti coordinates for a model.

    Bounded models use psi(1e-5)..psi(1-1e-5). Otherwise the range follows
    the supplied mean path +/- 8 standard deviations.
    """
    spec = get_model(spec)
    tm = TransformedModel(spec)
    s = _get(p, "sigma_x")
    if spec.bounded:
        return DensityGrid.grid(float(tm.psi(BOUND_EPS, s)), float(tm.psi(1 - BOUND_EPS, s)), n)
    if mean_path is None or sd is None:
        raise DomainError(f"{spec.name}: unbounded model needs a mean path and spread for its grid")
    lo = float(np.min(mean_path)) - 8.0 * sd
    hi = float(np.max(mean_path)) + 8.0 * sd
    if spec.diffusion_kind == "linear":
        lo = max(lo, float(tm.psi(BOUND_EPS, s)))
        hi = max(hi, lo + 16.0 * sd)
    return DensityGrid.grid(lo, hi, n)


def _a_mean(p: Mapping, a0: float, t0: float):
    theta_a, mu_a = _get(p, "theta_A"), _get(p, "mu_A")
    return lambda t: mu_a + (a0 - mu_a) * math.exp(-theta_a * (t - t0))


def fokker_planck_solve(model, p: Mapping, init: DensityGrid, t0: float, t1: float,
                        exog: Exogenous, a0: float | None = None, dt: float = FP_DT) -> DensityGrid:
    """Propagate the X density of a model between hour marks ``t0`` and ``t1``.

    ``init`` lives on a Lamperti grid for this model. For M6/M7 the rate
    state follows its mean path starting at ``a0`` (default ``mu_A``).
    """
    spec = get_model(model)
    if not t1 > t0:
        raise DomainError("t1 must exceed t0")
    pv = spec.kernel_params(p)
    kind = K.KIND_CODES[spec.diffusion_kind]
    iface = np.ascontiguousarray(init.edges[1:-1])
    a_of_t = _a_mean(p, _get(p, "mu_A") if a0 is None else a0, t0)
    _check_resolution(init, 0.5, t1 - t0)
    hour_cache: dict[int, np.ndarray] = {}

    def drift_at(t):
        k = int(math.floor(t)) + 1
        nwp, mx, hour = exog.at(k)
        if spec.stochastic_rate:
            out = np.empty_like(iface)
            K.drift_z_array(spec.model_id, kind, True, pv, iface, a_of_t(t), nwp, mx, hour, out)
            return out
        if k not in hour_cache:
            out = np.empty_like(iface)
            K.drift_z_array(spec.model_id, kind, False, pv, iface, 0.0, nwp, mx, hour, out)
            hour_cache.clear()
            hour_cache[k] = out
        return hour_cache[k]

    values = init.values * 1.0
    rannacher = 4
    t = t0
    # split at hour marks so inputs stay constant within each piece
    while t < t1 - 1e-12:
        t_next = min(math.floor(t + 1e-9) + 1.0, t1)
        values, rannacher = _propagate(values, init.dz, 0.5, drift_at, t, t_next, dt, rannacher)
        t = t_next
    return DensityGrid(init.support, values, t1, spec, _get(p, "sigma_x"))


# --------------------------------------------------------------------------
# Monte Carlo
# --------------------------------------------------------------------------

def _initial_transformed(spec: ModelSpec, p: Mapping, x0, n_paths: int) -> tuple[np.ndarray, np.ndarray]:
    tm = TransformedModel(spec)
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim <= 1:
        x0 = np.broadcast_to(np.atleast_1d(x0), (n_paths, spec.state_dim))
    if x0.shape != (n_paths, spec.state_dim):
        raise DomainError(f"x0 must have shape ({spec.state_dim},) or ({n_paths}, {spec.state_dim})")
    lo, hi = spec.state_space[0]
    if spec.diffusion_kind != "additive" and not np.all((x0[:, 0] > lo) & (x0[:, 0] < hi)):
        raise DomainError(f"{spec.name}: initial states must lie in the open state space")
    z = np.ascontiguousarray(tm.psi(x0[:, 0], _get(p, "sigma_x")), dtype=float)
    a = np.ascontiguousarray(x0[:, 1] if spec.stochastic_rate else np.zeros(n_paths), dtype=float)
    return z, a


def simulate_paths(model, p: Mapping, x0, t0: float, t1: float, n_paths: int, step: float,
                   seed: int, exog: Exogenous, record: str = "hourly",
                   block_size: int = 4096) -> PathEnsemble:
    """Euler-Maruyama paths in Lamperti coordinates, mapped back.

    Each block of ``block_size`` paths draws from its own stream keyed by
    ``(seed, block index)``, so results do not depend on how blocks are
    scheduled. ``record`` is ``"terminal"``, ``"hourly"`` or ``"all"``.
    """
    spec = get_model(model)
    if not step > 0:
        raise DomainError("step must be positive")
    if not t1 > t0:
        raise DomainError("t1 must exceed t0")
    n_steps = int(round((t1 - t0) / step))
    if n_steps < 1 or abs(n_steps * step - (t1 - t0)) > 1e-9 * max(1.0, t1 - t0):
        raise DomainError("(t1 - t0) must be an integer multiple of step")
    tm = TransformedModel(spec)
    pv = spec.kernel_params(p)
    kind = K.KIND_CODES[spec.diffusion_kind]
    s = _get(p, "sigma_x")
    cap = DRIFT_CAP / s
    times = t0 + step * np.arange(n_steps + 1)
    hours = np.floor(times[:-1] + step / 2).astype(int) + 1
    if record == "terminal":
        rec_idx = np.array([n_steps])
    elif record == "hourly":
        rec_idx = np.nonzero(np.abs(times - np.round(times)) < 1e-9)[0]
        if rec_idx.size == 0 or rec_idx[-1] != n_steps:
            rec_idx = np.append(rec_idx, n_steps)
        if rec_idx[0] != 0:
            rec_idx = np.insert(rec_idx, 0, 0)
    elif record == "all":
        rec_idx = np.arange(n_steps + 1)
    else:
        raise DomainError(f"unknown record mode {record!r}")
    z_all, a_all = _initial_transformed(spec, p, x0, n_paths)
    out_z = np.empty((n_paths, rec_idx.size))
    out_a = np.empty((n_paths, rec_idx.size))
    # contiguous runs of steps sharing one input row, cut at record points
    cuts = set(np.nonzero(np.diff(hours))[0] + 1) | set(rec_idx[(rec_idx > 0) & (rec_idx < n_steps)])
    bounds = [0] + sorted(cuts) + [n_steps]
    rec_pos = {int(i): j for j, i in enumerate(rec_idx)}
    max_chunk = 256

    for block, start in enumerate(range(0, n_paths, block_size)):
        stop = min(start + block_size, n_paths)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
        z = z_all[start:stop].copy()
        a = a_all[start:stop].copy()
        if 0 in rec_pos:
            out_z[start:stop, rec_pos[0]] = z
            out_a[start:stop, rec_pos[0]] = a
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            nwp, mx, hour = exog.at(int(hours[lo]))
            pos = lo
            while pos < hi:
                m = min(max_chunk, hi - pos)
                noise = rng.standard_normal((m, 2, stop - start))
                if record == "all":
                    K.em_advance_record(spec.model_id, kind, spec.stochastic_rate, pv, z, a, nwp, mx, hour,
                                        step, noise, cap, out_z[start:stop], out_a[start:stop], pos + 1)
                else:
                    K.em_advance(spec.model_id, kind, spec.stochastic_rate, pv, z, a, nwp, mx, hour,
                                 step, noise, cap)
                pos += m
            if record != "all" and hi in rec_pos:
                out_z[start:stop, rec_pos[hi]] = z
                out_a[start:stop, rec_pos[hi]] = a

    x = tm.psi_inv(out_z, s)
    if spec.stochastic_rate:
        values = np.stack([x, out_a], axis=-1)
        transformed = np.stack([out_z, out_a], axis=-1)
    else:
        values = x[..., None]
        transformed = out_z[..., None]
    return PathEnsemble(n_paths, step, times[rec_idx], values, transformed, seed)


# --------------------------------------------------------------------------
# Forecasting
# --------------------------------------------------------------------------

def _observation_density(spec: ModelSpec, p: Mapping, grid: DensityGrid | None, scale: float,
                         horizon: int, time, metadata: dict) -> PredictiveDensity:
    sigma_eps = _get(p, "sigma_eps")
    if grid is None or scale == 0.0:
        atoms, weights = np.zeros(1), np.ones(1)
    else:
        w = np.clip(grid.values, 0.0, None) * grid.dz
        keep = w > 1e-14 * w.sum()
        weights = w[keep] / w[keep].sum()
        atoms = scale * grid.state_support()[keep]
    lo = atoms.min() - 8.0 * sigma_eps
    hi = atoms.max() + 8.0 * sigma_eps
    step = min(sigma_eps / 4.0, (hi - lo) / 400.0)
    n = int(min(20001, math.ceil((hi - lo) / step) + 1))
    y = np.linspace(lo, hi, n)
    dens = np.zeros(n)
    for chunk in range(0, atoms.size, 256):
        a = atoms[chunk:chunk + 256]
        dens += np.exp(-0.5 * ((y[:, None] - a[None, :]) / sigma_eps) ** 2) @ weights[chunk:chunk + 256]
    dens /= sigma_eps * math.sqrt(2.0 * math.pi)
    return PredictiveDensity(y, dens, time, horizon, atoms, weights, sigma_eps, scale, metadata)


def _scale_at(spec: ModelSpec, p: Mapping, mx: float) -> float:
    return 1.0 if spec.model_id == 1 else _get(p, "gamma") * mx


def forecast_grid(model, p: Mapping, mean, cov, origin_hour: int, horizon: int, exog: Exogenous,
                  n_grid: int = N_GRID) -> np.ndarray:
    """Lamperti-coordinate grid for propagating a filtered state ``horizon`` hours."""
    spec = get_model(model)
    if spec.bounded:
        return state_grid(spec, p, n=n_grid)
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var0 = float(cov[0, 0]) if np.ndim(cov) == 2 else float(cov)
    # moment path sets the range
    pv = spec.kernel_params(p)
    kind = K.KIND_CODES[spec.diffusion_kind]
    m = np.array([mean[0], mean[1] if mean.size > 1 else 0.0])
    P = np.zeros((2, 2))
    P[0, 0] = var0
    path = [m[0]]
    var_max = var0
    for k in range(origin_hour + 1, origin_hour + horizon + 1):
        nwp, mx, hour = exog.at(k)
        K.rk4_moments(spec.model_id, kind, spec.stochastic_rate, pv, m, P, nwp, mx, hour, 1.0, SUBSTEPS)
        path.append(m[0])
        var_max = max(var_max, P[0, 0])
    sd = math.sqrt(max(var_max, 1e-12))
    return state_grid(spec, p, np.array(path), sd, n=n_grid)


def forecast_from_state(model, p: Mapping, mean: np.ndarray, cov: np.ndarray, origin_hour: int,
                        horizon: int, exog: Exogenous, n_grid: int = N_GRID, dt: float = FP_DT,
                        time=None) -> PredictiveDensity:
    """Predictive density ``horizon`` hours after a filtered Gaussian state.

    ``mean``/``cov`` are in Lamperti coordinates (as produced by the filter)
    and ``origin_hour`` indexes ``exog``.
    """
    spec = get_model(model)
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    target = origin_hour + horizon
    nwp, mx, hour = exog.at(target)
    scale = _scale_at(spec, p, mx)
    meta = {"model": spec.name}
    if spec.stochastic_rate:
        meta["approximation"] = M2D_NOTE
    if scale == 0.0:
        return _observation_density(spec, p, None, 0.0, horizon, time, meta)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    support = forecast_grid(spec, p, mean, cov, origin_hour, horizon, exog, n_grid)
    var0 = float(cov[0, 0]) if np.ndim(cov) == 2 else float(cov)
    init = DensityGrid.gaussian(support, float(mean[0]), var0, time=float(origin_hour),
                                model=spec, sigma_x=_get(p, "sigma_x"))
    a0 = float(mean[1]) if spec.stochastic_rate else None
    out = fokker_planck_solve(spec, p, init, float(origin_hour), float(target), exog, a0=a0, dt=dt)
    return _observation_density(spec, p, out, scale, horizon, time, meta)


def _origin_index(series: IrradianceSeries, origin) -> int:
    if isinstance(origin, (int, np.integer)):
        idx = int(origin)
    else:
        ts = pd.Timestamp(origin)
        ts = ts.tz_localize("UTC") if ts.tz is None else ts.tz_convert("UTC")
        idx = int(series.timestamps.searchsorted(ts))
        if idx >= len(series) or series.timestamps[idx] != ts:
            raise DomainError(f"origin {ts} is not a timestamp of the series")
    if not 0 <= idx < len(series):
        raise DomainError(f"origin index {idx} outside series of length {len(series)}")
    return idx


def forecast(model, p: Mapping, series: IrradianceSeries, origin, horizon: int,
             n_grid: int = N_GRID, dt: float = FP_DT) -> PredictiveDensity:
    """Filter up to ``origin`` and propagate ``horizon`` hours ahead.

    Exogenous inputs for the forecast hours are read from ``series``.
    """
    spec = get_model(model)
    idx = _origin_index(series, origin)
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    if idx + horizon >= len(series):
        raise DomainError(f"series lacks exogenous inputs {horizon} h after origin")
    res = filter_pass(spec, p, series.take(slice(0, idx + 1)))
    return forecast_from_state(spec, p, res.filtered_mean[idx], res.filtered_cov[idx], idx, horizon,
                               Exogenous.from_series(series), n_grid, dt,
                               time=series.timestamps[idx + horizon])


def rolling_forecasts(model, p: Mapping, series: IrradianceSeries, horizon: int,
                      origins: Sequence[int] | None = None, n_grid: int = N_GRID,
                      dt: float = FP_DT) -> list[PredictiveDensity]:
    """Forecasts from many origins using a single filter pass."""
    spec = get_model(model)
    res = filter_pass(spec, p, series)
    exog = Exogenous.from_series(series)
    if origins is None:
        origins = range(0, len(series) - horizon)
    return [
        forecast_from_state(spec, p, res.filtered_mean[i], res.filtered_cov[i], int(i), horizon, exog,
                            n_grid, dt, time=series.timestamps[int(i) + horizon])
        for i in origins
    ]
