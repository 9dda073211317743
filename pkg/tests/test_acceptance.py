"""Acceptance checks, one test (or group) per numbered criterion.

Each test records a short detail string; the terminal summary prints one
PASS/FAIL line per criterion (see ``conftest.pytest_terminal_summary``).
"""

import math

import numpy as np
import pytest

from oracles import fp_vs_mc_ks, ou_kalman_loglik
from solarsde.benchmarks import (
    calibration_table, climatology_loglik, fit_arx, fit_climatology, residual_acf, sde_loglik_split,
)
from solarsde.density import (
    DensityGrid, Exogenous, fokker_planck_solve, forecast_from_state, rolling_forecasts,
    simulate_paths, solve_fokker_planck, state_grid,
)
from solarsde.filtering import filter_pass, fit, information_criteria
from solarsde.lamperti import TransformedModel
from solarsde.models import ParamVector, get_model
from solarsde.synthetic import simulate_series, true_params


def _detail(record_property, text):
    record_property("detail", text)


# 1 ------------------------------------------------------------------------

@pytest.mark.criterion(1)
def test_information_criteria_arithmetic(record_property):
    aic1, bic1 = information_criteria(-95619, 5, 17520)
    aic6, _ = information_criteria(-30370, 10, 17520)
    _detail(record_property, f"AIC {aic1:g}, {aic6:g}; BIC {bic1:.2f}")
    assert aic1 == 191248
    assert aic6 == 60760
    assert abs(bic1 - 191287) <= 1


# 2 ------------------------------------------------------------------------

@pytest.mark.criterion(2)
def test_filter_matches_exact_kalman_filter(record_property):
    p = ParamVector(theta=0.5, mu=1.0, sigma_x=30.0, sigma_eps=10.0)
    s = simulate_series(1, p, 1001, seed=3, nwp=np.full(1001, 300.0))
    y = s.irradiance
    # the filter starts at the first observation with state variance 0.25 in z
    ref = ou_kalman_loglik(y, 0.5, 300.0, 30.0, 10.0, y[0], 0.25 * 30.0 ** 2)
    diff = filter_pass(1, p, s).log_lik - ref
    _detail(record_property, f"|dLL| = {abs(diff):.2e} over {len(y) - 1} steps")
    assert abs(diff) < 1e-6


# 3 ------------------------------------------------------------------------

def _recovery(model, n_hours, seed):
    truth = true_params(model)
    s = simulate_series(model, truth, n_hours=n_hours, seed=seed)
    est = fit(model, s).params
    return {k: est[k] / truth[k] - 1 for k in truth}


@pytest.mark.criterion(3)
@pytest.mark.slow
@pytest.mark.parametrize("model, n_hours", [(1, 5000), (4, 17520)])
def test_parameter_recovery(model, n_hours, record_property):
    rel = _recovery(model, n_hours, seed=2024)
    _detail(record_property, ", ".join(f"{k} {v:+.3f}" for k, v in rel.items()))
    assert all(abs(v) <= 0.10 for v in rel.values()), rel


# 4 ------------------------------------------------------------------------

@pytest.mark.criterion(4)
@pytest.mark.parametrize("model", [3, 4])
def test_lamperti_derivative_times_diffusion(model, record_property):
    tm = TransformedModel(get_model(model))
    s = true_params(model)["sigma_x"]
    # interior points; the linear family lives on (0, inf)
    x = np.linspace(0.0, 1.0, 1002)[1:-1] if model == 4 else np.geomspace(1e-3, 10.0, 1000)
    err = np.abs(tm.dpsi(x, s) * tm.g(x, s) - 1.0).max()
    _detail(record_property, f"max |psi' g - 1| = {err:.1e}")
    assert err <= 1e-10


@pytest.mark.criterion(4)
def test_transformed_paths_have_unit_quadratic_variation(record_property):
    p = true_params(4)
    exog = Exogenous.constant(2, nwp=300.0, max_irradiance=700.0)
    ens = simulate_paths(4, p, [0.5], 0.0, 1.0, 1000, 1e-4, seed=11, exog=exog, record="all")
    qv = (np.diff(ens.transformed[:, :, 0], axis=1) ** 2).sum(axis=1)
    inside = np.mean((qv >= 0.97) & (qv <= 1.03))
    # each path's QV has sd sqrt(2 * 1e-4) ~ 0.014, so ~3% of exact paths
    # fall outside [0.97, 1.03] by chance; check the mean and the bulk
    _detail(record_property, f"mean QV {qv.mean():.4f}, {inside:.1%} of paths inside")
    assert 0.97 <= qv.mean() <= 1.03
    assert inside >= 0.95


# 5 ------------------------------------------------------------------------

@pytest.mark.criterion(5)
def test_fokker_planck_analytic_moments(record_property):
    errs = {}
    bm = solve_fokker_planck(DensityGrid.point_mass(DensityGrid.grid(-8, 8, 400), 0.0),
                             lambda z, t: np.zeros_like(z), 1.0, 0.0, 1.0)
    errs["brownian var"] = bm.moments()[1] - 1.0

    theta, level, sigma = 0.8, 1.5, 1.2
    a = math.exp(-theta)
    ou = solve_fokker_planck(DensityGrid.gaussian(DensityGrid.grid(-6, 8, 400), -1.0, 0.3),
                             lambda z, t: theta * (level - z), sigma, 0.0, 1.0)
    mean, var = ou.moments()
    errs["OU mean t=1"] = mean / (level + a * (-1.0 - level)) - 1
    errs["OU var t=1"] = var / (a * a * 0.3 + sigma ** 2 * (1 - a * a) / (2 * theta)) - 1

    st = solve_fokker_planck(DensityGrid.gaussian(DensityGrid.grid(-6, 8, 400), -1.0, 0.3),
                             lambda z, t: theta * (level - z), sigma, 0.0, 20.0)
    mean, var = st.moments()
    errs["OU mean stat"] = mean / level - 1
    errs["OU var stat"] = var / (sigma ** 2 / (2 * theta)) - 1
    _detail(record_property, ", ".join(f"{k} {v:+.1e}" for k, v in errs.items()))
    assert all(abs(v) <= 0.01 for v in errs.values()), errs


@pytest.mark.criterion(5)
@pytest.mark.parametrize("model", [4, 5, 6, 7])
def test_fokker_planck_conserves_mass(model, record_property):
    p = true_params(model)
    spec = get_model(model)
    exog = Exogenous.from_series(simulate_series(model, n_hours=24 * 10, seed=3))
    init = DensityGrid.gaussian(state_grid(spec, p), 0.0, 0.5, model=spec, sigma_x=p["sigma_x"])
    out = fokker_planck_solve(model, p, init, 24.0, 72.0, exog)
    _detail(record_property, f"|mass - 1| = {abs(out.mass() - 1):.1e} after 48 h")
    assert abs(out.mass() - 1.0) < 1e-3


# 6 ------------------------------------------------------------------------

@pytest.mark.criterion(6)
@pytest.mark.slow
def test_fokker_planck_matches_monte_carlo(record_property):
    ks = fp_vs_mc_ks(4, (1, 6, 24), n_paths=100_000, step=0.01)
    _detail(record_property, ", ".join(f"h{h} KS {v:.4f}" for h, v in ks.items()))
    assert max(ks.values()) < 0.02, ks


# 7 ------------------------------------------------------------------------

def _paths_and_mass(model):
    p = true_params(model)
    spec = get_model(model)
    s = simulate_series(model, n_hours=24 * 12, seed=8)
    exog = Exogenous.from_series(s)
    x0 = [0.5, float(p["mu_A"])] if spec.stochastic_rate else [0.5]
    ens = simulate_paths(model, p, x0, 0.0, 24.0 * 10, 500, 0.05, seed=8, exog=exog)
    x = ens.values[:, :, 0]
    z0 = float(TransformedModel(spec).psi(0.5, p["sigma_x"]))
    grid = state_grid(spec, p, mean_path=np.array([z0]), sd=1.5)
    init = DensityGrid.gaussian(grid, z0, 0.5, model=spec, sigma_x=p["sigma_x"])
    dens = fokker_planck_solve(model, p, init, 24.0, 60.0, exog)  # ends near midday
    xs = dens.state_support()
    outside = float((dens.values * dens.dz)[(xs < 0) | (xs > 1)].sum())
    return p, s, x, xs, outside


@pytest.mark.criterion(7)
@pytest.mark.parametrize("model", [4, 5, 6, 7])
def test_bounded_models_stay_in_unit_interval(model, record_property):
    p, s, x, support, outside = _paths_and_mass(model)
    origin = 24 * 5 + 10
    res = filter_pass(model, p, s)
    d = forecast_from_state(model, p, res.filtered_mean[origin], res.filtered_cov[origin], origin, 3,
                            Exogenous.from_series(s))
    envelope = (p["gamma"] if "gamma" in p else 1.0) * s.max_irradiance[origin + 3]
    _detail(record_property, f"paths in [{x.min():.4f}, {x.max():.4f}], grid in "
                             f"[{support.min():.2e}, {support.max():.6f}], atoms <= {d.atoms.max():.1f}"
                             f" (envelope {envelope:.1f})")
    assert x.min() >= 0 and x.max() <= 1
    assert support.min() > 0 and support.max() < 1 and outside == 0
    assert d.atoms.min() >= 0 and d.atoms.max() <= envelope


@pytest.mark.criterion(7)
@pytest.mark.xfail(strict=True, reason="the log-transformed model is bounded below only")
def test_lower_bounded_model_stays_in_unit_interval(record_property):
    # the linear-diffusion model has state space (0, inf): positivity holds,
    # the upper bound of 1 does not
    _, _, x, support, outside = _paths_and_mass(3)
    _detail(record_property, f"paths in [{x.min():.4f}, {x.max():.4f}], FP mass above 1: {outside:.3f}")
    assert x.min() > 0
    assert x.max() <= 1 and outside == 0


# 8 ------------------------------------------------------------------------

@pytest.mark.criterion(8)
@pytest.mark.slow
def test_true_model_forecasts_are_calibrated(record_property):
    p = true_params(7)
    s = simulate_series(7, n_hours=8760 + 1, seed=77)
    forecasts = rolling_forecasts(7, p, s, 1, origins=range(8760))
    table = calibration_table(forecasts, s.irradiance[1:8761])
    dev = table.max_deviation()
    _detail(record_property, f"max |freq - q| = {dev:.4f} over {table.n} daytime targets")
    assert dev <= 0.03


# 9 ------------------------------------------------------------------------

@pytest.mark.criterion(9)
@pytest.mark.slow
def test_bounded_model_beats_ou_on_its_own_data(record_property):
    s = simulate_series(4, n_hours=8760, seed=90)
    n_train = 6000
    train = s.take(slice(0, n_train))
    ll = {m: sde_loglik_split(m, fit(m, train).params, s, n_train)[1] for m in (1, 4)}
    _detail(record_property, f"test LL M4 {ll[4]:.1f} vs M1 {ll[1]:.1f}")
    assert ll[4] > ll[1]


@pytest.mark.criterion(9)
def test_hourly_climatology_beats_unconditional(record_property):
    s = simulate_series(4, n_hours=8760, seed=91)
    train, test = s.take(slice(0, 6000)), s.take(slice(6000, None))
    ll = {m: climatology_loglik(fit_climatology(train, m), test) for m in ("by_hour", "unconditional")}
    _detail(record_property, f"by_hour {ll['by_hour']:.1f} vs unconditional {ll['unconditional']:.1f}")
    assert ll["by_hour"] > ll["unconditional"]


# 10 -----------------------------------------------------------------------

@pytest.mark.criterion(10)
def test_arx_is_discretised_ou(record_property):
    theta = 0.5
    # small observation noise: ARX regresses on a noisy lag, and measurement
    # noise attenuates the autoregressive coefficient toward zero
    p = ParamVector(theta=theta, mu=1.0, sigma_x=30.0, sigma_eps=1.0)
    s = simulate_series(1, p, n_hours=8760, seed=10, nwp=np.full(8760, 300.0))
    a = fit_arx(s)
    _detail(record_property, f"theta1 {a.theta1:.4f} vs exp(-theta) {math.exp(-theta):.4f}")
    assert abs(a.theta1 - math.exp(-theta)) <= 0.02


# 11 -----------------------------------------------------------------------

@pytest.mark.criterion(11)
def test_true_model_residuals_are_white(record_property):
    p = true_params(4)
    s = simulate_series(4, p, n_hours=8760, seed=100)
    z = filter_pass(4, p, s).studentized
    res = residual_acf(z[np.isfinite(z)])
    frac = res.fraction_inside()
    _detail(record_property, f"{frac:.1%} of lags 1-40 inside +-{res.band:.4f}")
    assert frac >= 0.90

