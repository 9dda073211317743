"""Independent reference computations used by several test modules."""

import math

import numpy as np


def ou_kalman_loglik(y, theta, level, sigma, sigma_eps, x0, p0, dt=1.0):
    """Exact Kalman filter for an OU state observed with additive noise.

    The state transition is the exact discretisation of
    dX = theta (level - X) dt + sigma dW over ``dt``. The first observation
    only sets the initial state, so it adds no likelihood term.
    """
    a = math.exp(-theta * dt)
    q = sigma ** 2 * (1 - a * a) / (2 * theta)
    m, P = x0, p0
    ll = 0.0
    for obs in y[1:]:
        m = level + a * (m - level)
        P = a * a * P + q
        if np.isnan(obs):
            continue
        R = P + sigma_eps ** 2
        e = obs - m
        ll += -0.5 * (math.log(2 * math.pi * R) + e * e / R)
        K = P / R
        m += K * e
        P *= 1 - K
    return ll


def ks_distance(cdf, samples):
    """Two-sided Kolmogorov-Smirnov statistic of samples against a CDF callable."""
    x = np.sort(np.asarray(samples))
    n = x.size
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def fp_vs_mc_ks(model, horizons, n_paths=100_000, step=0.01, seed=7, z_var=0.05):
    """KS distance between the Fokker-Planck density and an Euler-Maruyama sample.

    Both start from the same Gaussian in Lamperti coordinates at a mid-morning
    origin of a simulated series and use its exogenous inputs.
    """
    from solarsde.density import DensityGrid, Exogenous, fokker_planck_solve, forecast_grid, simulate_paths
    from solarsde.lamperti import TransformedModel
    from solarsde.models import get_model
    from solarsde.synthetic import simulate_series, true_params

    spec = get_model(model)
    p = true_params(model)
    s = p["sigma_x"]
    tm = TransformedModel(spec)
    exog = Exogenous.from_series(simulate_series(model, n_hours=24 * 200, seed=5))
    origin = 24 * 180 + 5
    z0 = 300.0 / s if spec.diffusion_kind == "additive" else float(tm.psi(0.5, s))
    zs = z0 + math.sqrt(z_var) * np.random.default_rng(seed + 1).standard_normal(n_paths)
    x0 = tm.psi_inv(zs, s)[:, None]
    out = {}
    for h in horizons:
        support = forecast_grid(spec, p, np.array([z0]), np.array([[z_var]]), origin, h, exog)
        init = DensityGrid.gaussian(support, z0, z_var, model=spec, sigma_x=s)
        fp = fokker_planck_solve(spec, p, init, float(origin), float(origin + h), exog)
        ens = simulate_paths(spec, p, x0, float(origin), float(origin + h), n_paths, step, seed, exog,
                             record="terminal")
        out[h] = ks_distance(fp.cdf_at, ens.transformed[:, -1, 0])
    return out
