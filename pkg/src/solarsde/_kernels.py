"""Compiled inner loops for the filter and path simulation.

All kernels work in Lamperti coordinates on a state ``(z, a)``; for
one-dimensional models ``a`` is carried along with zero drift and zero
noise. Parameters arrive as a dense array in ``models.PARAM_NAMES`` order.
"""

import math

import numpy as np
from numba import njit

THETA, MU, SIGMA_X, SIGMA_EPS, BETA, GAMMA, THETA_A, MU_A, SIGMA_A, OMEGA1, OMEGA2 = range(11)
KIND_ADDITIVE, KIND_LINEAR, KIND_LOGISTIC = 0, 1, 2
KIND_CODES = {"additive": KIND_ADDITIVE, "linear": KIND_LINEAR, "logistic": KIND_LOGISTIC}

DELTA = 0.01
EPS_STATE = 1e-6
LOGIT_LO = math.log(EPS_STATE) - math.log1p(-EPS_STATE)
LOG_LO = math.log(EPS_STATE)
LOG_HI = -math.log(EPS_STATE)

# Step control for the moment ODEs: the covariance equation decays at twice
# the drift slope, and RK4 stays within ~1e-9 relative error per step while
# that rate times the step is below MAX_STEP_RATE. The slope is re-evaluated
# every step, so a start near a boundary (steep in Lamperti coordinates)
# costs a few hundred small steps rather than an unstable large one.
MAX_STEP_RATE = 0.04
MAX_STEPS = 2000  # per observation interval; beyond this the likelihood is treated as infinite

STATUS_OK = 0
STATUS_NONFINITE_PREDICT = 1
STATUS_NONPOSITIVE_R = 2


@njit(cache=True)
def target(model, pv, nwp, mx, hour):
    if model == 1:
        return pv[MU] * nwp
    scale = pv[MU] - pv[OMEGA1] * math.sin(2.0 * math.pi * hour / 24.0 + pv[OMEGA2])
    return (nwp + pv[BETA]) / (pv[GAMMA] * mx + DELTA) * scale


@njit(cache=True)
def state_from_z(kind, z, s):
    """Return (x, g, g_x, g_xx, 1/g) at the clamped state ``psi_inv(z)``."""
    if kind == KIND_ADDITIVE:
        return s * z, s, 0.0, 0.0, 1.0 / s
    sz = s * z
    if kind == KIND_LINEAR:
        sz = min(max(sz, LOG_LO), LOG_HI)
        x = math.exp(sz)
        return x, s * x, s, 0.0, 1.0 / (s * x)
    sz = min(max(sz, LOGIT_LO), -LOGIT_LO)
    if sz >= 0:
        e = math.exp(-sz)
        x = 1.0 / (1.0 + e)
        one_minus = e / (1.0 + e)
    else:
        e = math.exp(sz)
        x = e / (1.0 + e)
        one_minus = 1.0 / (1.0 + e)
    g = s * x * one_minus
    return x, g, s * (one_minus - x), -2.0 * s, 1.0 / g


@njit(cache=True)
def drift_z(model, kind, stoch, pv, z, a, nwp, mx, hour):
    """Transformed drift and its Jacobian: (f_z, f_a, J_zz, J_za, J_aa)."""
    s = pv[SIGMA_X]
    x, g, gx, gxx, inv_g = state_from_z(kind, z, s)
    rate = math.exp(a) if stoch else pv[THETA]
    f = rate * (target(model, pv, nwp, mx, hour) - x)
    fz = f * inv_g - 0.5 * gx
    jzz = -rate - f * gx * inv_g - 0.5 * g * gxx
    if stoch:
        return fz, pv[THETA_A] * (pv[MU_A] - a), jzz, f * inv_g, -pv[THETA_A]
    return fz, 0.0, jzz, 0.0, 0.0


@njit(cache=True)
def _moment_rhs(model, kind, stoch, pv, m, P, nwp, mx, hour, dm, dP):
    """Moment ODE right-hand side; returns the step-size rate 2 max|J_ii|."""
    fz, fa, jzz, jza, jaa = drift_z(model, kind, stoch, pv, m[0], m[1], nwp, mx, hour)
    dm[0] = fz
    dm[1] = fa
    # dP = J P + P J^T + G G^T with J = [[jzz, jza], [0, jaa]]
    jp00 = jzz * P[0, 0] + jza * P[1, 0]
    jp01 = jzz * P[0, 1] + jza * P[1, 1]
    jp10 = jaa * P[1, 0]
    jp11 = jaa * P[1, 1]
    dP[0, 0] = 2.0 * jp00 + 1.0
    dP[0, 1] = jp01 + jp10
    dP[1, 0] = dP[0, 1]
    dP[1, 1] = 2.0 * jp11 + (pv[SIGMA_A] ** 2 if stoch else 0.0)
    return 2.0 * max(abs(jzz), abs(jaa))


@njit(cache=True)
def step_size(rate, h_max, remaining):
    """Largest step with ``rate * h <= MAX_STEP_RATE``, capped at ``h_max``."""
    h = h_max
    if rate * h > MAX_STEP_RATE:
        h = MAX_STEP_RATE / rate
    if not h > 0.0:  # NaN or zero rate underflow
        h = h_max
    return min(h, remaining)


@njit(cache=True)
def _rk4_scalar(model, kind, pv, m, P, nwp, mx, hour, duration, h_max):
    # one-dimensional models: dP = 2 J P + 1, no rate state
    z = m[0]
    v = P[0, 0]
    t = 0.0
    steps = 0
    while duration - t > 1e-12 * duration:
        if steps == MAX_STEPS:
            m[0] = np.nan
            return
        f1, _a, j1, _b, _c = drift_z(model, kind, False, pv, z, 0.0, nwp, mx, hour)
        h = step_size(2.0 * abs(j1), h_max, duration - t)
        q1 = 2.0 * j1 * v + 1.0
        f2, _a, j2, _b, _c = drift_z(model, kind, False, pv, z + 0.5 * h * f1, 0.0, nwp, mx, hour)
        q2 = 2.0 * j2 * (v + 0.5 * h * q1) + 1.0
        f3, _a, j3, _b, _c = drift_z(model, kind, False, pv, z + 0.5 * h * f2, 0.0, nwp, mx, hour)
        q3 = 2.0 * j3 * (v + 0.5 * h * q2) + 1.0
        f4, _a, j4, _b, _c = drift_z(model, kind, False, pv, z + h * f3, 0.0, nwp, mx, hour)
        q4 = 2.0 * j4 * (v + h * q3) + 1.0
        z += h / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
        v += h / 6.0 * (q1 + 2.0 * q2 + 2.0 * q3 + q4)
        t += h
        steps += 1
    m[0] = z
    P[0, 0] = v


@njit(cache=True)
def rk4_moments(model, kind, stoch, pv, m, P, nwp, mx, hour, duration, min_substeps):
    """Integrate mean/covariance ODEs in place over ``duration`` hours.

    Steps are at most ``duration / min_substeps`` and shrink where the drift
    slope is steep. If MAX_STEPS is exhausted the mean is set to NaN.
    """
    h_max = duration / max(min_substeps, 1)
    if not stoch:
        _rk4_scalar(model, kind, pv, m, P, nwp, mx, hour, duration, h_max)
        return
    k1m = np.empty(2); k2m = np.empty(2); k3m = np.empty(2); k4m = np.empty(2)
    k1P = np.empty((2, 2)); k2P = np.empty((2, 2)); k3P = np.empty((2, 2)); k4P = np.empty((2, 2))
    mt = np.empty(2)
    Pt = np.empty((2, 2))
    t = 0.0
    steps = 0
    while duration - t > 1e-12 * duration:
        if steps == MAX_STEPS:
            m[0] = np.nan
            return
        rate = _moment_rhs(model, kind, stoch, pv, m, P, nwp, mx, hour, k1m, k1P)
        h = step_size(rate, h_max, duration - t)
        for i in range(2):
            mt[i] = m[i] + 0.5 * h * k1m[i]
            for j in range(2):
                Pt[i, j] = P[i, j] + 0.5 * h * k1P[i, j]
        _moment_rhs(model, kind, stoch, pv, mt, Pt, nwp, mx, hour, k2m, k2P)
        for i in range(2):
            mt[i] = m[i] + 0.5 * h * k2m[i]
            for j in range(2):
                Pt[i, j] = P[i, j] + 0.5 * h * k2P[i, j]
        _moment_rhs(model, kind, stoch, pv, mt, Pt, nwp, mx, hour, k3m, k3P)
        for i in range(2):
            mt[i] = m[i] + h * k3m[i]
            for j in range(2):
                Pt[i, j] = P[i, j] + h * k3P[i, j]
        _moment_rhs(model, kind, stoch, pv, mt, Pt, nwp, mx, hour, k4m, k4P)
        for i in range(2):
            m[i] += h / 6.0 * (k1m[i] + 2.0 * k2m[i] + 2.0 * k3m[i] + k4m[i])
            for j in range(2):
                P[i, j] += h / 6.0 * (k1P[i, j] + 2.0 * k2P[i, j] + 2.0 * k3P[i, j] + k4P[i, j])
        t += h
        steps += 1
    P[0, 1] = 0.5 * (P[0, 1] + P[1, 0])
    P[1, 0] = P[0, 1]


@njit(cache=True)
def observation_z(model, kind, pv, z, mx):
    """Predicted observation and its derivative with respect to z."""
    scale = 1.0 if model == 1 else pv[GAMMA] * mx
    x, g, gx, gxx, inv_g = state_from_z(kind, z, pv[SIGMA_X])
    return scale * x, scale * g


@njit(cache=True)
def kalman_update(pv, m, P, y, yhat, c):
    """Joseph-form scalar-observation update in place; returns (eps, R)."""
    S = pv[SIGMA_EPS] ** 2
    R = c * c * P[0, 0] + S
    if not R > 0.0:
        return y - yhat, R
    eps = y - yhat
    k0 = P[0, 0] * c / R
    k1 = P[1, 0] * c / R
    m[0] += k0 * eps
    m[1] += k1 * eps
    # (I - K c) P (I - K c)^T + K S K^T with c = [c, 0]
    a00 = 1.0 - k0 * c
    a10 = -k1 * c
    p00, p01, p11 = P[0, 0], P[0, 1], P[1, 1]
    n00 = a00 * a00 * p00 + k0 * k0 * S
    n01 = a00 * (a10 * p00 + p01) + k0 * k1 * S
    n11 = a10 * a10 * p00 + 2.0 * a10 * p01 + p11 + k1 * k1 * S
    P[0, 0] = n00
    P[0, 1] = n01
    P[1, 0] = n01
    P[1, 1] = n11
    return eps, R


@njit(cache=True)
def ekf_pass(model, kind, stoch, pv, y, missing, nwp, mx, hour, m0, P0, substeps,
             innov, rvar, yhat_out, m_filt, P_filt):
    """Run the filter over all observations.

    Index 0 holds the initial state (no likelihood contribution). Returns
    (neg_log_lik, n_used, status, failing_index).
    """
    n = y.shape[0]
    m = m0.copy()
    P = P0.copy()
    m_filt[0, :] = m
    P_filt[0, :, :] = P
    innov[0] = np.nan
    rvar[0] = np.nan
    yhat_out[0] = np.nan
    nll = 0.0
    used = 0
    log2pi = math.log(2.0 * math.pi)
    for k in range(1, n):
        rk4_moments(model, kind, stoch, pv, m, P, nwp[k], mx[k], hour[k], 1.0, substeps)
        if not (np.isfinite(m[0]) and np.isfinite(m[1]) and np.isfinite(P[0, 0]) and np.isfinite(P[1, 1])):
            return nll, used, STATUS_NONFINITE_PREDICT, k
        yhat, c = observation_z(model, kind, pv, m[0], mx[k])
        yhat_out[k] = yhat
        if missing[k]:
            innov[k] = np.nan
            rvar[k] = c * c * P[0, 0] + pv[SIGMA_EPS] ** 2
        else:
            eps, R = kalman_update(pv, m, P, y[k], yhat, c)
            if not R > 0.0:
                return nll, used, STATUS_NONPOSITIVE_R, k
            innov[k] = eps
            rvar[k] = R
            nll += 0.5 * (log2pi + math.log(R) + eps * eps / R)
            used += 1
        m_filt[k, :] = m
        P_filt[k, :, :] = P
    return nll, used, STATUS_OK, -1


@njit(cache=True)
def ekf_nll(model, kind, stoch, pv, y, missing, nwp, mx, hour, m0, P0, substeps):
    """Negative log-likelihood only (no per-step storage)."""
    n = y.shape[0]
    m = m0.copy()
    P = P0.copy()
    nll = 0.0
    log2pi = math.log(2.0 * math.pi)
    for k in range(1, n):
        rk4_moments(model, kind, stoch, pv, m, P, nwp[k], mx[k], hour[k], 1.0, substeps)
        if not (np.isfinite(m[0]) and np.isfinite(m[1]) and np.isfinite(P[0, 0]) and np.isfinite(P[1, 1])):
            return np.inf
        if missing[k]:
            continue
        yhat, c = observation_z(model, kind, pv, m[0], mx[k])
        eps, R = kalman_update(pv, m, P, y[k], yhat, c)
        if not R > 0.0:
            return np.inf
        nll += 0.5 * (log2pi + math.log(R) + eps * eps / R)
    return nll


@njit(cache=True)
def em_advance(model, kind, stoch, pv, z, a, nwp, mx, hour, h, noise, cap):
    """Euler-Maruyama steps in place; ``noise`` has shape (steps, 2, n_paths)."""
    steps = noise.shape[0]
    n = z.shape[0]
    sq = math.sqrt(h)
    sig_a = pv[SIGMA_A]
    for j in range(steps):
        for i in range(n):
            fz, fa, jzz, jza, jaa = drift_z(model, kind, stoch, pv, z[i], a[i], nwp, mx, hour)
            if fz > cap:
                fz = cap
            elif fz < -cap:
                fz = -cap
            z[i] += fz * h + sq * noise[j, 0, i]
            if stoch:
                a[i] += fa * h + sig_a * sq * noise[j, 1, i]


@njit(cache=True)
def em_advance_record(model, kind, stoch, pv, z, a, nwp, mx, hour, h, noise, cap, out_z, out_a, offset):
    """As :func:`em_advance` but stores the state after every step."""
    steps = noise.shape[0]
    n = z.shape[0]
    sq = math.sqrt(h)
    sig_a = pv[SIGMA_A]
    for j in range(steps):
        for i in range(n):
            fz, fa, jzz, jza, jaa = drift_z(model, kind, stoch, pv, z[i], a[i], nwp, mx, hour)
            if fz > cap:
                fz = cap
            elif fz < -cap:
                fz = -cap
            z[i] += fz * h + sq * noise[j, 0, i]
            if stoch:
                a[i] += fa * h + sig_a * sq * noise[j, 1, i]
            out_z[i, offset + j] = z[i]
            out_a[i, offset + j] = a[i]


@njit(cache=True)
def drift_z_array(model, kind, stoch, pv, z, a, nwp, mx, hour, out):
    """Transformed X-drift evaluated on an array of z values (fixed ``a``)."""
    for i in range(z.shape[0]):
        fz, fa, jzz, jza, jaa = drift_z(model, kind, stoch, pv, z[i], a, nwp, mx, hour)
        out[i] = fz
