"""Stochastic volatility block.

The log-variance follows a stationary Gaussian AR(1),

    nu_t = mu + rho (nu_{t-1} - mu) + e_t,   e_t ~ N(0, xi2),

and enters through ``log(eps_t^2 + c) = nu_t + log chi^2_1``.  The log
chi-square error is replaced by a 10-component normal mixture, after which
the path is a linear Gaussian state space model drawn by forward filtering,
backward sampling.  Parameters are drawn in the centred parameterisation and
then re-drawn in the non-centred one (ancillarity-sufficiency interweaving).

Priors: mu ~ N(0, 10), (rho + 1) / 2 ~ Beta(25, 5), xi2 ~ Gamma(1/2, rate 1/2)
(equivalently xi ~ N(0, 1)).  The homoskedastic limit uses a single variance
with an IG(0.01, 0.01) prior.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .exceptions import DimensionError
from .model import SvState

# Omori, Chib, Shephard and Nakajima (2007) mixture for log chi^2_1.
MIX_WEIGHTS = np.array([0.00609, 0.04775, 0.13057, 0.20674, 0.22715,
                        0.18842, 0.12047, 0.05591, 0.01575, 0.00115])
MIX_MEANS = np.array([1.92677, 1.34744, 0.73504, 0.02266, -0.85173,
                      -1.97278, -3.46788, -5.55246, -8.68384, -14.65000])
MIX_VARS = np.array([0.11265, 0.17788, 0.26768, 0.40611, 0.62699,
                     0.98583, 1.57469, 2.54498, 4.16591, 7.33342])

RESIDUAL_OFFSET = 1e-8
MU_PRIOR_MEAN = 0.0
MU_PRIOR_VAR = 10.0
RHO_BETA_A = 25.0
RHO_BETA_B = 5.0
XI_PRIOR_VAR = 1.0
HOMO_PRIOR_SHAPE = 0.01
HOMO_PRIOR_RATE = 0.01
MAX_RHO_TRIES = 100

_LOG_W = np.log(MIX_WEIGHTS)
_LOG_SD = 0.5 * np.log(MIX_VARS)


def log_squared(residuals) -> np.ndarray:
    r = np.asarray(residuals, dtype=float)
    return np.log(r * r + RESIDUAL_OFFSET)


def draw_indicators(ystar, log_vol, rng) -> np.ndarray:
    """Mixture component for each period given the current log-volatility."""
    dev = (ystar - log_vol)[:, None] - MIX_MEANS[None, :]
    logp = _LOG_W - _LOG_SD - 0.5 * dev * dev / MIX_VARS
    logp -= logp.max(axis=1, keepdims=True)
    cdf = np.cumsum(np.exp(logp), axis=1)
    u = rng.random(ystar.shape[0]) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=1), len(MIX_WEIGHTS) - 1)


def ffbs(obs, obs_var, mu, rho, state_var, rng=None) -> np.ndarray:
    """Forward-filter backward-sample the AR(1) path given Gaussian observations.

    ``obs_t = nu_t + u_t`` with ``u_t ~ N(0, obs_var_t)``.  With ``rng=None``
    the backward pass uses zero noise and returns the smoothed mean.
    """
    obs = np.asarray(obs, dtype=float)
    obs_var = np.broadcast_to(np.asarray(obs_var, dtype=float), obs.shape)
    T = obs.shape[0]
    m = np.empty(T)
    P = np.empty(T)
    a = mu
    R = state_var / (1.0 - rho * rho)
    for t in range(T):
        if t > 0:
            a = mu + rho * (m[t - 1] - mu)
            R = rho * rho * P[t - 1] + state_var
        S = R + obs_var[t]
        gain = R / S
        m[t] = a + gain * (obs[t] - a)
        P[t] = R * (1.0 - gain)

    z = np.zeros(T) if rng is None else rng.standard_normal(T)
    path = np.empty(T)
    path[T - 1] = m[T - 1] + math.sqrt(P[T - 1]) * z[T - 1]
    for t in range(T - 2, -1, -1):
        # nu_t | nu_{t+1}: combine the filtered N(m_t, P_t) with the transition.
        denom = rho * rho * P[t] + state_var
        g = rho * P[t] / denom
        mean = m[t] + g * (path[t + 1] - mu - rho * (m[t] - mu))
        var = P[t] * state_var / denom
        path[t] = mean + math.sqrt(var) * z[t]
    return path


def ar1_sum_squares(log_vol, mu, rho) -> float:
    """Stationary AR(1) quadratic form, initial observation included."""
    d = log_vol - mu
    innov = d[1:] - rho * d[:-1]
    return float((1.0 - rho * rho) * d[0] ** 2 + innov @ innov)


def draw_state_var(log_vol, mu, rho, rng) -> float:
    """xi2 | path: generalised inverse Gaussian under the Gamma(1/2, 1/2) prior."""
    T = log_vol.shape[0]
    chi = max(ar1_sum_squares(log_vol, mu, rho), 1e-300)
    psi = 1.0 / XI_PRIOR_VAR
    p = 0.5 - T / 2.0
    y = stats.geninvgauss.rvs(p, math.sqrt(chi * psi), random_state=rng)
    return float(max(math.sqrt(chi / psi) * y, 1e-12))


def draw_level(log_vol, rho, state_var, rng) -> float:
    """mu | path, rho, xi2: conjugate Gaussian update."""
    T = log_vol.shape[0]
    c = 1.0 - rho
    prec = 1.0 / MU_PRIOR_VAR + ((1.0 - rho * rho) + (T - 1) * c * c) / state_var
    lin = MU_PRIOR_MEAN / MU_PRIOR_VAR + (
        (1.0 - rho * rho) * log_vol[0] + c * np.sum(log_vol[1:] - rho * log_vol[:-1])
    ) / state_var
    return float(lin / prec + rng.standard_normal() / math.sqrt(prec))


def _log_rho_extra(rho, first_dev, state_var):
    """Beta prior on (rho+1)/2 plus the stationary initial-state density."""
    u = (rho + 1.0) / 2.0
    init_var = state_var / (1.0 - rho * rho)
    return ((RHO_BETA_A - 1) * math.log(u) + (RHO_BETA_B - 1) * math.log(1.0 - u)
            - 0.5 * math.log(init_var) - 0.5 * first_dev**2 / init_var)


def draw_persistence(log_vol, mu, rho, state_var, rng) -> float:
    """rho | path, mu, xi2 by independence Metropolis-Hastings.

    The proposal is the Gaussian implied by the transitions t >= 2 restricted
    to (-1, 1); the acceptance ratio carries the prior and initial-state terms.
    A proposal that keeps landing outside (-1, 1) leaves rho unchanged.
    """
    d = log_vol - mu
    lag = d[:-1]
    ss = float(lag @ lag)
    if ss <= 0:
        return rho
    mean = float(lag @ d[1:]) / ss
    sd = math.sqrt(state_var / ss)
    for _ in range(MAX_RHO_TRIES):
        prop = mean + sd * rng.standard_normal()
        if abs(prop) < 1:
            break
    else:
        return rho
    log_ratio = _log_rho_extra(prop, d[0], state_var) - _log_rho_extra(rho, d[0], state_var)
    return prop if math.log(rng.random()) < log_ratio else rho


def _interweave(ystar, comp, log_vol, mu, rho, state_var, rng):
    """Re-draw (mu, xi) in the non-centred parameterisation and map back."""
    xi = math.sqrt(state_var)
    std_path = (log_vol - mu) / xi
    obs = ystar - MIX_MEANS[comp]
    w = 1.0 / MIX_VARS[comp]
    D = np.column_stack([np.ones_like(std_path), std_path])
    prec = (D * w[:, None]).T @ D + np.diag([1.0 / MU_PRIOR_VAR, 1.0 / XI_PRIOR_VAR])
    lin = (D * w[:, None]).T @ obs + np.array([MU_PRIOR_MEAN / MU_PRIOR_VAR, 0.0])
    L = np.linalg.cholesky(prec)
    mean = np.linalg.solve(prec, lin)
    draw = mean + np.linalg.solve(L.T, rng.standard_normal(2))
    new_mu, new_xi = float(draw[0]), float(draw[1])
    if new_xi == 0.0:
        return log_vol, mu, state_var
    return new_mu + new_xi * std_path, new_mu, max(new_xi * new_xi, 1e-12)


def homoskedastic_params(residuals):
    r = np.asarray(residuals, dtype=float)
    return HOMO_PRIOR_SHAPE + r.shape[0] / 2.0, HOMO_PRIOR_RATE + 0.5 * float(r @ r)


def sv_update(residuals, state: SvState, rng, *, interweave=True, rho_fixed=None) -> SvState:
    """One Gibbs pass over the volatility block given mean-equation residuals.

    A constant-variance state is updated by its conjugate inverse-gamma draw.
    ``rho_fixed`` pins the persistence (the simulation study uses 0).
    """
    residuals = np.asarray(residuals, dtype=float)
    T = residuals.shape[0]
    if T < 2:
        raise DimensionError("volatility update needs at least two residuals")
    if state.constant:
        shape, rate = homoskedastic_params(residuals)
        sigma_sq = rate / max(rng.standard_gamma(shape), 1e-300)
        return SvState.homoskedastic(sigma_sq, T)
    if state.log_vol.shape[0] != T:
        raise DimensionError(f"log-volatility path has {state.log_vol.shape[0]} entries, need {T}")

    ystar = log_squared(residuals)
    mu, rho, xi2 = state.mu, state.rho, state.state_var
    if rho_fixed is not None:
        rho = float(rho_fixed)
    comp = draw_indicators(ystar, state.log_vol, rng)
    log_vol = ffbs(ystar - MIX_MEANS[comp], MIX_VARS[comp], mu, rho, xi2, rng)

    xi2 = draw_state_var(log_vol, mu, rho, rng)
    mu = draw_level(log_vol, rho, xi2, rng)
    if rho_fixed is None:
        rho = draw_persistence(log_vol, mu, rho, xi2, rng)
    if interweave:
        log_vol, mu, xi2 = _interweave(ystar, comp, log_vol, mu, rho, xi2, rng)
    return SvState(log_vol, mu, rho, xi2)


def sv_forecast(state: SvState, horizon: int, rng) -> np.ndarray:
    """Variances for periods T+1..T+horizon simulated from the AR(1)."""
    if int(horizon) < 1:
        raise ValueError("horizon must be >= 1")
    if state.constant:
        return np.full(int(horizon), math.exp(state.mu))
    nu = state.log_vol[-1] if state.log_vol.size else state.mu
    out = np.empty(int(horizon))
    sd = math.sqrt(state.state_var)
    for h in range(int(horizon)):
        nu = state.mu + state.rho * (nu - state.mu) + sd * rng.standard_normal()
        out[h] = math.exp(nu)
    return out
