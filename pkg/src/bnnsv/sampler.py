"""Gibbs sampler for the shallow network with stochastic volatility.

One sweep draws, in order: the linear coefficients and loadings jointly, the
horseshoe scales of the linear block, the MGP components, each neuron's
weights and bias (NUTS, or a prior draw for neurons the MGP has switched
off), the horseshoe scales of every weight block, the activation indicators
and finally the volatility block.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .activations import ALL_KINDS, act_eval
from .exceptions import DimensionError, InsufficientDrawsError, NumericalSingularityError, SweepError
from .hmc import DualAveraging, NeuronTarget, NutsConfig, neuron_nuts_draw, nuts_draw
from .model import (Dataset, HorseshoeState, MgpState, NetworkState, SamplerConfig, SvState,
                    _as_rng, new_network_state)
from .shrinkage import effective_neurons, horseshoe_update, mgp_update
from .sv import sv_update

JITTER = 1e-10
PRECISION_CAP = 1e200
_LOG_2PI = math.log(2.0 * math.pi)
_KIND_CODES = np.array([int(k) for k in ALL_KINDS])


@dataclass
class PredictiveDraw:
    mean: float
    variance: float
    draw: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("predictive variance must be positive")


@dataclass
class PredictiveDraws:
    """Column store of predictive draws; indexing yields :class:`PredictiveDraw`."""

    means: np.ndarray
    variances: np.ndarray
    draws: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float).reshape(-1)
        self.variances = np.asarray(self.variances, dtype=float).reshape(-1)
        self.draws = np.asarray(self.draws, dtype=float).reshape(-1)
        n = self.means.shape[0]
        if self.variances.shape[0] != n or self.draws.shape[0] != n:
            raise DimensionError("means, variances and draws must have equal length")
        if not np.all(self.variances > 0):
            raise ValueError("predictive variances must be positive")

    def __len__(self):
        return self.means.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return PredictiveDraws(self.means[i], self.variances[i], self.draws[i])
        return PredictiveDraw(float(self.means[i]), float(self.variances[i]), float(self.draws[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_list(cls, items):
        items = list(items)
        return cls([d.mean for d in items], [d.variance for d in items], [d.draw for d in items])


# -- storage ----------------------------------------------------------------

_PER_DRAW = ("gamma", "beta", "kappa", "zeta", "delta", "mgp_components", "log_vol",
             "sv_mu", "sv_rho", "sv_state_var", "hs_gamma_global", "hs_gamma_local",
             "hs_kappa_global", "hs_kappa_local", "qstar", "log_lik",
             "accept_stat", "tree_depth", "divergent")
_AUX = ("hs_gamma_aux_local", "hs_gamma_aux_global", "hs_kappa_aux_local", "hs_kappa_aux_global")


@dataclass
class ChainOutput:
    """Retained draws stored as one array per quantity, draw index first.

    Horseshoe auxiliary variables are kept only when the run asked for the
    full state; :meth:`state` then rebuilds every draw exactly, otherwise the
    auxiliaries are filled with ones (they do not enter any prediction).
    """

    gamma: np.ndarray
    beta: np.ndarray
    kappa: np.ndarray
    zeta: np.ndarray
    delta: np.ndarray
    mgp_components: np.ndarray
    log_vol: np.ndarray
    sv_mu: np.ndarray
    sv_rho: np.ndarray
    sv_state_var: np.ndarray
    hs_gamma_global: np.ndarray
    hs_gamma_local: np.ndarray
    hs_kappa_global: np.ndarray
    hs_kappa_local: np.ndarray
    qstar: np.ndarray
    log_lik: np.ndarray
    accept_stat: np.ndarray
    tree_depth: np.ndarray
    divergent: np.ndarray
    config: SamplerConfig
    sv_constant: bool = False
    mgp_a: tuple = (2.0, 3.0)
    step_sizes: Optional[np.ndarray] = None
    final_state: Optional[NetworkState] = None
    wall_time: float = 0.0
    sweep_seconds: float = 0.0
    aux: Optional[dict] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.gamma.shape[0]

    def __len__(self):
        return self.n_draws

    @property
    def K(self) -> int:
        return self.gamma.shape[1]

    @property
    def Q(self) -> int:
        return self.beta.shape[1]

    @property
    def T(self) -> int:
        return self.log_vol.shape[1]

    @classmethod
    def allocate(cls, n, K, Q, T, config, full=False, **kw):
        z = np.zeros
        out = cls(
            gamma=z((n, K)), beta=z((n, Q)), kappa=z((n, K, Q)), zeta=z((n, Q)),
            delta=np.zeros((n, Q), dtype=np.int8), mgp_components=z((n, Q)), log_vol=z((n, T)),
            sv_mu=z(n), sv_rho=z(n), sv_state_var=z(n), hs_gamma_global=z(n),
            hs_gamma_local=z((n, K)), hs_kappa_global=z((n, Q)), hs_kappa_local=z((n, Q, K)),
            qstar=np.zeros(n, dtype=int), log_lik=z(n), accept_stat=np.full((n, Q), np.nan),
            tree_depth=np.zeros((n, Q), dtype=np.int8), divergent=np.zeros((n, Q), dtype=bool),
            config=config, **kw,
        )
        if full:
            out.aux = {"hs_gamma_aux_local": z((n, K)), "hs_gamma_aux_global": z(n),
                       "hs_kappa_aux_local": z((n, Q, K)), "hs_kappa_aux_global": z((n, Q))}
        return out

    def record(self, i, state: NetworkState, qstar, log_lik, diag=None):
        self.gamma[i] = state.gamma
        self.beta[i] = state.beta
        self.kappa[i] = state.kappa
        self.zeta[i] = state.zeta
        self.delta[i] = state.delta
        self.mgp_components[i] = state.mgp.components
        self.log_vol[i] = state.sv.log_vol
        self.sv_mu[i] = state.sv.mu
        self.sv_rho[i] = state.sv.rho
        self.sv_state_var[i] = state.sv.state_var
        self.hs_gamma_global[i] = state.hs_gamma.global_scale_sq
        self.hs_gamma_local[i] = state.hs_gamma.local_scales_sq
        self.hs_kappa_global[i] = state.hs_kappa.global_scale_sq
        self.hs_kappa_local[i] = state.hs_kappa.local_scales_sq
        self.qstar[i] = qstar
        self.log_lik[i] = log_lik
        if diag is not None:
            self.accept_stat[i], self.tree_depth[i], self.divergent[i] = diag
        if self.aux is not None:
            self.aux["hs_gamma_aux_local"][i] = state.hs_gamma.aux_local
            self.aux["hs_gamma_aux_global"][i] = state.hs_gamma.aux_global
            self.aux["hs_kappa_aux_local"][i] = state.hs_kappa.aux_local
            self.aux["hs_kappa_aux_global"][i] = state.hs_kappa.aux_global

    def state(self, s: int) -> NetworkState:
        """Rebuild retained draw ``s`` as a :class:`NetworkState`."""
        K, Q = self.K, self.Q
        if self.aux is not None:
            a = {k: v[s] for k, v in self.aux.items()}
        else:
            a = {"hs_gamma_aux_local": np.ones(K), "hs_gamma_aux_global": 1.0,
                 "hs_kappa_aux_local": np.ones((Q, K)), "hs_kappa_aux_global": np.ones(Q)}
        sv = SvState(self.log_vol[s].copy(), self.sv_mu[s], self.sv_rho[s], self.sv_state_var[s],
                     constant=self.sv_constant)
        return NetworkState(
            gamma=self.gamma[s].copy(), beta=self.beta[s].copy(), kappa=self.kappa[s].copy(),
            zeta=self.zeta[s].copy(), delta=self.delta[s].astype(int),
            hs_gamma=HorseshoeState(self.hs_gamma_global[s], self.hs_gamma_local[s].copy(),
                                    a["hs_gamma_aux_local"], a["hs_gamma_aux_global"]),
            hs_kappa=HorseshoeState(self.hs_kappa_global[s].copy(), self.hs_kappa_local[s].copy(),
                                    a["hs_kappa_aux_local"], a["hs_kappa_aux_global"]),
            mgp=MgpState(self.mgp_components[s].copy(), *self.mgp_a),
            sv=sv,
        )

    def conditional_means(self, X) -> np.ndarray:
        """Conditional mean of every retained draw at each row of ``X``: (S, n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.K:
            raise DimensionError(f"expected {self.K} covariates, got {X.shape[1]}")
        lin = self.gamma @ X.T
        Z = np.einsum("nk,skq->snq", X, self.kappa) + self.zeta[:, None, :]
        H = _hidden_by_kind(Z, self.delta[:, None, :])
        return lin + np.einsum("snq,sq->sn", H, self.beta)

    def qstar_ci(self) -> int:
        from .shrinkage import active_neurons_ci
        return active_neurons_ci(self.beta)


def _hidden_by_kind(Z, kinds):
    out = np.empty_like(Z)
    kinds = np.broadcast_to(kinds, Z.shape)
    for k in _KIND_CODES:
        m = kinds == k
        if m.any():
            out[m] = act_eval(int(k), Z[m])
    return out


# -- individual conditionals -------------------------------------------------

def _variances(state: NetworkState, T: int) -> np.ndarray:
    v = state.sv.variances
    if v.shape[0] != T:
        raise DimensionError(f"volatility path has {v.shape[0]} periods, data has {T}")
    return v


def _prior_precision(state: NetworkState, linear_only: bool) -> np.ndarray:
    prec = 1.0 / state.hs_gamma.prior_variance()
    if not linear_only:
        prec = np.concatenate([prec, state.mgp.precisions])
    return np.clip(prec, 1.0 / PRECISION_CAP, PRECISION_CAP)


def gaussian_posterior_draw(design, y, weights, prior_prec, rng):
    """Draw from N(V d' W y, V), V = (d' W d + diag(prior_prec))^-1.

    The precision is rescaled to unit diagonal before the Cholesky
    factorisation; a failed factorisation is retried once with a small
    jitter.  With ``rng=None`` the posterior mean is returned.
    """
    dw = design * weights[:, None]
    P = dw.T @ design
    P[np.diag_indices_from(P)] += prior_prec
    b = dw.T @ y
    d = 1.0 / np.sqrt(np.diag(P))
    Ps = P * d[:, None] * d[None, :]
    try:
        L = linalg.cholesky(Ps, lower=True, check_finite=False)
    except linalg.LinAlgError:
        Ps[np.diag_indices_from(Ps)] += JITTER
        try:
            L = linalg.cholesky(Ps, lower=True, check_finite=False)
        except linalg.LinAlgError as err:
            cond = float(np.linalg.cond(Ps))
            raise NumericalSingularityError(
                f"posterior precision is not positive definite (condition ~{cond:.3g})", cond
            ) from err
    if not np.all(np.isfinite(L)):
        cond = float(np.linalg.cond(Ps)) if np.all(np.isfinite(Ps)) else math.inf
        raise NumericalSingularityError("posterior precision factor is not finite", cond)
    mean = d * linalg.cho_solve((L, True), d * b, check_finite=False)
    if rng is None:
        return mean
    z = rng.standard_normal(mean.shape[0])
    return mean + d * linalg.solve_triangular(L.T, z, lower=False, check_finite=False)


def design_matrix(state: NetworkState, X, linear_only=False) -> np.ndarray:
    """Regressors for the joint draw: covariates, then neuron outputs."""
    X = np.asarray(X, dtype=float)
    return X if linear_only else np.hstack([X, state.hidden(X)])


def draw_theta(state: NetworkState, data: Dataset, rng, linear_only=False):
    """Joint Gaussian draw of (gamma, beta) given the nonlinear part.

    Returns ``(gamma, beta)``; in linear mode ``beta`` is returned unchanged.
    """
    D = design_matrix(state, data.X, linear_only)
    w = 1.0 / _variances(state, data.T)
    theta = gaussian_posterior_draw(D, data.y, w, _prior_precision(state, linear_only), rng)
    K = state.K
    if linear_only:
        return theta, state.beta.copy()
    return theta[:K], theta[K:]


def activation_log_weights(residual, beta_q, z, weights) -> np.ndarray:
    """Normalised log probabilities of the four kinds for one neuron."""
    cand = np.stack([act_eval(int(k), z) for k in _KIND_CODES])
    return _log_weights_from_candidates(residual, beta_q, cand, weights)


def _normalise(lw):
    m = lw.max()
    return lw - (m + math.log(np.exp(lw - m).sum()))


def _log_weights_from_candidates(residual, beta_q, cand, weights):
    r = residual[None, :] - beta_q * cand
    lw = math.log(0.25) - 0.5 * ((r * r) @ weights)
    return _normalise(lw)


def _categorical(log_probs, rng) -> int:
    p = np.exp(log_probs)
    return int(_KIND_CODES[min(np.searchsorted(np.cumsum(p), rng.random() * p.sum()), 3)])


def draw_activation(q, residual_excl_q, state: NetworkState, data: Dataset, rng) -> int:
    """Draw neuron ``q``'s activation code under a uniform prior."""
    z = data.X @ state.kappa[:, q] + state.zeta[q]
    w = 1.0 / _variances(state, data.T)
    lw = activation_log_weights(np.asarray(residual_excl_q, dtype=float), state.beta[q], z, w)
    return _categorical(lw, rng)


def common_activation_log_weights(residual_linear, state: NetworkState, X, weights):
    """Log probabilities of one activation shared by all neurons.

    Each candidate switches every neuron to the same kind and is scored by
    the full Gaussian likelihood of the residual after the linear part.
    """
    Z = state.neuron_inputs(X)
    lw = np.empty(len(_KIND_CODES))
    for i, k in enumerate(_KIND_CODES):
        r = residual_linear - act_eval(int(k), Z) @ state.beta
        lw[i] = math.log(0.25) - 0.5 * float(np.sum(weights * r * r))
    return _normalise(lw)


def draw_common_activation(residual_linear, state, data, rng) -> int:
    w = 1.0 / _variances(state, data.T)
    return _categorical(common_activation_log_weights(residual_linear, state, data.X, w), rng)


def log_likelihood(state: NetworkState, data: Dataset) -> float:
    v = _variances(state, data.T)
    r = data.y - (data.X @ state.gamma + state.hidden(data.X) @ state.beta)
    return float(-0.5 * np.sum(_LOG_2PI + np.log(v) + r * r / v))


# -- sweep -------------------------------------------------------------------

class SweepKernel:
    """Per-chain tuning state carried across sweeps (NUTS step sizes)."""

    def __init__(self, Q, config: SamplerConfig, compiled=True):
        self.compiled = compiled
        self.nuts = NutsConfig(target_accept=config.nuts_target_accept,
                               max_tree_depth=int(config.nuts_max_depth),
                               adapt_steps=int(config.n_burn))
        self.adapt = [DualAveraging(target_accept=config.nuts_target_accept) for _ in range(Q)]
        self.accept = np.full(Q, np.nan)
        self.depth = np.zeros(Q, dtype=np.int8)
        self.divergent = np.zeros(Q, dtype=bool)

    def freeze(self):
        for a in self.adapt:
            a.freeze()

    @property
    def step_sizes(self):
        return np.array([a.step_size if a.initialised else np.nan for a in self.adapt])


def gibbs_sweep(state: NetworkState, data: Dataset, config: SamplerConfig, rng,
                kernel: Optional[SweepKernel] = None) -> NetworkState:
    """One full pass over every conditional; returns a new state."""
    s = state.copy()
    X, y = data.X, data.y
    linear = config.linear_only
    if kernel is None:
        kernel = SweepKernel(s.Q, config)

    s.gamma, s.beta = draw_theta(s, data, rng, linear_only=linear)
    s.hs_gamma = horseshoe_update(s.gamma, s.hs_gamma, rng)

    if not linear:
        s.mgp = mgp_update(s.beta, s.mgp, rng)
        w = 1.0 / _variances(s, data.T)
        prior_var_kappa = s.hs_kappa.prior_variance()
        mgp_var = s.mgp.variances
        H = s.hidden(X)
        lin = X @ s.gamma
        kernel.accept[:] = np.nan
        kernel.depth[:] = 0
        kernel.divergent[:] = False
        for q in range(s.Q):
            if mgp_var[q] > config.mgp_threshold:
                partial = y - lin - H @ s.beta + s.beta[q] * H[:, q]
                target = NeuronTarget(q, partial, s, X, w)
                current = np.append(s.kappa[:, q], s.zeta[q])
                if kernel.compiled:
                    new, diag = neuron_nuts_draw(target, current, kernel.nuts, kernel.adapt[q], rng)
                else:
                    new, diag = nuts_draw(current, target, None, kernel.nuts, kernel.adapt[q], rng,
                                          scale=target.scale())
                kernel.accept[q] = diag.accept_stat
                kernel.depth[q] = diag.tree_depth
                kernel.divergent[q] = diag.divergent
            else:
                new = np.append(rng.standard_normal(s.K) * np.sqrt(prior_var_kappa[q]),
                                rng.standard_normal())
            s.kappa[:, q] = new[:-1]
            s.zeta[q] = new[-1]
            H[:, q] = act_eval(int(s.delta[q]), X @ s.kappa[:, q] + s.zeta[q])
        s.hs_kappa = horseshoe_update(s.kappa.T, s.hs_kappa, rng)

        if config.common_activation:
            m = draw_common_activation(y - lin, s, data, rng)
            s.delta[:] = m
        else:
            Z = s.neuron_inputs(X)
            cand = np.stack([act_eval(int(k), Z) for k in _KIND_CODES])
            H = cand[s.delta - 1, :, np.arange(s.Q)].T.copy()
            for q in range(s.Q):
                partial = y - lin - H @ s.beta + s.beta[q] * H[:, q]
                lw = _log_weights_from_candidates(partial, s.beta[q], cand[:, :, q], w)
                s.delta[q] = _categorical(lw, rng)
                H[:, q] = cand[s.delta[q] - 1, :, q]

    resid = y - X @ s.gamma
    if not linear:
        resid = resid - s.hidden(X) @ s.beta
    s.sv = sv_update(resid, s.sv, rng, interweave=config.sv_interweave,
                     rho_fixed=config.sv_rho_fixed)
    return s


def _initial_state(data: Dataset, config: SamplerConfig, rng) -> NetworkState:
    Q = data.K if config.Q is None else int(config.Q)
    s = new_network_state(data.K, Q, config, rng, y=data.y)
    if config.common_activation:
        s.delta[:] = s.delta[0]
    return s


def run_chain(data: Dataset, config: SamplerConfig, rng=None,
              init_state: Optional[NetworkState] = None, progress=None) -> ChainOutput:
    """Burn-in then retained sweeps; adaptation stops when burn-in ends.

    ``rng`` defaults to a generator seeded with ``config.seed``.  With
    ``init_state`` the chain starts from that state (warm start); its
    volatility path is reset when the data length differs.
    """
    if data.T < 2:
        raise DimensionError("fitting needs at least two observations")
    rng = _as_rng(config.seed if rng is None else rng)
    if init_state is None:
        state = _initial_state(data, config, rng)
    else:
        state = init_state.copy()
        if state.K != data.K:
            raise DimensionError("warm-start state has a different number of covariates")
        if state.sv.log_vol.shape[0] != data.T:
            old = state.sv
            fill = old.log_vol[-1] if old.log_vol.size else old.mu
            path = np.concatenate([old.log_vol[: data.T],
                                   np.full(max(data.T - old.log_vol.size, 0), fill)])
            state.sv = SvState(path, old.mu, old.rho, old.state_var, old.constant)
    state.validate()

    kernel = SweepKernel(state.Q, config)
    n_keep = config.n_retained
    out = ChainOutput.allocate(n_keep, state.K, state.Q, data.T, config,
                               full=config.store_full_state, sv_constant=state.sv.constant,
                               mgp_a=(state.mgp.a1, state.mgp.a2))
    start = time.perf_counter()
    j = 0
    for i in range(config.n_draws):
        if i == config.n_burn:
            kernel.freeze()
        try:
            state = gibbs_sweep(state, data, config, rng, kernel)
        except Exception as err:
            raise SweepError(i, err) from err
        if i >= config.n_burn and (i - config.n_burn) % config.thin == 0:
            qstar = 0 if config.linear_only else effective_neurons(state.mgp, config.neuron_threshold)
            out.record(j, state, qstar, log_likelihood(state, data),
                       (kernel.accept, kernel.depth, kernel.divergent))
            j += 1
        if progress is not None:
            progress(i)
    out.wall_time = time.perf_counter() - start
    out.sweep_seconds = out.wall_time / config.n_draws
    out.step_sizes = kernel.step_sizes
    out.final_state = state
    return out


# -- prediction --------------------------------------------------------------

def forecast_variances(chain: ChainOutput, horizon: int, rng) -> np.ndarray:
    """Variance of period T+horizon for every retained draw.

    Iterates the AR(1) for the log-variance forward ``horizon`` steps from
    each draw's last in-sample value.
    """
    if int(horizon) < 1:
        raise ValueError("horizon must be >= 1")
    if chain.sv_constant:
        return np.exp(chain.sv_mu)
    mu, rho = chain.sv_mu, chain.sv_rho
    sd = np.sqrt(chain.sv_state_var)
    nu = chain.log_vol[:, -1].copy()
    for _ in range(int(horizon)):
        nu = mu + rho * (nu - mu) + sd * rng.standard_normal(nu.shape[0])
    return np.exp(nu)


def predict(chain: ChainOutput, x_new, horizon: int = 1, rng=None) -> PredictiveDraws:
    """One predictive draw per retained sweep at covariate vector ``x_new``."""
    if int(horizon) < 1:
        raise ValueError("horizon must be >= 1")
    if chain.n_draws == 0:
        raise InsufficientDrawsError("chain has no retained draws")
    rng = _as_rng(rng)
    x_new = np.asarray(x_new, dtype=float).reshape(-1)
    means = chain.conditional_means(x_new[None, :])[:, 0]
    var = forecast_variances(chain, horizon, rng)
    draws = means + np.sqrt(var) * rng.standard_normal(means.shape[0])
    return PredictiveDraws(means, var, draws)
