"""Domain types shared by the sampler, the simulator and the evaluation code.

The regression is

    y_t = x_t' gamma + sum_q beta_q h_q(x_t' kappa_q + zeta_q) + eps_t,
    eps_t ~ N(0, sigma_t^2),

with one activation ``h_q`` per neuron chosen from :class:`ActivationKind`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .activations import ALL_KINDS, ActivationKind, act_eval, apply_columns
from .exceptions import ConfigError, DimensionError, StateCorruptionError


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass
class Dataset:
    """Response vector ``y`` (T,) and covariate matrix ``X`` (T, K)."""

    y: np.ndarray
    X: np.ndarray
    timestamps: Optional[np.ndarray] = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        self.X = X
        if X.ndim != 2 or X.shape[0] != self.y.shape[0]:
            raise DimensionError(
                f"X must be (T, K) with T = len(y) = {self.y.shape[0]}, got {X.shape}"
            )
        if self.y.shape[0] < 1:
            raise DimensionError("a dataset needs at least one observation")
        if X.shape[1] < 1:
            raise DimensionError("a dataset needs at least one covariate")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(X))):
            raise ValueError("dataset contains non-finite entries")
        if self.timestamps is None:
            self.timestamps = np.arange(self.y.shape[0])
        else:
            self.timestamps = np.asarray(self.timestamps)
            if self.timestamps.shape[0] != self.y.shape[0]:
                raise DimensionError("timestamps must have one label per observation")

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def K(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.y[rows], self.X[rows], self.timestamps[rows])


@dataclass
class HorseshoeState:
    """Horseshoe scales for one coefficient block, or a stack of blocks.

    For a single block of size n, ``global_scale_sq`` and ``aux_global`` are
    scalars and the local arrays have shape (n,).  A stack of B blocks (one
    per neuron) stores shape (B,) globals and (B, n) locals.
    """

    global_scale_sq: np.ndarray
    local_scales_sq: np.ndarray
    aux_local: np.ndarray
    aux_global: np.ndarray

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, np.asarray(getattr(self, f.name), dtype=float))

    @classmethod
    def initial(cls, n: int, n_blocks: Optional[int] = None) -> "HorseshoeState":
        if n_blocks is None:
            return cls(1.0, np.ones(n), np.ones(n), 1.0)
        return cls(
            np.ones(n_blocks), np.ones((n_blocks, n)), np.ones((n_blocks, n)), np.ones(n_blocks)
        )

    @property
    def is_stack(self) -> bool:
        return self.local_scales_sq.ndim == 2

    @property
    def size(self) -> int:
        return self.local_scales_sq.shape[-1]

    def prior_variance(self) -> np.ndarray:
        """Coefficient prior variances ``lambda^2 * phi_j^2``."""
        return np.asarray(self.global_scale_sq)[..., None] * self.local_scales_sq if self.is_stack \
            else self.global_scale_sq * self.local_scales_sq

    def block(self, b: int) -> "HorseshoeState":
        if not self.is_stack:
            raise DimensionError("block() needs a stacked horseshoe state")
        return HorseshoeState(
            float(self.global_scale_sq[b]),
            self.local_scales_sq[b].copy(),
            self.aux_local[b].copy(),
            float(self.aux_global[b]),
        )

    def copy(self) -> "HorseshoeState":
        return HorseshoeState(*(np.array(getattr(self, f.name)) for f in fields(self)))

    def validate(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.all(np.isfinite(v)) or not np.all(v > 0):
                raise StateCorruptionError(f"horseshoe {f.name} must be finite and > 0")
        if self.aux_local.shape != self.local_scales_sq.shape:
            raise DimensionError("aux_local and local_scales_sq shapes differ")
        if self.is_stack and (
            self.global_scale_sq.shape != (self.local_scales_sq.shape[0],)
            or self.aux_global.shape != self.global_scale_sq.shape
        ):
            raise DimensionError("stacked horseshoe globals must have one entry per block")


@dataclass
class MgpState:
    """Multiplicative gamma process on the neuron loadings."""

    components: np.ndarray
    a1: float = 2.0
    a2: float = 3.0

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float).reshape(-1)

    @property
    def Q(self) -> int:
        return self.components.shape[0]

    @property
    def precisions(self) -> np.ndarray:
        """Per-neuron precisions, the running product of the components."""
        return np.cumprod(self.components)

    @property
    def variances(self) -> np.ndarray:
        return 1.0 / self.precisions

    def copy(self) -> "MgpState":
        return MgpState(self.components.copy(), self.a1, self.a2)

    def validate(self):
        if self.a1 <= 0 or self.a2 <= 0:
            raise StateCorruptionError("MGP shape parameters must be positive")
        prec = self.precisions
        if not (np.all(np.isfinite(self.components)) and np.all(self.components > 0)):
            raise StateCorruptionError("MGP components must be finite and > 0")
        if not np.all(prec > 0):
            raise StateCorruptionError("MGP precisions underflowed to zero")


@dataclass
class SvState:
    """Log-volatility path and its AR(1) law of motion.

    ``constant=True`` marks the homoskedastic limit: a single variance
    ``exp(mu)`` for every period, with ``rho = 0`` and ``state_var = 0``.
    """

    log_vol: np.ndarray
    mu: float
    rho: float
    state_var: float
    constant: bool = False

    def __post_init__(self):
        self.log_vol = np.asarray(self.log_vol, dtype=float).reshape(-1)
        self.mu = float(self.mu)
        self.rho = float(self.rho)
        self.state_var = float(self.state_var)

    @property
    def variances(self) -> np.ndarray:
        return np.exp(self.log_vol)

    @classmethod
    def homoskedastic(cls, sigma_sq: float, T: int) -> "SvState":
        mu = float(np.log(sigma_sq))
        return cls(np.full(T, mu), mu, 0.0, 0.0, constant=True)

    def copy(self) -> "SvState":
        return replace(self, log_vol=self.log_vol.copy())

    def validate(self):
        if not abs(self.rho) < 1:
            raise StateCorruptionError(f"SV persistence must lie in (-1, 1), got {self.rho}")
        if self.constant:
            if self.state_var != 0:
                raise StateCorruptionError("constant-variance state must have state_var == 0")
        elif not (self.state_var > 0 and np.isfinite(self.state_var)):
            raise StateCorruptionError("SV state variance must be finite and > 0")
        if not np.isfinite(self.mu):
            raise StateCorruptionError("SV level must be finite")
        v = self.variances
        if not (np.all(np.isfinite(v)) and np.all(v > 0)):
            raise StateCorruptionError("implied variances must be finite and > 0")


@dataclass
class NetworkState:
    gamma: np.ndarray
    beta: np.ndarray
    kappa: np.ndarray
    zeta: np.ndarray
    delta: np.ndarray
    hs_gamma: HorseshoeState
    hs_kappa: HorseshoeState
    mgp: MgpState
    sv: SvState

    @property
    def K(self) -> int:
        return self.gamma.shape[0]

    @property
    def Q(self) -> int:
        return self.beta.shape[0]

    def copy(self) -> "NetworkState":
        return NetworkState(
            self.gamma.copy(), self.beta.copy(), self.kappa.copy(), self.zeta.copy(),
            self.delta.copy(), self.hs_gamma.copy(), self.hs_kappa.copy(), self.mgp.copy(),
            self.sv.copy(),
        )

    def neuron_inputs(self, X) -> np.ndarray:
        """Neuron pre-activations ``X kappa + zeta`` with shape (n, Q)."""
        return np.asarray(X, dtype=float) @ self.kappa + self.zeta

    def hidden(self, X) -> np.ndarray:
        """Neuron outputs ``h_q(x' kappa_q + zeta_q)`` with shape (n, Q)."""
        return apply_columns(self.neuron_inputs(X), self.delta)

    def validate(self):
        K, Q = self.K, self.Q
        if self.gamma.shape != (K,) or self.kappa.shape != (K, Q):
            raise DimensionError(f"kappa must be ({K}, {Q}), got {self.kappa.shape}")
        if self.zeta.shape != (Q,) or self.delta.shape != (Q,):
            raise DimensionError("beta, zeta and delta must all have length Q")
        for name in ("gamma", "beta", "kappa", "zeta"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise StateCorruptionError(f"{name} contains non-finite values")
        if not set(np.unique(self.delta)).issubset({int(k) for k in ALL_KINDS}):
            raise StateCorruptionError("activation indicators must be codes 1-4")
        self.hs_gamma.validate()
        self.hs_kappa.validate()
        if self.hs_gamma.is_stack or self.hs_gamma.size != K:
            raise DimensionError("hs_gamma must be a single block of size K")
        if not self.hs_kappa.is_stack or self.hs_kappa.local_scales_sq.shape != (Q, K):
            raise DimensionError("hs_kappa must stack Q blocks of size K")
        self.mgp.validate()
        if self.mgp.Q != Q:
            raise DimensionError("MGP must have one component per neuron")
        self.sv.validate()
        return self


def new_network_state(K: int, Q: int, config=None, rng_seed=None, y=None) -> NetworkState:
    """Starting point for the Gibbs sampler.

    Loadings, linear coefficients and biases start at zero; the weighting
    matrix gets small N(0, 0.01) noise so neurons are not identical.  When
    ``y`` is given the log-volatility path starts at its log sample variance.
    """
    if int(K) < 1 or int(Q) < 1:
        raise DimensionError(f"K and Q must be >= 1, got K={K}, Q={Q}")
    K, Q = int(K), int(Q)
    rng = _as_rng(rng_seed)
    a1 = getattr(config, "mgp_a1", 2.0)
    a2 = getattr(config, "mgp_a2", 3.0)
    kappa = rng.normal(0.0, 0.1, size=(K, Q))
    delta = rng.integers(1, 5, size=Q)

    if y is None:
        log_vol = np.zeros(0)
        mu = 0.0
    else:
        y = np.asarray(y, dtype=float)
        log_vol = np.full(y.shape[0], np.log(max(np.var(y, ddof=1), 1e-8)))
        mu = float(log_vol[0])
    sv_enabled = getattr(config, "sv_enabled", True)
    if sv_enabled:
        rho = getattr(config, "sv_rho_fixed", None)
        sv = SvState(log_vol, mu, 0.9 if rho is None else rho, 0.01)
    else:
        sv = SvState(log_vol, mu, 0.0, 0.0, constant=True)

    state = NetworkState(
        gamma=np.zeros(K),
        beta=np.zeros(Q),
        kappa=kappa,
        zeta=np.zeros(Q),
        delta=delta.astype(int),
        hs_gamma=HorseshoeState.initial(K),
        hs_kappa=HorseshoeState.initial(K, n_blocks=Q),
        mgp=MgpState(np.ones(Q), a1, a2),
        sv=sv,
    )
    return state.validate()


def conditional_mean(state: NetworkState, x):
    """``x' gamma + sum_q beta_q h_q(x' kappa_q + zeta_q)``.

    ``x`` may be a single K-vector (returns a float) or an (n, K) matrix.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != state.K:
        raise DimensionError(f"expected {state.K} covariates, got {X.shape[1]}")
    out = X @ state.gamma + state.hidden(X) @ state.beta
    return float(out[0]) if single else out


def neuron_output(kind, x, kappa_q, zeta_q):
    return act_eval(ActivationKind.parse(kind), np.asarray(x, dtype=float) @ kappa_q + zeta_q)


@dataclass
class SamplerConfig:
    """Run settings for the Gibbs sampler.

    ``n_draws`` counts every sweep, burn-in included, so
    ``n_draws - n_burn`` draws are retained (before thinning).
    ``Q=None`` means one neuron per covariate.
    """

    n_draws: int = 20000
    n_burn: int = 10000
    Q: Optional[int] = None
    mgp_threshold: float = 1e-4
    neuron_threshold: float = 1e-4
    sv_enabled: bool = True
    linear_only: bool = False
    common_activation: bool = False
    nuts_target_accept: float = 0.8
    nuts_max_depth: int = 10
    seed: int = 0
    mgp_a1: float = 2.0
    mgp_a2: float = 3.0
    sv_rho_fixed: Optional[float] = None
    sv_interweave: bool = True
    thin: int = 1
    store_full_state: bool = False

    def __post_init__(self):
        if int(self.n_draws) < 1 or int(self.n_burn) < 1:
            raise ConfigError("n_draws and n_burn must be positive integers")
        if self.n_burn >= self.n_draws:
            raise ConfigError("n_burn must be smaller than n_draws")
        if self.Q is not None and int(self.Q) < 1:
            raise ConfigError("Q must be a positive integer")
        if not (self.mgp_threshold >= 0 and self.neuron_threshold > 0):
            raise ConfigError("thresholds must be positive")
        if not 0 < self.nuts_target_accept < 1:
            raise ConfigError("nuts_target_accept must lie in (0, 1)")
        if not 1 <= int(self.nuts_max_depth) <= 12:
            raise ConfigError("nuts_max_depth must be between 1 and 12")
        if self.mgp_a1 <= 0 or self.mgp_a2 <= 0:
            raise ConfigError("MGP shape parameters must be positive")
        if self.sv_rho_fixed is not None and not abs(self.sv_rho_fixed) < 1:
            raise ConfigError("sv_rho_fixed must lie in (-1, 1)")
        if int(self.thin) < 1:
            raise ConfigError("thin must be >= 1")

    @property
    def n_retained(self) -> int:
        return len(range(0, self.n_draws - self.n_burn, self.thin))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown sampler settings: {sorted(unknown)}")
        return cls(**d)
