"""scikit-learn style front end to the Gibbs sampler."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_choice, check_positive_int, validate_x, validate_xy
from .model import Dataset, SamplerConfig, _as_rng
from .sampler import predict, run_chain


class BayesianNeuralNetwork(RegressorMixin, BaseEstimator):
    """Shallow Bayesian neural network with shrinkage priors and stochastic volatility.

    Parameters
    ----------
    n_neurons : int or None
        Hidden neurons; ``None`` uses one per feature.
    n_draws, n_burn : int
        Total sweeps and burn-in sweeps (``n_draws - n_burn`` are kept).
    activation : {"neuron", "common"}
        Neuron-specific activations or one activation shared by all neurons.
    stochastic_volatility : bool
        ``False`` fits a single error variance.
    linear_only : bool
        Drop the network and fit the horseshoe linear regression.
    sv_rho : float or None
        Fix the log-variance persistence (``0`` gives i.i.d. log-variances).
    random_state : int, Generator or None

    Attributes
    ----------
    chain_ : ChainOutput
    n_features_in_ : int
    """

    def __init__(self, n_neurons=None, n_draws=20000, n_burn=10000, activation="neuron",
                 stochastic_volatility=True, linear_only=False, mgp_threshold=1e-4,
                 neuron_threshold=1e-4, target_accept=0.8, max_tree_depth=10, sv_rho=None,
                 thin=1, random_state=None):
        self.n_neurons = n_neurons
        self.n_draws = n_draws
        self.n_burn = n_burn
        self.activation = activation
        self.stochastic_volatility = stochastic_volatility
        self.linear_only = linear_only
        self.mgp_threshold = mgp_threshold
        self.neuron_threshold = neuron_threshold
        self.target_accept = target_accept
        self.max_tree_depth = max_tree_depth
        self.sv_rho = sv_rho
        self.thin = thin
        self.random_state = random_state

    def sampler_config(self) -> SamplerConfig:
        check_choice(self.activation, "activation", {"neuron", "common"})
        seed = self.random_state if isinstance(self.random_state, (int, np.integer)) else 0
        return SamplerConfig(
            n_draws=check_positive_int(self.n_draws, "n_draws"),
            n_burn=check_positive_int(self.n_burn, "n_burn"),
            Q=check_positive_int(self.n_neurons, "n_neurons", allow_none=True),
            mgp_threshold=self.mgp_threshold,
            neuron_threshold=self.neuron_threshold,
            sv_enabled=bool(self.stochastic_volatility),
            linear_only=bool(self.linear_only),
            common_activation=self.activation == "common",
            nuts_target_accept=self.target_accept,
            nuts_max_depth=self.max_tree_depth,
            seed=int(seed),
            sv_rho_fixed=self.sv_rho,
            thin=check_positive_int(self.thin, "thin"),
        )

    def fit(self, X, y, timestamps=None):
        X, y = validate_xy(X, y)
        config = self.sampler_config()
        rng = _as_rng(self.random_state)
        self.chain_ = run_chain(Dataset(y, X, timestamps), config, rng)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Posterior mean of the conditional mean at each row of ``X``."""
        check_is_fitted(self, "chain_")
        X = validate_x(X, self.n_features_in_)
        return self.chain_.conditional_means(X).mean(axis=0)

    def predict_draws(self, X, horizon=1, random_state=None) -> list:
        """One :class:`PredictiveDraws` per row of ``X``."""
        check_is_fitted(self, "chain_")
        X = validate_x(X, self.n_features_in_)
        rng = _as_rng(random_state)
        return [predict(self.chain_, x, horizon, rng) for x in X]


class LinearHorseshoe(BayesianNeuralNetwork):
    """Horseshoe linear regression with stochastic volatility (the benchmark)."""

    def __init__(self, n_draws=20000, n_burn=10000, stochastic_volatility=True, sv_rho=None,
                 thin=1, random_state=None):
        super().__init__(n_draws=n_draws, n_burn=n_burn, linear_only=True,
                         stochastic_volatility=stochastic_volatility, sv_rho=sv_rho, thin=thin,
                         random_state=random_state)

