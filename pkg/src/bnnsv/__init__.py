"""Shallow Bayesian neural networks with shrinkage priors and stochastic volatility."""

from .activations import ActivationKind, act_eval, act_grad
from .estimator import BayesianNeuralNetwork, LinearHorseshoe
from .evaluation import (ForecastRecord, dm_test, fluctuation_test, inefficiency_factor, lpl, pip,
                         quantile_score, raftery_lewis, relative_rmse, rmse)
from .model import (Dataset, HorseshoeState, MgpState, NetworkState, SamplerConfig, SvState,
                    conditional_mean, new_network_state)
from .sampler import ChainOutput, PredictiveDraw, PredictiveDraws, gibbs_sweep, predict, run_chain
from .simulation import DgpConfig, DgpTruth, generate, split

__version__ = "0.1.0"

__all__ = [
    "ActivationKind", "act_eval", "act_grad", "BayesianNeuralNetwork", "LinearHorseshoe",
    "ForecastRecord", "dm_test", "fluctuation_test", "inefficiency_factor", "lpl", "pip",
    "quantile_score", "raftery_lewis", "relative_rmse", "rmse", "Dataset", "HorseshoeState",
    "MgpState", "NetworkState", "SamplerConfig", "SvState", "conditional_mean",
    "new_network_state", "ChainOutput", "PredictiveDraw", "PredictiveDraws", "gibbs_sweep",
    "predict", "run_chain", "DgpConfig", "DgpTruth", "generate", "split",
]
