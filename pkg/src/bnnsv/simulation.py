"""Synthetic data for the simulation study.

Each neuron reads exactly one covariate (the weighting matrix is the
identity), a random subset of neurons carries a non-zero loading, and the
noise is either homoskedastic or mildly heteroskedastic.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .activations import ALL_KINDS, apply_columns
from .exceptions import ConfigError
from .model import Dataset, _as_rng


class DgpKind(str, enum.Enum):
    LINEAR = "linear"
    NONLINEAR = "nonlinear"


class Sparsity(str, enum.Enum):
    DENSE = "dense"
    SPARSE = "sparse"


class Noise(str, enum.Enum):
    HOMO = "homo"
    HETERO = "hetero"


ACTIVE_SHARE = {Sparsity.DENSE: 0.9, Sparsity.SPARSE: 0.1}
BASE_VARIANCE = 0.1
LOG_VARIANCE_SD = 0.1


def _enum(cls, value):
    try:
        return cls(str(getattr(value, "value", value)).lower())
    except ValueError as err:
        raise ConfigError(f"{value!r} is not one of {[m.value for m in cls]}") from err


@dataclass
class DgpConfig:
    K: int = 30
    dgp_kind: DgpKind = DgpKind.NONLINEAR
    sparsity: Sparsity = Sparsity.SPARSE
    noise: Noise = Noise.HOMO
    T: int = 200
    train_size: int = 100
    c_sq: float = 0.5
    seed: Optional[int] = 0

    def __post_init__(self):
        self.dgp_kind = _enum(DgpKind, self.dgp_kind)
        self.sparsity = _enum(Sparsity, self.sparsity)
        self.noise = _enum(Noise, self.noise)
        if int(self.K) < 1:
            raise ConfigError("K must be a positive integer")
        if int(self.T) < 3:
            raise ConfigError("T must be at least 3")
        if not 2 <= int(self.train_size) < int(self.T):
            raise ConfigError("train_size must satisfy 2 <= train_size < T")
        if not self.c_sq > 0:
            raise ConfigError("c_sq must be positive")

    @property
    def Q(self) -> int:
        return int(self.K)

    @property
    def n_active(self) -> int:
        return int(round(ACTIVE_SHARE[self.sparsity] * self.Q))

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("dgp_kind", "sparsity", "noise"):
            d[k] = d[k].value
        return d


@dataclass
class DgpTruth:
    beta_true: np.ndarray
    kappa_true: np.ndarray
    activation_true: np.ndarray
    sigma_sq_true: np.ndarray
    active_mask: np.ndarray

    def to_dict(self) -> dict:
        return {
            "beta_true": self.beta_true.tolist(),
            "activation_true": [int(a) for a in self.activation_true],
            "sigma_sq_true": self.sigma_sq_true.tolist(),
            "active_mask": [bool(a) for a in self.active_mask],
            "active_neurons": [int(i) for i in np.flatnonzero(self.active_mask)],
        }


def generate(config: DgpConfig, rng=None):
    """Draw one synthetic dataset and the parameters that produced it.

    ``rng`` defaults to a generator seeded with ``config.seed``.  In the
    linear design the activation codes are reported as 0 (identity).
    """
    rng = _as_rng(config.seed if rng is None else rng)
    K, Q, T = int(config.K), config.Q, int(config.T)
    X = rng.standard_normal((T, K))
    kappa = np.eye(K)
    active = np.zeros(Q, dtype=bool)
    active[rng.choice(Q, size=config.n_active, replace=False)] = True
    beta = np.where(active, rng.normal(0.0, np.sqrt(config.c_sq), size=Q), 0.0)

    if config.dgp_kind is DgpKind.NONLINEAR:
        codes = np.array([int(k) for k in ALL_KINDS])
        kinds = codes[rng.integers(0, len(codes), size=Q)]
        f = apply_columns(X @ kappa, kinds)
    else:
        kinds = np.zeros(Q, dtype=int)
        f = X @ kappa

    if config.noise is Noise.HOMO:
        sigma_sq = np.full(T, BASE_VARIANCE)
    else:
        sigma_sq = BASE_VARIANCE * np.exp(rng.normal(0.0, LOG_VARIANCE_SD, size=T))
    y = f @ beta + np.sqrt(sigma_sq) * rng.standard_normal(T)
    truth = DgpTruth(beta, kappa, kinds, sigma_sq, active)
    return Dataset(y, X, np.arange(T)), truth


def split(dataset: Dataset, truth: Optional[DgpTruth], config: DgpConfig, rng=None):
    """Random train/hold-out partition; rows keep their original timestamps.

    The training rows are returned in their original order, as are the
    hold-out rows.  ``truth`` is accepted for symmetry with ``generate``;
    ``truth.sigma_sq_true[part.timestamps]`` aligns the true variances.
    """
    rng = _as_rng(config.seed if rng is None else rng)
    if not config.train_size < dataset.T:
        raise ConfigError("train_size must be smaller than the number of observations")
    perm = rng.permutation(dataset.T)
    train = np.sort(perm[: config.train_size])
    hold = np.sort(perm[config.train_size:])
    return dataset.subset(train), dataset.subset(hold)
