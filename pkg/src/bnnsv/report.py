"""Recursive out-of-sample forecasting and the per-period summaries built on it."""

from __future__ import annotations

import csv
from typing import Sequence

import numpy as np

from . import sampler as _sampler
from .evaluation import ForecastRecord, insample_r2, log_score, pip
from .exceptions import BNNError, DimensionError
from .model import Dataset, SamplerConfig, _as_rng
from .shrinkage import active_neurons_ci

MIN_TRAIN = 40


class PeriodError(BNNError):
    def __init__(self, period, cause):
        super().__init__(f"forecast for period {period} failed: {cause}")
        self.period = period
        self.cause = cause


def recursive_forecast(data: Dataset, config: SamplerConfig, start_index: int = MIN_TRAIN,
                       rng=None, warm_start: bool = False, horizon: int = 1,
                       return_chains: bool = False):
    """Expanding-window one-step-ahead forecasts.

    For each row ``t >= start_index`` the model is fitted on rows ``0..t-1``
    only and row ``t`` is forecast.  Each period's chain gets its own child
    seed.  With ``warm_start`` a period's chain starts from the previous
    period's final state.
    """
    if start_index < MIN_TRAIN:
        raise ValueError(f"start_index must be at least {MIN_TRAIN}")
    if not start_index < data.T:
        raise DimensionError("start_index leaves no period to forecast")
    rng = _as_rng(config.seed if rng is None else rng)
    children = rng.spawn(data.T - start_index)
    records, chains = [], []
    previous = None
    for i, t in enumerate(range(start_index, data.T)):
        period_rng = children[i]
        train = data.subset(np.arange(t))
        try:
            chain = _sampler.run_chain(train, config, period_rng,
                                       init_state=previous if warm_start else None)
        except Exception as err:
            raise PeriodError(data.timestamps[t], err) from err
        chain.meta["n_train"] = t
        chain.meta["period"] = data.timestamps[t]
        draws = _sampler.predict(chain, data.X[t], horizon, period_rng)
        records.append(ForecastRecord(draws, float(data.y[t]), data.timestamps[t]))
        previous = chain.final_state
        if return_chains:
            chains.append(chain)
    return (records, chains) if return_chains else records


def pip_over_time(chains: Sequence) -> np.ndarray:
    """Neuron-averaged activation frequencies, one row per chain (period)."""
    return np.vstack([pip(c)[1] for c in chains])


def qstar_over_time(chains: Sequence) -> np.ndarray:
    """Neurons whose 5-95% loading interval excludes zero, per chain."""
    return np.array([active_neurons_ci(c.beta) for c in chains], dtype=int)


def r2_lpl_scatter(model_records, model_chains, benchmark_records, benchmark_chains,
                   data: Dataset) -> np.ndarray:
    """Per-period (relative in-sample R2, LPL difference) pairs.

    The in-sample fit of period ``i`` uses the rows the chain was trained on
    (``chain.meta["n_train"]``, else all rows of ``data``).
    """
    n = len(model_records)
    if not (len(model_chains) == len(benchmark_records) == len(benchmark_chains) == n):
        raise DimensionError("model and benchmark inputs must cover the same periods")
    out = np.empty((n, 2))
    for i in range(n):
        mc, bc = model_chains[i], benchmark_chains[i]
        rows = np.arange(mc.meta.get("n_train", data.T))
        train = data.subset(rows)
        out[i, 0] = insample_r2(mc, train) / insample_r2(bc, train)
        mr, br = model_records[i], benchmark_records[i]
        out[i, 1] = log_score(mr.draws, mr.realized) - log_score(br.draws, br.realized)
    return out


def write_period_csv(path, periods, values, columns):
    values = np.asarray(values)
    if values.ndim == 1:
        values = values[:, None]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["period", *columns])
        for p, row in zip(periods, values):
            w.writerow([p, *[repr(float(v)) if np.issubdtype(values.dtype, np.floating) else int(v)
                             for v in row]])

