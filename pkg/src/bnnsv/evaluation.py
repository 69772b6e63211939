"""Forecast metrics, forecast comparison tests and MCMC diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .activations import ALL_KINDS
from .exceptions import DegenerateTestError, DimensionError, InsufficientDrawsError
from .sampler import ChainOutput, PredictiveDraws

MIN_DENSITY_DRAWS = 100

# Two-sided 5% critical values of the fluctuation test, indexed by the
# window size as a share of the evaluation sample (Giacomini and Rossi,
# 2010).  Checked against a Brownian-motion simulation in the tests.
GR_WINDOW_SHARES = np.array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
GR_CRITICAL_05 = np.array([3.393, 3.179, 3.012, 2.890, 2.779, 2.634, 2.560, 2.433, 2.248])


@dataclass
class ForecastRecord:
    draws: PredictiveDraws
    realized: float
    period: object = None

    @property
    def point(self) -> float:
        return float(np.mean(self.draws.means))


def _records(records) -> list:
    records = list(records)
    if not records:
        raise ValueError("need at least one forecast record")
    return records


def point_forecasts(records) -> np.ndarray:
    return np.array([r.point for r in _records(records)])


def realized(records) -> np.ndarray:
    return np.array([r.realized for r in _records(records)], dtype=float)


def rmse(records) -> float:
    """Root mean squared error of the mean-of-means point forecast."""
    e = realized(records) - point_forecasts(records)
    return float(np.sqrt(np.mean(e * e)))


def relative_rmse(model, benchmark) -> float:
    return rmse(model) / rmse(benchmark)


def pinball(y, q, tau) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    return (y - q) * (tau - (y < q))


def quantile_score(records, tau: float) -> float:
    """Average pinball loss of the empirical ``tau``-quantile of the draws."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    records = _records(records)
    losses = []
    for r in records:
        if len(r.draws) == 0:
            raise ValueError("forecast record has no predictive draws")
        losses.append(pinball(r.realized, np.quantile(r.draws.draws, tau), tau))
    return float(np.mean(losses))


def log_score(draws: PredictiveDraws, y: float, min_draws: int = 1) -> float:
    """Log of the Gaussian-mixture predictive density at ``y``."""
    if len(draws) < min_draws:
        raise InsufficientDrawsError(f"need at least {min_draws} draws, got {len(draws)}")
    v = draws.variances
    logd = -0.5 * (np.log(2.0 * np.pi * v) + (y - draws.means) ** 2 / v)
    return float(logsumexp(logd) - math.log(len(draws)))


def lpl(records, min_draws: int = MIN_DENSITY_DRAWS):
    """Per-period log predictive likelihoods and their sum."""
    per = np.array([log_score(r.draws, r.realized, min_draws) for r in _records(records)])
    return per, float(per.sum())


def pip(chain: ChainOutput):
    """Posterior frequency of each activation per neuron, and the neuron average.

    Returns ``(per_neuron (Q, 4), average (4,))`` with columns in code order.
    """
    if chain.n_draws == 0:
        raise InsufficientDrawsError("chain has no retained draws")
    codes = [int(k) for k in ALL_KINDS]
    per = np.stack([(chain.delta == c).mean(axis=0) for c in codes], axis=1)
    return per, per.mean(axis=0)


def posterior_mean_fit(chain: ChainOutput, X) -> np.ndarray:
    return chain.conditional_means(X).mean(axis=0)


def insample_r2(chain: ChainOutput, data) -> float:
    """Share of the response variance explained by the posterior-mean fit."""
    y = np.asarray(data.y, dtype=float)
    vy = np.var(y)
    if vy == 0:
        raise ValueError("response has zero variance")
    return float(1.0 - np.var(y - posterior_mean_fit(chain, data.X)) / vy)


def relative_r2(model_r2: float, benchmark_r2: float) -> float:
    return model_r2 / benchmark_r2


# -- forecast comparison tests ------------------------------------------------

def bartlett_lrv(d, lags: int) -> float:
    """Long-run variance with Bartlett weights ``1 - l / (lags + 1)``."""
    d = np.asarray(d, dtype=float)
    e = d - d.mean()
    n = e.shape[0]
    lrv = float(e @ e) / n
    for lag in range(1, lags + 1):
        lrv += 2.0 * (1.0 - lag / (lags + 1.0)) * float(e[lag:] @ e[:-lag]) / n
    return lrv


def stars(p_value: float) -> str:
    return "***" if p_value < 0.01 else "**" if p_value < 0.05 else "*" if p_value < 0.1 else ""


def dm_test(loss_a, loss_b, h: int = 1):
    """Diebold-Mariano test of equal expected loss.

    Returns ``(statistic, p_value)``; a negative statistic favours ``loss_a``.
    """
    a = np.asarray(loss_a, dtype=float)
    b = np.asarray(loss_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError("loss series must be vectors of equal length")
    if a.shape[0] < 10:
        raise ValueError("need at least 10 paired losses")
    if int(h) < 1:
        raise ValueError("horizon must be >= 1")
    d = a - b
    n = d.shape[0]
    lrv = bartlett_lrv(d, int(h) - 1)
    if not lrv > 1e-14 * max(1.0, float(np.mean(d * d))):
        raise DegenerateTestError("loss differential has zero long-run variance")
    stat = float(d.mean() / math.sqrt(lrv / n))
    return stat, float(2.0 * stats.norm.sf(abs(stat)))


def newey_west_lags(n: int) -> int:
    return int(math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


def gr_critical_value(window_frac: float) -> float:
    """Two-sided 5% critical value, linearly interpolated in the window share."""
    if not 0 < window_frac < 1:
        raise ValueError("window_frac must lie in (0, 1)")
    return float(np.interp(window_frac, GR_WINDOW_SHARES, GR_CRITICAL_05))


@dataclass
class FluctuationResult:
    statistics: np.ndarray
    centers: np.ndarray
    window: int
    critical_value: float

    @property
    def rejects(self) -> bool:
        return bool(np.any(np.abs(self.statistics) > self.critical_value))


def fluctuation_test(lpl_diff, window_frac: float = 0.3, lags=None) -> FluctuationResult:
    """Rolling standardised mean of a loss (or LPL) differential.

    The window has ``round(window_frac * n)`` observations and each
    statistic is reported at the window's centre.  Standardisation uses the
    full-sample HAC variance (Bartlett, Newey-West lag rule unless ``lags``
    is given).
    """
    d = np.asarray(lpl_diff, dtype=float)
    if not 0 < window_frac < 1:
        raise ValueError("window_frac must lie in (0, 1)")
    n = d.shape[0]
    m = int(round(window_frac * n))
    if m < 10:
        raise ValueError(f"window of {m} observations is too short; need at least 10")
    lrv = bartlett_lrv(d, newey_west_lags(n) if lags is None else int(lags))
    if not lrv > 0:
        raise DegenerateTestError("differential has zero long-run variance")
    sums = np.convolve(d, np.ones(m), mode="valid")
    statistics = sums / (math.sqrt(m) * math.sqrt(lrv))
    centers = np.arange(sums.shape[0]) + (m - 1) / 2.0
    return FluctuationResult(statistics, centers, m, gr_critical_value(window_frac))


# -- MCMC diagnostics ---------------------------------------------------------

def autocorrelation(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    e = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(e, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def effective_sample_size(trace) -> float:
    """ESS with Geyer's initial monotone sequence estimator."""
    x = np.asarray(trace, dtype=float)
    n = x.shape[0]
    if n < 4:
        raise InsufficientDrawsError("need at least 4 draws")
    if np.ptp(x) == 0:
        raise DegenerateTestError("trace is constant")
    rho = autocorrelation(x)
    n_pairs = (n - 1) // 2
    pairs = rho[: 2 * n_pairs].reshape(n_pairs, 2).sum(axis=1)
    positive = np.flatnonzero(pairs <= 0)
    k = positive[0] if positive.size else n_pairs
    gamma = np.minimum.accumulate(pairs[:k]) if k else np.zeros(0)
    tau = -1.0 + 2.0 * gamma.sum()
    return float(n / max(tau, 1.0 / math.log10(max(n, 10))))


def inefficiency_factor(trace) -> float:
    x = np.asarray(trace, dtype=float)
    if x.shape[0] < 100:
        raise InsufficientDrawsError("need at least 100 draws")
    return x.shape[0] / effective_sample_size(x)


def _g2_second_vs_first(z):
    """BIC-penalised G^2 of a second-order against a first-order chain."""
    counts = np.zeros((2, 2, 2))
    np.add.at(counts, (z[:-2], z[1:-1], z[2:]), 1)
    g2 = 0.0
    for i in range(2):
        for j in range(2):
            for k in range(2):
                if counts[i, j, k] > 0:
                    fitted = counts[i, j, :].sum() * counts[:, j, k].sum() / counts[:, j, :].sum()
                    g2 += counts[i, j, k] * math.log(counts[i, j, k] / fitted)
    return 2.0 * g2 - 2.0 * math.log(z.shape[0] - 2)


def raftery_lewis(trace, q=0.025, r=0.025, s=0.95, converge_eps=0.001) -> int:
    """Total run length (burn-in plus kept draws) for the ``q``-quantile.

    The trace is dichotomised at its empirical ``q``-quantile; a thinning
    interval is chosen where a first-order two-state chain is adequate, and
    the run length follows from that chain's transition probabilities.
    """
    x = np.asarray(trace, dtype=float)
    n = x.shape[0]
    if n < 100:
        raise InsufficientDrawsError("need at least 100 draws")
    phi = stats.norm.ppf(0.5 * (s + 1.0))
    n_min = math.ceil(q * (1 - q) * phi**2 / r**2)
    if n < n_min:
        raise InsufficientDrawsError(f"need at least {n_min} draws")
    z_full = (x <= np.quantile(x, q)).astype(int)
    if z_full.min() == z_full.max():
        raise DegenerateTestError("dichotomised trace is constant")
    thin = 1
    while True:
        z = z_full[::thin]
        if z.shape[0] < 3 or _g2_second_vs_first(z) < 0:
            break
        thin += 1
    z = z_full[::thin]
    trans = np.zeros((2, 2))
    np.add.at(trans, (z[:-1], z[1:]), 1)
    alpha = trans[0, 1] / max(trans[0].sum(), 1)
    beta = trans[1, 0] / max(trans[1].sum(), 1)
    if alpha + beta == 0:
        raise DegenerateTestError("dichotomised chain never switches state")
    lam = 1.0 - alpha - beta
    if abs(lam) < 1e-12:
        n_burn = thin
    else:
        n_burn = math.ceil(math.log(converge_eps * (alpha + beta) / max(alpha, beta))
                           / math.log(abs(lam))) * thin
    n_keep = math.ceil((2 - alpha - beta) * alpha * beta * phi**2 / ((alpha + beta) ** 3 * r**2) * thin)
    return int(max(n_burn, 0) + n_keep)


# -- tidy output --------------------------------------------------------------

TIDY_COLUMNS = ("model", "dataset", "metric", "value")


def tidy_rows(model: str, dataset: str, metrics: dict) -> list:
    return [{"model": model, "dataset": dataset, "metric": k, "value": float(v)}
            for k, v in metrics.items()]


def write_tidy_csv(path, rows: Iterable[dict]):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TIDY_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in TIDY_COLUMNS})


def summary_metrics(records: Sequence[ForecastRecord], min_draws: int = MIN_DENSITY_DRAWS) -> dict:
    return {
        "RMSE": rmse(records),
        "QS25": quantile_score(records, 0.25),
        "QS75": quantile_score(records, 0.75),
        "LPL": lpl(records, min_draws)[1],
    }
