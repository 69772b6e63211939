"""Simulation-study harness: fit every model on every design and score it.

Each (design, replication) pair gets its own dataset and each (design,
replication, model) triple its own chain.  Seeds depend only on those
positions, so results do not depend on the number of worker processes.
"""

from __future__ import annotations

import itertools
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .evaluation import ForecastRecord, lpl, quantile_score, rmse
from .model import SamplerConfig
from .sampler import predict, run_chain
from .simulation import DgpConfig, generate, split

MODELS = {
    "BNN": {"common_activation": True},
    "BNN-NS": {},
    "Linear": {"linear_only": True},
}
BENCHMARK = "Linear"
METRICS = ("RMSE", "QS25", "QS75", "LPL")


def model_config(base: SamplerConfig, model: str, seed: int) -> SamplerConfig:
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {sorted(MODELS)}")
    return replace(base, seed=int(seed), **MODELS[model])


def seed_for(root: int, *position) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(root), spawn_key=tuple(position)))


def holdout_records(chain, holdout, rng, horizon=1) -> list:
    return [ForecastRecord(predict(chain, holdout.X[i], horizon, rng), float(holdout.y[i]),
                           holdout.timestamps[i]) for i in range(holdout.T)]


def score(records) -> dict:
    return {
        "RMSE": rmse(records),
        "QS25": quantile_score(records, 0.25),
        "QS75": quantile_score(records, 0.75),
        "LPL": lpl(records, min_draws=1)[1],
    }


def simulate_replication(dgp: DgpConfig, root_seed: int, cell: int, rep: int):
    data, truth = generate(dgp, seed_for(root_seed, cell, rep, 0))
    train, hold = split(data, truth, dgp, seed_for(root_seed, cell, rep, 1))
    return data, truth, train, hold


@dataclass
class Job:
    cell: int
    rep: int
    model: str
    dgp: DgpConfig
    sampler: SamplerConfig
    root_seed: int


def run_job(job: Job) -> dict:
    """Fit one model on one replication; failures are returned, not raised."""
    out = {"cell": job.cell, "rep": job.rep, "model": job.model}
    try:
        _, _, train, hold = simulate_replication(job.dgp, job.root_seed, job.cell, job.rep)
        m = list(MODELS).index(job.model)
        chain_rng = seed_for(job.root_seed, job.cell, job.rep, 2, m)
        cfg = model_config(job.sampler, job.model, int(chain_rng.integers(2**31)))
        chain = run_chain(train, cfg, chain_rng)
        out.update(score(holdout_records(chain, hold, seed_for(job.root_seed, job.cell, job.rep, 3, m))))
        out["seconds"] = chain.wall_time
        out["error"] = ""
    except Exception as err:  # recorded so the rest of the grid still runs
        out["error"] = f"{type(err).__name__}: {err}"
        out["traceback"] = traceback.format_exc()
    return out


def run_jobs(jobs, threads: int = 1) -> list:
    if threads <= 1:
        return [run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run_job, jobs))


@dataclass
class Table2Grid:
    K: tuple = (30, 60)
    sparsity: tuple = ("dense", "sparse")
    noise: tuple = ("homo", "hetero")
    dgp_kind: tuple = ("linear", "nonlinear")
    models: tuple = ("BNN", "BNN-NS", "Linear")
    replications: int = 20
    T: int = 200
    train_size: int = 100
    c_sq: float = 0.5
    seed: int = 0
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(sv_rho_fixed=0.0))

    def cells(self) -> list:
        return [DgpConfig(K=k, dgp_kind=d, sparsity=s, noise=n, T=self.T,
                          train_size=self.train_size, c_sq=self.c_sq, seed=None)
                for d, k, s, n in itertools.product(self.dgp_kind, self.K, self.sparsity, self.noise)]

    def jobs(self) -> list:
        return [Job(c, r, m, dgp, self.sampler, self.seed)
                for c, dgp in enumerate(self.cells())
                for r in range(self.replications) for m in self.models]


def summarise(results: list, cells: list, models, benchmark=BENCHMARK) -> list:
    """One row per (design, model).

    Relative scores are ratios of replication-averaged scores; the
    benchmark row carries absolute values.  LPL is reported as a difference
    to the benchmark.  Cells with failed jobs are flagged.
    """
    rows = []
    for c, dgp in enumerate(cells):
        mine = [r for r in results if r["cell"] == c]
        failed = sorted({r["model"] for r in mine if r["error"]})
        avg = {}
        for m in models:
            ok = [r for r in mine if r["model"] == m and not r["error"]]
            avg[m] = {k: float(np.mean([r[k] for r in ok])) if ok else float("nan") for k in METRICS}
        for m in models:
            row = {"dgp_kind": dgp.dgp_kind.value, "K": dgp.K, "sparsity": dgp.sparsity.value,
                   "noise": dgp.noise.value, "model": m,
                   "replications": sum(1 for r in mine if r["model"] == m and not r["error"]),
                   "flag": "failed:" + ",".join(failed) if failed else ""}
            if m == benchmark or benchmark not in avg:
                row.update({k: avg[m][k] for k in METRICS})
                row["relative"] = False
            else:
                b = avg[benchmark]
                row.update({k: avg[m][k] / b[k] for k in ("RMSE", "QS25", "QS75")})
                row["LPL"] = avg[m]["LPL"] - b["LPL"]
                row["relative"] = True
            rows.append(row)
    return rows


def replicate_table2(grid: Table2Grid, threads: int = 1):
    """Run the full design grid; returns ``(summary rows, per-job results)``."""
    results = run_jobs(grid.jobs(), threads)
    return summarise(results, grid.cells(), grid.models), results


def format_table(rows: list) -> str:
    """Plain-text table: RMSE on the first line, (QS25) (QS75) beneath."""
    models = list(dict.fromkeys(r["model"] for r in rows))
    keys = list(dict.fromkeys((r["dgp_kind"], r["K"], r["sparsity"], r["noise"]) for r in rows))
    head = f"{'design':<28}" + "".join(f"{m:>18}" for m in models)
    lines = [head, "-" * len(head)]
    for key in keys:
        cell = {r["model"]: r for r in rows if (r["dgp_kind"], r["K"], r["sparsity"], r["noise"]) == key}
        label = f"{key[0]} K={key[1]} {key[2]} {key[3]}"
        flag = next((r["flag"] for r in cell.values() if r["flag"]), "")
        lines.append(f"{label:<28}" + "".join(f"{cell[m]['RMSE']:>18.3f}" for m in models)
                     + (f"  [{flag}]" if flag else ""))
        lines.append(" " * 28 + "".join(
            f"{'(%.3f) (%.3f)' % (cell[m]['QS25'], cell[m]['QS75']):>18}" for m in models))
    return "\n".join(lines)
