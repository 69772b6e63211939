"""Command line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .evaluation import (ForecastRecord, dm_test, fluctuation_test, inefficiency_factor, lpl,
                         pip, quantile_score, raftery_lewis, rmse, write_tidy_csv)
from .exceptions import (BNNError, ConfigError, DegenerateTestError, DimensionError,
                         InsufficientDrawsError, NumericalSingularityError, SchemaError,
                         SweepError)
from .experiments import MODELS, Table2Grid, format_table, replicate_table2
from .report import pip_over_time, qstar_over_time, recursive_forecast, write_period_csv
from .sampler import predict, run_chain
from .simulation import DgpConfig, generate, split

log = logging.getLogger("bnnsv")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


def _dgp_config(cfg: dict) -> DgpConfig:
    d = dict(cfg.get("dgp") or {})
    if "seed" in cfg and "seed" not in d:
        d["seed"] = cfg["seed"]
    try:
        return DgpConfig(**d)
    except TypeError as err:
        raise ConfigError(f"dgp section: {err}") from err


def cmd_simulate(args) -> int:
    cfg = io.load_config(args.config)
    dgp = _dgp_config(cfg)
    rng = np.random.default_rng(dgp.seed)
    data, truth = generate(dgp, rng)
    train, hold = split(data, truth, dgp, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_dataset(out / "train.csv", train)
    io.write_dataset(out / "holdout.csv", hold)
    (out / "truth.json").write_text(json.dumps(truth.to_dict(), indent=2))
    io.write_manifest(out, "simulate", cfg, dgp.seed, {"dgp": dgp.to_dict()})
    return EXIT_OK


BLOCKS = ("gamma", "beta", "kappa", "zeta")


def block_diagnostics(chain) -> list:
    """Median, min and max inefficiency factor and Raftery-Lewis N per block."""
    rows = []
    traces = {b: getattr(chain, b).reshape(chain.n_draws, -1) for b in BLOCKS}
    traces["sigma_sq"] = np.exp(chain.log_vol)
    for name, arr in traces.items():
        ifs, rls = [], []
        for j in range(arr.shape[1]):
            x = arr[:, j]
            if np.ptp(x) == 0:
                continue
            try:
                ifs.append(inefficiency_factor(x))
                rls.append(raftery_lewis(x))
            except (InsufficientDrawsError, DegenerateTestError):
                continue
        for stat, vals in (("IF", ifs), ("RL", rls)):
            v = np.array(vals, dtype=float)
            rows.append({"block": name, "statistic": stat, "n": len(v),
                         "median": float(np.median(v)) if len(v) else float("nan"),
                         "min": float(v.min()) if len(v) else float("nan"),
                         "max": float(v.max()) if len(v) else float("nan")})
    return rows


def _write_rows(path, rows):
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def cmd_fit(args) -> int:
    cfg = io.load_config(args.config) if args.config else {}
    config = io.sampler_config_from(cfg, seed=args.seed)
    if args.linear_only:
        config = replace(config, linear_only=True)
    data = io.read_dataset(args.data)
    chain = run_chain(data, config)
    out = Path(args.out)
    io.save_chain(chain, out / "chain", fmt=args.format)
    _write_rows(out / "diagnostics.csv", block_diagnostics(chain))
    io.write_manifest(out, "fit", cfg, config.seed, {"sampler": config.to_dict(),
                                                     "wall_time": chain.wall_time})
    return EXIT_OK


def cmd_forecast(args) -> int:
    chain = io.load_chain(args.chain)
    X, labels = io.read_covariates(args.x, chain.K)
    rng = np.random.default_rng(args.seed)
    draws = [predict(chain, x, args.horizon, rng) for x in X]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_draws(out / "draws.csv", draws, labels)
    io.write_summary(out / "summary.csv", draws, labels)
    io.write_manifest(out, "forecast", {"horizon": args.horizon}, args.seed)
    return EXIT_OK


def _records(draw_path, realized, labels):
    keys, draws = io.read_draws(draw_path)
    if len(draws) != len(realized):
        raise SchemaError(f"{draw_path}: {len(draws)} forecast rows but {len(realized)} realized values")
    periods = labels if labels is not None else keys
    return [ForecastRecord(d, float(y), p) for d, y, p in zip(draws, realized, periods)]


def cmd_evaluate(args) -> int:
    y, labels = io.read_realized(args.realized)
    model = _records(args.model, y, labels)
    bench = _records(args.benchmark, y, labels)
    rows = []
    per = {}
    for name, recs in (("model", model), ("benchmark", bench)):
        per[name] = lpl(recs, min_draws=1)[0]
        for metric, value in (("RMSE", rmse(recs)), ("QS25", quantile_score(recs, 0.25)),
                              ("QS75", quantile_score(recs, 0.75)), ("LPL", per[name].sum())):
            rows.append({"model": name, "dataset": args.dataset, "metric": metric, "value": value})
    m = {r["metric"]: r["value"] for r in rows if r["model"] == "model"}
    b = {r["metric"]: r["value"] for r in rows if r["model"] == "benchmark"}
    for k in ("RMSE", "QS25", "QS75"):
        rows.append({"model": "relative", "dataset": args.dataset, "metric": k, "value": m[k] / b[k]})
    rows.append({"model": "relative", "dataset": args.dataset, "metric": "LPL",
                 "value": m["LPL"] - b["LPL"]})
    if args.dm:
        em = y - np.array([r.point for r in model])
        eb = y - np.array([r.point for r in bench])
        try:
            stat, p = dm_test(em**2, eb**2, args.horizon)
            rows += [{"model": "relative", "dataset": args.dataset, "metric": "DM_stat", "value": stat},
                     {"model": "relative", "dataset": args.dataset, "metric": "DM_pvalue", "value": p}]
        except DegenerateTestError as err:
            log.warning("Diebold-Mariano test skipped: %s", err)
    if args.fluctuation:
        res = fluctuation_test(per["model"] - per["benchmark"], args.fluctuation)
        rows.append({"model": "relative", "dataset": args.dataset, "metric": "GR_max_abs",
                     "value": float(np.max(np.abs(res.statistics)))})
        rows.append({"model": "relative", "dataset": args.dataset, "metric": "GR_critical",
                     "value": res.critical_value})
        write_period_csv(Path(args.out).with_suffix(".fluctuation.csv"), res.centers,
                         res.statistics, ["statistic"])
    write_tidy_csv(args.out, rows)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    chain = io.load_chain(args.chain)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "diagnostics.csv", block_diagnostics(chain))
    per, avg = pip(chain)
    rows = [{"neuron": q + 1, "leaky_relu": p[0], "sigmoid": p[1], "relu": p[2], "tanh": p[3]}
            for q, p in enumerate(per)]
    rows.append({"neuron": "average", "leaky_relu": avg[0], "sigmoid": avg[1], "relu": avg[2],
                 "tanh": avg[3]})
    _write_rows(out / "pip.csv", rows)
    summary = {"qstar_threshold_median": float(np.median(chain.qstar))}
    if chain.n_draws >= 20:
        summary["qstar_interval"] = chain.qstar_ci()
    (out / "neurons.json").write_text(json.dumps(summary, indent=2))
    return EXIT_OK


def _grid_from(cfg: dict) -> Table2Grid:
    t = dict(cfg.get("table2") or {})
    sampler = io.sampler_config_from(cfg)
    if "sv_rho_fixed" not in (cfg.get("sampler") or {}):
        sampler = replace(sampler, sv_rho_fixed=0.0)
    for k in ("K", "sparsity", "noise", "dgp_kind", "models"):
        if k in t:
            t[k] = tuple(t[k]) if isinstance(t[k], (list, tuple)) else (t[k],)
    unknown = set(t.get("models", ())) - set(MODELS)
    if unknown:
        raise ConfigError(f"unknown models {sorted(unknown)}")
    try:
        return Table2Grid(seed=int(cfg.get("seed", 0)), sampler=sampler, **t)
    except TypeError as err:
        raise ConfigError(f"table2 section: {err}") from err


def cmd_replicate_table2(args) -> int:
    cfg = io.load_config(args.config)
    grid = _grid_from(cfg)
    grid.cells()  # validates every design before any chain runs
    rows, results = replicate_table2(grid, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "table2.csv", rows)
    _write_rows(out / "runs.csv", [{k: v for k, v in r.items() if k != "traceback"} for r in results])
    (out / "table2.txt").write_text(format_table(rows) + "\n")
    io.write_manifest(out, "replicate-table2", cfg, grid.seed, {"threads": args.threads})
    print(format_table(rows))
    return EXIT_OK


def cmd_recursive(args) -> int:
    cfg = io.load_config(args.config) if args.config else {}
    config = io.sampler_config_from(cfg, seed=args.seed)
    data = io.read_dataset(args.data)
    rec = cfg.get("recursive") or {}
    start = args.start if args.start is not None else int(rec.get("start", 40))
    warm = args.warm_start or bool(rec.get("warm_start", False))
    records, chains = recursive_forecast(data, config, start, warm_start=warm, return_chains=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    labels = [r.period for r in records]
    io.write_draws(out / "draws.csv", [r.draws for r in records], labels)
    with open(out / "realized.csv", "w") as fh:
        fh.write("period,realized\n")
        for r in records:
            fh.write(f"{r.period},{r.realized!r}\n")
    per, _ = lpl(records, min_draws=1)
    write_period_csv(out / "lpl.csv", labels, per, ["lpl"])
    if not config.linear_only:
        write_period_csv(out / "pip.csv", labels, pip_over_time(chains),
                         ["leaky_relu", "sigmoid", "relu", "tanh"])
        if all(c.n_draws >= 20 for c in chains):
            write_period_csv(out / "qstar.csv", labels, qstar_over_time(chains), ["qstar"])
    io.write_manifest(out, "recursive", cfg, config.seed, {"start": start,
                                                           "warm_start": warm})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bnnsv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic train/hold-out pair")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="run the sampler on a CSV dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("csv", "npz"), default="csv")
    s.add_argument("--linear-only", action="store_true")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("forecast", help="predictive draws from a chain archive")
    s.add_argument("--chain", required=True)
    s.add_argument("--x", required=True)
    s.add_argument("--horizon", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_forecast)

    s = sub.add_parser("evaluate", help="score two forecast files against realized values")
    s.add_argument("--model", required=True)
    s.add_argument("--benchmark", required=True)
    s.add_argument("--realized", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--dataset", default="data")
    s.add_argument("--dm", action="store_true")
    s.add_argument("--horizon", type=int, default=1)
    s.add_argument("--fluctuation", type=float, metavar="WINDOW_FRAC")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("diagnose", help="mixing diagnostics, PIPs and neuron counts")
    s.add_argument("--chain", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("replicate-table2", help="run the simulation-study grid")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_replicate_table2)

    s = sub.add_parser("recursive", help="expanding-window one-step-ahead forecasts")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--start", type=int)
    s.add_argument("--warm-start", action="store_true")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_recursive)
    return p


def _exit_code(err: BaseException) -> int:
    while isinstance(err, SweepError) or getattr(err, "cause", None) is not None:
        err = err.cause
    if isinstance(err, NumericalSingularityError):
        return EXIT_NUMERICAL
    if isinstance(err, ConfigError):
        return EXIT_CONFIG
    return EXIT_DATA


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, DimensionError, InsufficientDrawsError, OSError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalSingularityError, SweepError, ArithmeticError, BNNError) as err:
        code = _exit_code(err)
        print(f"{'numerical' if code == EXIT_NUMERICAL else 'run'} error: {err}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
