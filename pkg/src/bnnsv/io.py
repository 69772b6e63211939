"""File formats: data CSVs, chain archives, YAML configs and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from .exceptions import ConfigError, SchemaError
from .model import Dataset, SamplerConfig
from .sampler import ChainOutput, PredictiveDraws

PERIOD_COLUMN = "period"
ARCHIVE_MANIFEST = "chain.json"
_CHAIN_ARRAYS = ("gamma", "beta", "kappa", "zeta", "delta", "mgp_components", "log_vol",
                 "sv_mu", "sv_rho", "sv_state_var", "hs_gamma_global", "hs_gamma_local",
                 "hs_kappa_global", "hs_kappa_local", "qstar", "log_lik", "accept_stat",
                 "tree_depth", "divergent")


# -- numeric CSVs -------------------------------------------------------------

def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_table(path, min_columns=1):
    """Header plus numeric body; an optional leading ``period`` column holds labels."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: file not found")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise SchemaError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    if all(_is_number(h) for h in header):
        raise SchemaError(f"{path}: missing header row (first row is numeric)")
    labels = None
    if header[0].lower() == PERIOD_COLUMN:
        labels = [r[0] for r in rows[1:]]
        header = header[1:]
        rows = [rows[0][1:]] + [r[1:] for r in rows[1:]]
    if len(header) < min_columns:
        raise SchemaError(f"{path}: expected at least {min_columns} columns, found {len(header)}")
    body = np.empty((len(rows) - 1, len(header)))
    for i, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise SchemaError(f"{path}: row {i} has {len(r)} fields, header has {len(header)}")
        for j, cell in enumerate(r):
            try:
                body[i - 2, j] = float(cell)
            except ValueError:
                raise SchemaError(f"{path}: row {i}, column '{header[j]}' is not numeric: {cell!r}")
    if labels is not None:
        labels = np.array([int(v) if v.lstrip("-").isdigit() else v for v in labels], dtype=object)
        if all(isinstance(v, int) for v in labels):
            labels = labels.astype(int)
    return header, body, labels


def read_dataset(path) -> Dataset:
    """Response in the first column, covariates in the rest."""
    header, body, labels = read_table(path, min_columns=2)
    if body.shape[0] < 2:
        raise SchemaError(f"{path}: need at least two data rows")
    try:
        return Dataset(body[:, 0], body[:, 1:], labels)
    except ValueError as err:
        raise SchemaError(f"{path}: {err}") from err


def read_covariates(path, K=None) -> tuple:
    header, body, labels = read_table(path)
    if K is not None and body.shape[1] != K:
        raise SchemaError(f"{path}: expected {K} covariate columns, found {body.shape[1]}")
    return body, labels


def write_dataset(path, data: Dataset, names=None):
    names = names or [f"x{j + 1}" for j in range(data.K)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([PERIOD_COLUMN, "y", *names])
        for t in range(data.T):
            w.writerow([data.timestamps[t], repr(float(data.y[t])), *map(repr, map(float, data.X[t]))])


# -- predictive draws ---------------------------------------------------------

DRAW_COLUMNS = ("row", "draw", "mean", "variance", "value")
SUMMARY_QUANTILES = (5, 25, 50, 75, 95)


def write_draws(path, draws_per_row, labels=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DRAW_COLUMNS)
        for i, d in enumerate(draws_per_row):
            label = labels[i] if labels is not None else i
            for s in range(len(d)):
                w.writerow([label, s, repr(float(d.means[s])), repr(float(d.variances[s])),
                            repr(float(d.draws[s]))])


def read_draws(path) -> tuple:
    """Returns ``(labels, [PredictiveDraws, ...])`` in file order of first appearance."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != DRAW_COLUMNS:
            raise SchemaError(f"{path}: header must be {','.join(DRAW_COLUMNS)}")
        groups = {}
        for i, r in enumerate(reader, start=2):
            if not r:
                continue
            if len(r) != len(DRAW_COLUMNS):
                raise SchemaError(f"{path}: row {i} has {len(r)} fields, expected {len(DRAW_COLUMNS)}")
            try:
                vals = [float(v) for v in r[2:]]
            except ValueError:
                raise SchemaError(f"{path}: row {i} has a non-numeric value")
            groups.setdefault(r[0], []).append(vals)
    labels = list(groups)
    out = []
    for k in labels:
        a = np.array(groups[k])
        out.append(PredictiveDraws(a[:, 0], a[:, 1], a[:, 2]))
    return labels, out


def write_summary(path, draws_per_row, labels=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "mean", "sd", *[f"q{q:02d}" for q in SUMMARY_QUANTILES]])
        for i, d in enumerate(draws_per_row):
            qs = np.percentile(d.draws, SUMMARY_QUANTILES)
            w.writerow([labels[i] if labels is not None else i, repr(float(d.draws.mean())),
                        repr(float(d.draws.std(ddof=1) if len(d) > 1 else 0.0)),
                        *map(repr, map(float, qs))])


def read_realized(path) -> tuple:
    header, body, labels = read_table(path)
    col = header.index("realized") if "realized" in header else 0
    return body[:, col], labels


# -- chain archive ------------------------------------------------------------

def _flat_columns(name, shape):
    if len(shape) == 1:
        return [name]
    idx = np.ndindex(*shape[1:])
    return [name + "_" + "_".join(str(i + 1) for i in ix) for ix in idx]


def save_chain(chain: ChainOutput, directory, fmt: str = "csv"):
    """Write a chain archive.

    ``csv``: one file per quantity, one row per retained draw, plus
    ``chain.json`` with dimensions and settings.  ``npz``: the same arrays
    in a single compressed ``chain.npz``.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    arrays = {k: getattr(chain, k) for k in _CHAIN_ARRAYS}
    if chain.aux is not None:
        arrays.update(chain.aux)
    meta = {
        "format": fmt, "n_draws": chain.n_draws, "K": chain.K, "Q": chain.Q, "T": chain.T,
        "sv_constant": chain.sv_constant, "mgp_a": list(chain.mgp_a),
        "config": chain.config.to_dict(), "wall_time": chain.wall_time,
        "step_sizes": None if chain.step_sizes is None else [float(v) for v in chain.step_sizes],
        "shapes": {k: list(v.shape) for k, v in arrays.items()},
        "dtypes": {k: str(v.dtype) for k, v in arrays.items()},
        "aux": chain.aux is not None,
    }
    if fmt == "npz":
        np.savez_compressed(d / "chain.npz", **arrays)
    elif fmt == "csv":
        for k, v in arrays.items():
            flat = v.reshape(v.shape[0], -1)
            with open(d / f"{k}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(_flat_columns(k, v.shape))
                for row in flat:
                    w.writerow([repr(x.item()) if v.dtype.kind == "f" else int(x) for x in row])
    else:
        raise ConfigError(f"unknown archive format {fmt!r}; use 'csv' or 'npz'")
    (d / ARCHIVE_MANIFEST).write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_chain(directory) -> ChainOutput:
    d = Path(directory)
    mpath = d / ARCHIVE_MANIFEST
    if not mpath.exists():
        raise SchemaError(f"{d}: not a chain archive ({ARCHIVE_MANIFEST} missing)")
    meta = json.loads(mpath.read_text())
    arrays = {}
    if meta["format"] == "npz":
        with np.load(d / "chain.npz") as z:
            arrays = {k: z[k] for k in z.files}
    else:
        for k, shape in meta["shapes"].items():
            with open(d / f"{k}.csv", newline="") as fh:
                rows = list(csv.reader(fh))[1:]
            dtype = np.dtype(meta["dtypes"][k])
            flat = np.array([[float(x) for x in r] for r in rows]) if rows else np.zeros((0,))
            arrays[k] = flat.astype(dtype).reshape(shape)
    aux_keys = [k for k in arrays if k not in _CHAIN_ARRAYS]
    chain = ChainOutput(
        **{k: arrays[k] for k in _CHAIN_ARRAYS},
        config=SamplerConfig.from_dict(meta["config"]),
        sv_constant=bool(meta["sv_constant"]), mgp_a=tuple(meta["mgp_a"]),
        step_sizes=None if meta.get("step_sizes") is None else np.array(meta["step_sizes"], float),
        wall_time=float(meta.get("wall_time", 0.0)),
        aux={k: arrays[k] for k in aux_keys} if meta.get("aux") else None,
    )
    return chain


# -- configs and manifests ----------------------------------------------------

CONFIG_SECTIONS = {"seed", "sampler", "dgp", "table2", "recursive"}


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    try:
        cfg = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: not valid YAML: {err}") from err
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(cfg) - CONFIG_SECTIONS
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    return cfg


def sampler_config_from(cfg: dict, **overrides) -> SamplerConfig:
    d = dict(cfg.get("sampler") or {})
    if "seed" in cfg and "seed" not in d:
        d["seed"] = cfg["seed"]
    d.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SamplerConfig.from_dict(d)
    except TypeError as err:
        raise ConfigError(str(err)) from err


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "numba", "scikit-learn", "pyyaml", "artifact"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def write_manifest(directory, command: str, cfg: dict, seed, extra=None):
    """Record what is needed to rerun a command: config hash, seed and versions."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "seed": seed,
        "versions": versions(),
    }
    if extra:
        manifest.update(extra)
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return manifest

