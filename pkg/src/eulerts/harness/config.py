"""Sectioned key-value configuration with documented defaults.

Every key below has a default; ``load_config`` returns the fully
materialized mapping, which experiments write back next to their results.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..cegen import PartitionSpec, TrainConfig
from ..egan import GanConfig
from ..sdesim import BsParams, OuParams, TimeGrid
from ..wmetrics import METRIC_NAMES, ScoreConfig

MODELS = ("cegen", "ewgan", "edgan", "bootstrap")  # bootstrap: resampled real data, a sanity baseline
KINDS = ("exp_a", "exp_b", "exp_c", "exp_d", "custom")

# section -> key -> (default, help)
DEFAULTS: dict[str, dict[str, tuple[str, str]]] = {
    "experiment": {
        "kind": ("custom", "one of exp_a, exp_b, exp_c, exp_d, custom"),
        "seed": ("0", "base seed; runs use seed, seed+1, ..."),
        "n_seeds": ("3", "number of seeds per model"),
        "models": ("cegen", "comma list from cegen, ewgan, edgan, bootstrap (may be empty)"),
        "metrics": ("fid,qvar,corr,envelope", "comma list from " + ",".join(METRIC_NAMES)),
        "eval_m": ("1000", "generated/reference paths used for evaluation"),
        "processes": ("bs,ou", "synthetic processes run by exp_a"),
        "log_every": ("250", "iterations between metric-curve points (0: off)"),
    },
    "grid": {
        "t0": ("0.0", "start time in years"),
        "maturity": ("0.25", "end time in years"),
        "n_steps": ("30", "number of Euler steps N"),
    },
    "data": {
        "process": ("ou", "bs, ou or csv"),
        "r": ("0.8", "Black-Scholes drift"),
        "sigma": ("0.3", "Black-Scholes volatility"),
        "x0": ("0.2", "initial value"),
        "theta": ("7.0", "OU mean-reversion speed"),
        "mu": ("0.6", "OU long-run mean"),
        "ou_sigma": ("0.1", "OU volatility"),
        "dims": ("4", "comma list of dimensions for exp_b"),
        "corr": ("random", "exp_b correlation: random or identity"),
        "path": ("", "CSV file for process = csv"),
        "columns": ("", "comma list of CSV columns (empty: all numeric)"),
        "window": ("30", "CSV window length"),
        "stride": ("1", "CSV window stride"),
        "csv_maturity": ("1.0", "time span assigned to one CSV window"),
    },
    "cegen": {
        "iterations": ("5000", "training iterations"),
        "batch": ("300", "batch size m"),
        "lr": ("0.001", "Adam learning rate"),
        "mode": ("quantile", "quantile or kmeans partition"),
        "k": ("10", "cells per dimension (quantile) or clusters (kmeans)"),
        "lam": ("1.0", "disjoint-support penalty weight"),
        "min_cell": ("5", "minimum samples for a full W2 cell term"),
        "standardize": ("true", "standardize network state inputs"),
    },
    "gan": {
        "iterations": ("5000", "training iterations"),
        "batch": ("300", "batch size m"),
        "n_critic": ("5", "critic steps per generator step"),
        "gp_coef": ("10.0", "gradient-penalty weight"),
        "lr_gen": ("0.001", "generator learning rate"),
        "lr_critic": ("0.001", "critic learning rate"),
        "standardize": ("true", "standardize network state inputs"),
    },
    "transfer": {
        "target_theta": ("2.0", "target OU theta"),
        "target_mu": ("0.6", "target OU mu"),
        "target_sigma": ("0.15", "target OU sigma"),
        "source_theta": ("3.0", "misspecified OU theta"),
        "source_mu": ("0.8", "misspecified OU mu"),
        "source_sigma": ("0.1", "misspecified OU sigma"),
        "n_target": ("60", "number of target sequences"),
        "transfer_at": ("1000", "iteration at which training switches to target data"),
        "log_every": ("50", "parameter logging interval"),
    },
    "scores": {
        "iterations": ("500", "recurrent scorer training iterations"),
        "batch": ("128", "scorer batch size"),
        "lr": ("0.001", "scorer learning rate"),
        "repetitions": ("10", "scores averaged over this many trainings"),
    },
}


class ConfigError(ValueError):
    pass


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(interpolation=None)
    for section, keys in DEFAULTS.items():
        p[section] = {k: v for k, (v, _) in keys.items()}
    return p


def load_config(path=None, text: str | None = None, overrides: dict | None = None) -> dict[str, dict[str, str]]:
    """Defaults overlaid with a file (or text) and ``{section: {key: value}}`` overrides."""
    p = _parser()
    user = configparser.ConfigParser(interpolation=None)
    try:
        if path is not None:
            if not Path(path).exists():
                raise ConfigError(f"config file not found: {path}")
            user.read(path)
        if text is not None:
            user.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for section in user.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in user[section].items():
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            p[section][key] = value
    for section, kv in (overrides or {}).items():
        for key, value in kv.items():
            if section not in DEFAULTS or key not in DEFAULTS[section]:
                raise ConfigError(f"unknown override {section}.{key}")
            p[section][key] = str(value)
    return {s: dict(p[s]) for s in DEFAULTS}


def config_text(cfg: dict[str, dict[str, str]]) -> str:
    p = configparser.ConfigParser(interpolation=None)
    for s in DEFAULTS:
        p[s] = cfg[s]
    buf = io.StringIO()
    p.write(buf)
    return buf.getvalue()


def _list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _num(cfg, section, key, kind=float):
    try:
        return kind(cfg[section][key])
    except ValueError:
        raise ConfigError(f"{section}.{key} = {cfg[section][key]!r} is not a valid {kind.__name__}") from None


@dataclass
class ExperimentSpec:
    kind: str
    seeds: tuple[int, ...]
    models: tuple[str, ...]
    metrics: tuple[str, ...]
    grid: TimeGrid
    cegen: TrainConfig
    gan: GanConfig
    scores: ScoreConfig
    eval_m: int
    raw: dict = field(default_factory=dict)

    @property
    def data(self) -> dict[str, str]:
        return self.raw["data"]

    @property
    def transfer(self) -> dict[str, str]:
        return self.raw["transfer"]

    def bs_params(self, dim: int = 1, corr: np.ndarray | None = None) -> BsParams:
        r, s, x0 = (_num(self.raw, "data", k) for k in ("r", "sigma", "x0"))
        if dim == 1 and corr is None:
            return BsParams(r, s, x0)
        return BsParams(r, tuple([s] * dim), tuple([x0] * dim), corr)

    def ou_params(self) -> OuParams:
        return OuParams(_num(self.raw, "data", "theta"), _num(self.raw, "data", "mu"),
                        _num(self.raw, "data", "ou_sigma"), _num(self.raw, "data", "x0"))

    def num(self, section: str, key: str, kind=float):
        return _num(self.raw, section, key, kind)

    def listed(self, section: str, key: str) -> list[str]:
        return _list(self.raw[section][key])


def build_spec(cfg: dict[str, dict[str, str]], kind: str | None = None) -> ExperimentSpec:
    """Validate a materialized config and turn it into typed objects."""
    kind = kind or cfg["experiment"]["kind"]
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; choose from {KINDS}")
    models = tuple(_list(cfg["experiment"]["models"]))
    for m in models:
        if m not in MODELS:
            raise ConfigError(f"unknown model {m!r}; choose from {MODELS}")
    metrics = tuple(_list(cfg["experiment"]["metrics"]))
    for m in metrics:
        if m not in METRIC_NAMES:
            raise ConfigError(f"unknown metric {m!r}; choose from {METRIC_NAMES}")
    seed = _num(cfg, "experiment", "seed", int)
    n_seeds = _num(cfg, "experiment", "n_seeds", int)
    if n_seeds < 1:
        raise ConfigError("experiment.n_seeds must be >= 1")
    try:
        grid = TimeGrid(_num(cfg, "grid", "t0"), _num(cfg, "grid", "maturity"), _num(cfg, "grid", "n_steps", int))
        c = cfg["cegen"]
        part = PartitionSpec(c["mode"], _num(cfg, "cegen", "k", int), _num(cfg, "cegen", "lam"),
                             _num(cfg, "cegen", "min_cell", int))
        train = TrainConfig(_num(cfg, "cegen", "iterations", int), _num(cfg, "cegen", "batch", int),
                            _num(cfg, "cegen", "lr"), part, seed, standardize=_bool(c["standardize"]))
        gan = GanConfig(_num(cfg, "gan", "iterations", int), _num(cfg, "gan", "batch", int),
                        _num(cfg, "gan", "n_critic", int), _num(cfg, "gan", "gp_coef"),
                        _num(cfg, "gan", "lr_gen"), _num(cfg, "gan", "lr_critic"), seed,
                        standardize=_bool(cfg["gan"]["standardize"]))
        scores = ScoreConfig(_num(cfg, "scores", "iterations", int), _num(cfg, "scores", "batch", int),
                             _num(cfg, "scores", "lr"), _num(cfg, "scores", "repetitions", int))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentSpec(kind, tuple(seed + i for i in range(n_seeds)), models, metrics, grid, train, gan,
                          scores, _num(cfg, "experiment", "eval_m", int), cfg)
