"""Experiment pipelines: synthetic recovery (A), correlation (B), transfer (C), CSV data (D)."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .. import __version__, rng
from ..cegen import TrainingError as CegenTrainingError
from ..cegen import train_cegen
from ..egan import TrainingError as GanTrainingError
from ..egan import train_edgan, train_ewgan
from ..eulergen import EulerGenerator, config_hash, extract_bs_params, extract_ou_params, generate
from ..sdesim import BsParams, OuParams, PathBatch, TimeGrid, simulate_bs, simulate_ou
from ..sources import ArraySource, DataSource, SimulatorSource
from ..wmetrics import ENVELOPE_KEYS, MetricReport, envelope_curves, evaluate, fid_avg, qvar_mse
from .config import ConfigError, ExperimentSpec
from .data import DatasetSpec, LoadedDataset, load_csv_dataset

# seed tags for harness-level random streams
REF_TAG, EVAL_TAG, TARGET_TAG, CORR_TAG, BOOT_TAG, EXTRACT_TAG, SUBSET_TAG = 11, 12, 13, 14, 15, 16, 17

TRAINING_ERRORS = (CegenTrainingError, GanTrainingError)

N_TARGET_DEVIATION = ("target data for the transfer experiment are independent simulated sequences, "
                      "not windows cut from one monthly history")


@dataclass
class Table:
    header: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def add(self, *row) -> None:
        if len(row) != len(self.header):
            raise ValueError(f"row has {len(row)} fields, table has {len(self.header)}")
        self.rows.append(tuple(row))

    def to_dict(self) -> dict:
        return {"header": list(self.header), "rows": [list(r) for r in self.rows]}


@dataclass
class ModelRun:
    model: str
    label: str  # process or dimension tag, e.g. "ou" or "d=4"
    seed: int
    metrics: MetricReport
    params: dict[str, float] = field(default_factory=dict)
    wall_clock: float = 0.0

    def to_dict(self) -> dict:
        return {"model": self.model, "label": self.label, "seed": self.seed, "params": self.params,
                "metrics": self.metrics.to_dict(), "wall_clock": self.wall_clock}


@dataclass
class RunReport:
    kind: str
    config: dict
    seeds: tuple[int, ...]
    runs: list[ModelRun] = field(default_factory=list)
    tables: dict[str, Table] = field(default_factory=dict)
    series: dict[str, Table] = field(default_factory=dict)
    deviations: list[str] = field(default_factory=list)
    wall_clock: float = 0.0
    versions: dict[str, str] = field(default_factory=dict)
    generators: dict[str, EulerGenerator] = field(default_factory=dict, repr=False)

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def deviate(self, note: str) -> None:
        if note not in self.deviations:
            self.deviations.append(note)

    def find(self, model: str, label: str | None = None) -> list[ModelRun]:
        return [r for r in self.runs if r.model == model and (label is None or r.label == label)]

    def numbers(self) -> dict:
        """Every reported number except timings, keyed for comparison across reruns."""
        out = {}
        for r in self.runs:
            key = f"{r.label}/{r.model}/{r.seed}"
            out.update({f"{key}/{k}": v for k, v in r.metrics.flat().items()})
            out.update({f"{key}/param_{k}": v for k, v in r.params.items()})
        for name, t in {**self.tables, **self.series}.items():
            out[name] = [list(row) for row in t.rows]
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config_hash": self.config_hash,
            "seeds": list(self.seeds),
            "runs": [r.to_dict() for r in self.runs],
            "deviations": list(self.deviations),
            "wall_clock": self.wall_clock,
            "versions": self.versions,
        }


# -- shared pieces -----------------------------------------------------------

def train_model(model: str, source: DataSource, spec: ExperimentSpec, seed: int,
                callback: Callable | None = None):
    """Train one model; returns (generator, per-iteration losses, auxiliary networks)."""
    try:
        if model == "cegen":
            res = train_cegen(source, replace(spec.cegen, seed=seed), callback=callback)
            return res.generator, res.losses, {}
        trainer = train_ewgan if model == "ewgan" else train_edgan
        res = trainer(source, replace(spec.gan, seed=seed), callback=callback)
        return res.generator, res.gen_losses, res.extra_nets()
    except TRAINING_ERRORS as exc:
        raise type(exc)(f"{model} (seed {seed}): {exc}") from exc


def _simulate(params, grid: TimeGrid, m: int, seed: int) -> PathBatch:
    if isinstance(params, OuParams):
        return simulate_ou(params, grid, m, seed)
    return simulate_bs(params, grid, m, seed)


def _curve_logger(spec: ExperimentSpec, reference: PathBatch, seed: int, table: Table) -> Callable | None:
    every = spec.num("experiment", "log_every", int)
    if every <= 0:
        return None
    m = min(reference.m, spec.eval_m)

    def cb(it, gen, loss):
        if (it + 1) % every == 0:
            g = generate(gen, m, rng.derive(seed, EVAL_TAG, it))
            table.add(it + 1, fid_avg(reference, g), qvar_mse(reference, g))
    return cb


def _envelope_series(reference: PathBatch, gen: PathBatch) -> Table:
    ref, g = envelope_curves(reference), envelope_curves(gen)
    keys = list(ENVELOPE_KEYS)
    header = ("date", "dim", *[f"ref_{k}" for k in keys], *[f"gen_{k}" for k in keys])
    t = Table(header)
    for i in range(reference.n_dates):
        for j in range(reference.dim):
            t.add(i, j, *[float(ref[k][i, j]) for k in keys], *[float(g[k][i, j]) for k in keys])
    return t


def _loss_series(losses) -> Table:
    t = Table(("iteration", "loss"))
    for i, v in enumerate(losses):
        t.add(i + 1, float(v))
    return t


def _summary(report: RunReport) -> Table:
    """Mean, spread and median of every metric and parameter across seeds."""
    t = Table(("label", "model", "quantity", "mean", "std", "median", "n_seeds"))
    groups: dict[tuple[str, str], list[ModelRun]] = {}
    for r in report.runs:
        groups.setdefault((r.label, r.model), []).append(r)
    for (label, model), runs in groups.items():
        values: dict[str, list[float]] = {}
        for r in runs:
            for k, v in {**r.metrics.flat(), **{f"param_{k}": v for k, v in r.params.items()}}.items():
                values.setdefault(k, []).append(v)
        for k, vs in values.items():
            a = np.asarray(vs)
            t.add(label, model, k, float(a.mean()), float(a.std()), float(np.median(a)), len(vs))
    return t


def _metric_table(report: RunReport, metrics) -> Table:
    cols = []
    for name in metrics:
        if name == "envelope":
            cols += [f"envelope_{k}" for k in ENVELOPE_KEYS]
        else:
            cols.append({"fid": "fid_avg", "qvar": "qvar_mse", "corr": "corr_mse",
                         "disc": "disc_score", "pred": "pred_score"}[name])
    t = Table(("label", "model", "seed", *cols))
    if not cols:
        return t
    for r in report.runs:
        flat = r.metrics.flat()
        t.add(r.label, r.model, r.seed, *[flat.get(c, "") for c in cols])
    return t


def _new_report(spec: ExperimentSpec) -> RunReport:
    return RunReport(spec.kind, spec.raw, spec.seeds, versions={"eulerts": __version__,
                                                                "numpy": np.__version__})


def _finish(report: RunReport, spec: ExperimentSpec, start: float) -> RunReport:
    report.tables["metrics"] = _metric_table(report, spec.metrics)
    report.tables["summary"] = _summary(report)
    for r in report.runs:
        for d in r.metrics.deviations:
            report.deviate(d)
    report.wall_clock = time.perf_counter() - start
    return report


def _bootstrap(real: PathBatch, m: int, seed: int) -> PathBatch:
    idx = rng.numpy_rng(seed, BOOT_TAG).integers(0, real.m, size=m)
    return PathBatch(real.values[idx].copy(), real.grid)


def _run_models(report: RunReport, spec: ExperimentSpec, label: str, source: DataSource,
                reference_for: Callable[[int], PathBatch], extract: Callable | None = None) -> None:
    """Reference self-comparison plus every requested model, for every seed."""
    for seed in spec.seeds:
        reference = reference_for(seed)
        t0 = time.perf_counter()
        other = reference_for(rng.derive(seed, REF_TAG, 1))
        self_rep = evaluate(reference, other, spec.metrics, seed, spec.scores)
        report.runs.append(ModelRun("reference", label, seed, self_rep, wall_clock=time.perf_counter() - t0))
        for model in spec.models:
            t0 = time.perf_counter()
            tag = f"{label}_{model}_seed{seed}"
            if model == "bootstrap":
                gen = _bootstrap(reference, reference.m, seed)
                params = {}
            else:
                curve = Table(("iteration", "fid_avg", "qvar_mse"))
                g, losses, _ = train_model(model, source, spec, seed, _curve_logger(spec, reference, seed, curve))
                report.generators[tag] = g
                report.series[f"{tag}_loss"] = _loss_series(losses)
                if curve.rows:
                    report.series[f"{tag}_curve"] = curve
                gen = generate(g, reference.m, rng.derive(seed, EVAL_TAG))
                params = extract(g, rng.derive(seed, EXTRACT_TAG)) if extract else {}
            rep = evaluate(reference, gen, spec.metrics, seed, spec.scores)
            rep.metadata.update({"model": model, "label": label, "config_hash": report.config_hash})
            for key, reason in rep.metadata.get("skipped", {}).items():
                report.deviate(f"{key} omitted for {label}: {reason}")
            report.series[f"{tag}_envelope"] = _envelope_series(reference, gen)
            report.runs.append(ModelRun(model, label, seed, rep, params, time.perf_counter() - t0))


def _extract_ou(g, seed):
    e = extract_ou_params(g, seed=seed)
    return {"theta": e.theta, "mu": e.mu, "sigma": e.sigma}


def _extract_bs(g, seed):
    r, s = extract_bs_params(g, seed=seed)
    return {"r": r, "sigma": s}


# -- experiments -------------------------------------------------------------

def run_experiment_a(spec: ExperimentSpec) -> RunReport:
    """1-d BS and OU: drift/volatility parameter estimates and dynamics errors."""
    start = time.perf_counter()
    report = _new_report(spec)
    processes = spec.listed("experiment", "processes")
    for proc in processes:
        if proc not in ("bs", "ou"):
            raise ConfigError(f"exp_a process must be bs or ou, got {proc!r}")
        params = spec.bs_params() if proc == "bs" else spec.ou_params()
        source = SimulatorSource(params, spec.grid)
        _run_models(report, spec, proc, source,
                    lambda s, p=params: _simulate(p, spec.grid, spec.eval_m, rng.derive(s, REF_TAG)),
                    _extract_bs if proc == "bs" else _extract_ou)
    params_t = Table(("label", "model", "seed", "parameter", "estimate"))
    for r in report.runs:
        for k, v in r.params.items():
            params_t.add(r.label, r.model, r.seed, k, v)
    report.tables["parameters"] = params_t
    return _finish(report, spec, start)


def random_correlation(dim: int, seed: int) -> np.ndarray:
    """Seeded well-conditioned correlation matrix (normalized Wishart plus a ridge)."""
    a = rng.numpy_rng(seed, CORR_TAG, dim).normal(size=(dim, dim))
    cov = a @ a.T + 0.1 * dim * np.eye(dim)
    s = 1.0 / np.sqrt(np.diag(cov))
    corr = cov * s[:, None] * s[None, :]
    np.fill_diagonal(corr, 1.0)
    return corr


def run_experiment_b(spec: ExperimentSpec) -> RunReport:
    """Correlated multivariate BS: correlation, FID/QVar and envelope errors per dimension."""
    start = time.perf_counter()
    report = _new_report(spec)
    try:
        dims = [int(v) for v in spec.listed("data", "dims")]
    except ValueError:
        raise ConfigError(f"data.dims must be a comma list of integers, got {spec.data['dims']!r}") from None
    kind = spec.data["corr"]
    if kind not in ("random", "identity"):
        raise ConfigError(f"data.corr must be random or identity, got {kind!r}")
    for d in dims:
        if d < 2:
            raise ConfigError(f"exp_b needs d >= 2 (correlation is undefined for d={d})")
    corr_t = Table(("dim", "i", "j", "rho"))
    for d in dims:
        corr = np.eye(d) if kind == "identity" else random_correlation(d, spec.seeds[0])
        for i in range(d):
            for j in range(d):
                corr_t.add(d, i, j, float(corr[i, j]))
        params = spec.bs_params(d, corr)
        _run_models(report, spec, f"d={d}", SimulatorSource(params, spec.grid),
                    lambda s, p=params: simulate_bs(p, spec.grid, spec.eval_m, rng.derive(s, REF_TAG)))
    report.tables["correlations"] = corr_t
    return _finish(report, spec, start)


def _ou_from(spec: ExperimentSpec, prefix: str) -> OuParams:
    return OuParams(spec.num("transfer", f"{prefix}_theta"), spec.num("transfer", f"{prefix}_mu"),
                    spec.num("transfer", f"{prefix}_sigma"), spec.num("data", "x0"))


def run_transfer(spec: ExperimentSpec) -> RunReport:
    """CEGEN on scarce OU data, with and without pre-training on a misspecified simulator.

    Run "transfer" trains on unlimited source paths until ``transfer_at`` and
    then continues (same optimizer, fresh noise streams) on the target
    sequences; run "scratch" trains on the target sequences alone. Both log
    extracted OU parameters every ``log_every`` iterations.
    """
    start = time.perf_counter()
    report = _new_report(spec)
    report.deviate(N_TARGET_DEVIATION)
    target, source = _ou_from(spec, "target"), _ou_from(spec, "source")
    n_target = spec.num("transfer", "n_target", int)
    switch = spec.num("transfer", "transfer_at", int)
    every = spec.num("transfer", "log_every", int)
    total = spec.cegen.iterations
    if not 0 <= switch <= total:
        raise ConfigError(f"transfer.transfer_at must lie in [0, {total}], got {switch}")
    final = Table(("run", "seed", "theta", "mu", "sigma"))
    for seed in spec.seeds:
        data = ArraySource(simulate_ou(target, spec.grid, n_target, rng.derive(seed, TARGET_TAG)))
        reference = simulate_ou(target, spec.grid, spec.eval_m, rng.derive(seed, REF_TAG))
        for run in ("transfer", "scratch"):
            t0 = time.perf_counter()
            traj = Table(("iteration", "theta", "mu", "sigma"))

            def cb(it, gen, loss, traj=traj):
                if every > 0 and (it + 1) % every == 0:
                    traj.add(it + 1, *extract_ou_params(gen, seed=rng.derive(seed, EXTRACT_TAG)).as_tuple())

            cfg = replace(spec.cegen, seed=seed)
            pre = switch if run == "transfer" else 0
            losses: list[float] = []
            gen = opt = None
            try:
                if pre > 0:
                    res = train_cegen(SimulatorSource(source, spec.grid), replace(cfg, iterations=pre), callback=cb)
                    gen, opt, losses = res.generator, res.optimizer, list(res.losses)
                res = train_cegen(data, replace(cfg, iterations=total - pre), generator=gen, optimizer=opt,
                                  start_iteration=pre, callback=cb)
            except CegenTrainingError as exc:
                raise CegenTrainingError(f"transfer run {run!r} (seed {seed}): {exc}") from exc
            g = res.generator
            losses += res.losses
            est = extract_ou_params(g, seed=rng.derive(seed, EXTRACT_TAG))
            final.add(run, seed, *est.as_tuple())
            gen_paths = generate(g, spec.eval_m, rng.derive(seed, EVAL_TAG))
            rep = evaluate(reference, gen_paths, [m for m in spec.metrics if m not in ("disc", "pred")], seed)
            rep.metadata.update({"model": "cegen", "label": run, "config_hash": report.config_hash})
            report.runs.append(ModelRun("cegen", run, seed, rep, {"theta": est.theta, "mu": est.mu,
                                                                   "sigma": est.sigma}, time.perf_counter() - t0))
            report.generators[f"{run}_cegen_seed{seed}"] = g
            report.series[f"{run}_seed{seed}_trajectory"] = traj
            report.series[f"{run}_seed{seed}_loss"] = _loss_series(losses)
    report.tables["transfer"] = final
    return _finish(report, spec, start)


def dataset_spec(spec: ExperimentSpec) -> DatasetSpec:
    path = spec.data["path"]
    if not path:
        raise ConfigError("data.path is required for CSV experiments")
    cols = tuple(spec.listed("data", "columns")) or None
    return DatasetSpec(path, cols, spec.num("data", "window", int), spec.num("data", "stride", int),
                       spec.num("data", "csv_maturity"), spec.num("data", "x0"))


def _csv_reference(ds: LoadedDataset, spec: ExperimentSpec, seed: int) -> PathBatch:
    """All windows, or a seeded subset of ``eval_m`` of them."""
    if ds.paths.m <= spec.eval_m:
        return ds.paths
    idx = np.sort(rng.numpy_rng(seed, SUBSET_TAG).choice(ds.paths.m, spec.eval_m, replace=False))
    return PathBatch(ds.paths.values[idx], ds.paths.grid)


def run_experiment_d(spec: ExperimentSpec, dataset: LoadedDataset | None = None) -> RunReport:
    """Real-data protocol on CSV windows: FID/QVar/Corr plus recurrent scores."""
    start = time.perf_counter()
    report = _new_report(spec)
    ds = dataset if dataset is not None else load_csv_dataset(dataset_spec(spec))
    if ds.dropped:
        report.deviate(f"{ds.dropped} windows with missing values were dropped")
    if ds.constant_columns:
        report.deviate(f"constant columns mapped to {ds.x0}: {', '.join(ds.constant_columns)}")
    if ds.paths.grid.n_steps != spec.grid.n_steps:
        spec = replace(spec, grid=ds.paths.grid)
    source = ArraySource(ds.paths)
    _run_models(report, spec, "csv", source, lambda s: _csv_reference(ds, spec, s))
    info = Table(("columns", "windows", "dropped", "window", "dim"))
    info.add(";".join(ds.columns), ds.paths.m, ds.dropped, ds.paths.n_dates, ds.paths.dim)
    report.tables["dataset"] = info
    return _finish(report, spec, start)


def run_custom(spec: ExperimentSpec) -> RunReport:
    """Requested models on one synthetic process (or a CSV), evaluated like exp_a/exp_d."""
    proc = spec.data["process"]
    if proc == "csv":
        return run_experiment_d(spec)
    if proc not in ("bs", "ou"):
        raise ConfigError(f"data.process must be bs, ou or csv, got {proc!r}")
    start = time.perf_counter()
    report = _new_report(spec)
    params = spec.bs_params() if proc == "bs" else spec.ou_params()
    _run_models(report, spec, proc, SimulatorSource(params, spec.grid),
                lambda s: _simulate(params, spec.grid, spec.eval_m, rng.derive(s, REF_TAG)),
                _extract_bs if proc == "bs" else _extract_ou)
    return _finish(report, spec, start)


RUNNERS = {"exp_a": run_experiment_a, "exp_b": run_experiment_b, "exp_c": run_transfer,
           "exp_d": run_experiment_d, "custom": run_custom}


def run(spec: ExperimentSpec) -> RunReport:
    return RUNNERS[spec.kind](spec)
