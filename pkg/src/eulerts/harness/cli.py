"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 training failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..adcore import ShapeError
from ..cegen import TrainingError as CegenTrainingError
from ..egan import TrainingError as GanTrainingError
from ..eulergen import CheckpointError, generate, load_checkpoint, save_checkpoint
from ..sdesim import BsParams, OuParams, PathBatch, PathFormatError, SimulationError, TimeGrid, simulate_bs, simulate_ou
from ..sources import ArraySource, SimulatorSource
from ..wmetrics import METRIC_NAMES, ScoreConfig, evaluate
from .config import DEFAULTS, ConfigError, build_spec, load_config
from .data import DatasetError, load_csv_dataset
from .experiments import dataset_spec, run, train_model
from .fixtures import write_stock_csv
from .report import DEFAULT_FORMATS, FORMATS, ReportError, emit_report, render

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3

DATA_ERRORS = (DatasetError, PathFormatError, CheckpointError, SimulationError, ShapeError, ReportError,
               FileNotFoundError, IsADirectoryError, PermissionError)
TRAINING_ERRORS = (CegenTrainingError, GanTrainingError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_paths(path) -> PathBatch:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return PathBatch.from_csv(p) if p.suffix == ".csv" else PathBatch.load(p)


def write_paths(batch: PathBatch, path) -> None:
    if Path(path).suffix == ".csv":
        batch.to_csv(path)
    else:
        batch.save(path)


def _overrides(items) -> dict:
    out: dict[str, dict[str, str]] = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        out.setdefault(section.strip(), {})[name.strip()] = value.strip()
    return out


def cmd_simulate(a) -> int:
    grid = TimeGrid(0.0, a.maturity, a.steps)
    if a.process == "bs":
        batch = simulate_bs(BsParams(a.r, a.sigma, a.x0), grid, a.m, a.seed)
    else:
        batch = simulate_ou(OuParams(a.theta, a.mu, a.sigma, a.x0), grid, a.m, a.seed)
    write_paths(batch, a.out)
    print(f"wrote {batch.m} paths ({batch.n_dates} dates, d={batch.dim}) to {a.out}")
    return EXIT_OK


def cmd_train(a) -> int:
    cfg = load_config(a.config, overrides=_overrides(a.set))
    spec = build_spec(cfg, "custom")
    seed = a.seed if a.seed is not None else spec.seeds[0]
    if a.paths:
        source = ArraySource(read_paths(a.paths))
    elif spec.data["process"] == "csv":
        source = ArraySource(load_csv_dataset(dataset_spec(spec)).paths)
    elif spec.data["process"] in ("bs", "ou"):
        params = spec.bs_params() if spec.data["process"] == "bs" else spec.ou_params()
        source = SimulatorSource(params, spec.grid)
    else:
        raise ConfigError(f"data.process must be bs, ou or csv, got {spec.data['process']!r}")
    gen, losses, extra = train_model(a.model, source, spec, seed)
    save_checkpoint(gen, a.out, {"final_loss": losses[-1] if losses else None}, extra)
    print(f"trained {a.model} for {len(losses)} iterations; checkpoint written to {a.out}")
    return EXIT_OK


def cmd_generate(a) -> int:
    gen = load_checkpoint(a.checkpoint)
    batch = generate(gen, a.m, a.seed)
    write_paths(batch, a.out)
    print(f"wrote {batch.m} generated paths to {a.out}")
    return EXIT_OK


def cmd_evaluate(a) -> int:
    real, gen = read_paths(a.real), read_paths(a.gen)
    metrics = [m.strip() for m in a.metrics.split(",") if m.strip()]
    for m in metrics:
        if m not in METRIC_NAMES:
            raise UsageError(f"unknown metric {m!r}; choose from {', '.join(METRIC_NAMES)}")
    try:
        rep = evaluate(real, gen, metrics, a.seed, ScoreConfig())
    except ValueError as exc:
        raise DatasetError(str(exc)) from None
    sys.stdout.write(rep.to_text())
    if a.out:
        Path(a.out).write_text(rep.to_json() + "\n")
    return EXIT_OK


def cmd_exp(a) -> int:
    cfg = load_config(a.config, overrides=_overrides(a.set))
    spec = build_spec(cfg, f"exp_{a.which}" if a.which != "custom" else "custom")
    report = run(spec)
    formats = tuple(f.strip() for f in a.formats.split(",") if f.strip())
    emit_report(report, a.out, formats)
    print(f"{spec.kind}: report written to {a.out} (config {report.config_hash})")
    return EXIT_OK


def cmd_report(a) -> int:
    sys.stdout.write(render(a.dir))
    return EXIT_OK


def cmd_config(a) -> int:
    for section, keys in DEFAULTS.items():
        print(f"[{section}]")
        for key, (value, doc) in keys.items():
            print(f"# {doc}\n{key} = {value}")
        print()
    return EXIT_OK


def cmd_fixture(a) -> int:
    write_stock_csv(a.out, a.rows, a.seed, a.missing)
    print(f"wrote stock-like CSV with {a.rows} rows to {a.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="eulerts", description="Euler-scheme time-series generators and experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate Black-Scholes or OU paths")
    s.add_argument("--process", choices=("bs", "ou"), required=True)
    s.add_argument("--r", type=float, default=0.8)
    s.add_argument("--sigma", type=float, default=None, help="volatility (default 0.3 for bs, 0.1 for ou)")
    s.add_argument("--x0", type=float, default=0.2)
    s.add_argument("--theta", type=float, default=7.0)
    s.add_argument("--mu", type=float, default=0.6)
    s.add_argument("--maturity", type=float, default=0.25)
    s.add_argument("--steps", type=int, default=30)
    s.add_argument("--m", type=int, default=1000)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True, help=".csv for text, anything else for binary")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train one generator and write a checkpoint")
    t.add_argument("--model", choices=("cegen", "ewgan", "edgan"), required=True)
    t.add_argument("--config", help="INI file; missing keys take defaults")
    t.add_argument("--paths", help="path batch file to train on (overrides [data])")
    t.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config key")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("generate", help="sample paths from a checkpoint")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--m", type=int, default=1000)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="compare real and generated path files")
    e.add_argument("--real", required=True)
    e.add_argument("--gen", required=True)
    e.add_argument("--metrics", default="fid,qvar,corr,envelope")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="write the structured report here (JSON)")
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("exp", help="run an experiment pipeline and emit its report")
    x.add_argument("which", choices=("a", "b", "c", "d", "custom"))
    x.add_argument("--config", help="INI file; missing keys take defaults")
    x.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config key")
    x.add_argument("--out", required=True, help="report directory")
    x.add_argument("--formats", default=",".join(DEFAULT_FORMATS), help=f"subset of {','.join(FORMATS)}")
    x.set_defaults(func=cmd_exp)

    r = sub.add_parser("report", help="render the tables of an emitted report")
    r.add_argument("dir")
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("config", help="print every configuration key with its default")
    c.set_defaults(func=cmd_config)

    f = sub.add_parser("fixture", help="write a synthetic stock-like CSV")
    f.add_argument("--out", required=True)
    f.add_argument("--rows", type=int, default=600)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--missing", type=int, default=0, help="blank this many Close cells")
    f.set_defaults(func=cmd_fixture)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) == "simulate" and args.sigma is None:
        args.sigma = 0.3 if args.process == "bs" else 0.1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TRAINING_ERRORS as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except json.JSONDecodeError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
