"""Configuration, CSV ingestion, experiment pipelines, reports and the CLI."""

from .config import DEFAULTS, KINDS, MODELS, ConfigError, ExperimentSpec, build_spec, config_text, load_config
from .data import REBASE_X0, DatasetError, DatasetSpec, LoadedDataset, load_csv_dataset, window_count
from .experiments import (
    ModelRun,
    RunReport,
    Table,
    random_correlation,
    run,
    run_custom,
    run_experiment_a,
    run_experiment_b,
    run_experiment_d,
    run_transfer,
    train_model,
)
from .fixtures import STOCK_COLUMNS, stock_like_rows, write_stock_csv
from .report import FORMATS, ReportError, emit_report, render, report_json, table_csv
