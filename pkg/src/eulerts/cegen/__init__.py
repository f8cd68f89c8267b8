"""Conditional Euler generator: partitions, conditional loss, training."""

from .loss import CellPlan, CollapseError, conditional_loss, evaluate_plan, plan_cells
from .partition import (
    ConditionalCell,
    KMeansPartition,
    PartitionSpec,
    build_kmeans_partition,
    build_quantile_partition,
    effective_k,
    kmeans,
    quantile_labels,
)
from .train import StagnationWarning, TrainConfig, TrainingError, TrainResult, train_cegen
from .bounds import BoundReport, BoundRow, lipschitz_estimate, coefficient_bound_check
