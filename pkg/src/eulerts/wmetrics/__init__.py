"""Gaussian distances and path-batch evaluation metrics."""

from .distances import (
    REG,
    ConvergenceWarning,
    GaussianSummary,
    bures_sq,
    empirical_summary,
    gaussian_w2_sq,
    hellinger,
    newton_schulz_sqrt,
    ns_residual,
    sqrtm_eig,
)
from .metrics import (
    CORR_EPS,
    ENVELOPE_KEYS,
    DegenerateCorrelationWarning,
    corr_mse,
    correlation_curve,
    envelope_curves,
    envelope_mse,
    fid_avg,
    qvar_curve,
    qvar_mse,
)
from .report import METRIC_NAMES, MetricReport, evaluate
from .scores import SCORE_DEVIATION, ScoreConfig, ScoreError, discriminative_score, predictive_score
