"""Inductive conformal classification with hinge, margin and the IP_M combination."""

from .classifiers import ClassifierSpec, FittedClassifier, baseline_error, fit
from .conformal import (
    NCF,
    CalibrationTable,
    ConformalPredictor,
    PredictionSet,
    calibrate,
    combine_ip_m,
    p_value,
    predict_ip_m,
    score,
)
from .dataset import Dataset, FoldSplit, SplitPlan, generate_synthetic, load_csv, make_splits
from .evaluation import (
    ExperimentGrid,
    FoldResult,
    build_matrix,
    paired_t_test,
    run_grid,
    summarize_validity,
    threshold_compare,
)
from .metrics import (
    BatchOutcome,
    MetricRecord,
    avg_c,
    effective_one_c,
    empirical_error,
    one_c,
    pearson_correlation,
)

__version__ = "0.1.0"
