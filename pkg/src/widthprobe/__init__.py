"""Estimate the minimum width of trained fully connected layers.

The library trains one network per cross-validation fold, inserts a
truncated-SVD bottleneck after a hidden layer, and bisects the
bottleneck width under a bootstrap worst-case agreement test.  The
smallest width at which the narrowed network still makes statistically
equivalent predictions estimates how many neurons the layer actually
needs.
"""

__version__ = "0.1.0"

from .data import (
    Dataset,
    FoldPlan,
    apply_standardize,
    downscale_8x8,
    feature_stats,
    load_csv,
    load_idx,
    make_folds,
    one_hot,
    split_dataset,
)
from .equiv import (
    EquivalenceVerdict,
    Metric,
    bootstrapped_pairs,
    build_pair_eval_set,
    evaluation_stream,
    get_metric,
    metric_eval,
    threshold_q0,
    worst_q,
    worst_q_from_predictions,
)
from .errors import (
    ConfigError,
    DataError,
    FormatError,
    FormulaError,
    LayerError,
    NumericError,
    ShapeError,
    StructureError,
    TrainError,
    WidthProbeError,
)
from .formula import parse_formula, render_formula
from .linalg import SvdFactors, effective_rank, frobenius, matmul, thin_svd
from .nn import BatchNormLayer, DenseLayer, FlattenLayer, Network
from .probe import (
    ProbedNetwork,
    SvdAutoencoder,
    build_autoencoder,
    fold_decoder_linear,
    probed_forward,
)
from .report import (
    EstimateReport,
    LayerEstimate,
    TrainReport,
    VerifyReport,
    load_report,
    render_summary,
    render_sweep_tsv,
    report_from_dict,
)
from .search import (
    SearchConfig,
    TrainedEnsemble,
    bisect_layer_width,
    bisect_threshold,
    cross_validate_train,
    estimate_min_neurons,
    narrowed_template,
    resolve_probe_layers,
    search_widths,
    verify_retrain,
)
from .training import (
    Adam,
    TrainResult,
    TrainSchedule,
    cross_entropy,
    cross_entropy_grad,
    evaluate_loss,
    get_loss,
    loss_and_grads,
    mse,
    mse_grad,
    train,
)

__all__ = [
    "__version__",
    "Adam",
    "BatchNormLayer",
    "ConfigError",
    "DataError",
    "Dataset",
    "DenseLayer",
    "EquivalenceVerdict",
    "EstimateReport",
    "FlattenLayer",
    "FoldPlan",
    "FormatError",
    "FormulaError",
    "LayerError",
    "LayerEstimate",
    "Metric",
    "Network",
    "NumericError",
    "ProbedNetwork",
    "SearchConfig",
    "ShapeError",
    "StructureError",
    "SvdAutoencoder",
    "SvdFactors",
    "TrainError",
    "TrainReport",
    "TrainResult",
    "TrainSchedule",
    "TrainedEnsemble",
    "VerifyReport",
    "WidthProbeError",
    "apply_standardize",
    "bisect_layer_width",
    "bisect_threshold",
    "bootstrapped_pairs",
    "build_autoencoder",
    "build_pair_eval_set",
    "cross_entropy",
    "cross_entropy_grad",
    "cross_validate_train",
    "downscale_8x8",
    "effective_rank",
    "estimate_min_neurons",
    "evaluate_loss",
    "evaluation_stream",
    "feature_stats",
    "fold_decoder_linear",
    "frobenius",
    "get_loss",
    "get_metric",
    "load_csv",
    "load_idx",
    "load_report",
    "loss_and_grads",
    "make_folds",
    "matmul",
    "metric_eval",
    "mse",
    "mse_grad",
    "narrowed_template",
    "one_hot",
    "parse_formula",
    "probed_forward",
    "render_formula",
    "render_summary",
    "render_sweep_tsv",
    "report_from_dict",
    "resolve_probe_layers",
    "search_widths",
    "split_dataset",
    "thin_svd",
    "threshold_q0",
    "train",
    "verify_retrain",
    "worst_q",
    "worst_q_from_predictions",
]
