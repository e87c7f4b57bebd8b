"""Honest quantile regression forests for autoregressive time series."""

__version__ = "0.1.0"

from .data import LagDataset, Series, embed, load_series_csv, log_returns
from .estimator import (
    WeightVector,
    exact_weights,
    forest_weights,
    predict_quantiles,
    score_diagnostic,
    tree_weights,
    weighted_quantile,
)
from .evaluation import (
    BiasSample,
    CoverageRow,
    ReportRow,
    Scenario,
    SimulationResult,
    coverage_table,
    empirical_coverage,
    mbias_sdbias_mse,
    run_simulation,
)
from .forest import (
    DoubleSample,
    Forest,
    ForestConfig,
    Tree,
    best_split,
    choose_split_directions,
    draw_double_sample,
    enumerate_double_samples,
    fit_forest,
    forest_from_doc,
    forest_to_doc,
    grow_tree,
    leaf_diameter_stats,
    leaf_of,
)
from .synth import (
    DgpSpec,
    error_quantile,
    g_eval,
    g_eval_rows,
    iterate_skeleton,
    simulate_path,
    true_quantile,
)
from .wnw import (
    WnwConfig,
    WnwModel,
    bandwidth_rule_of_thumb,
    fit_wnw,
    select_bandwidth_cv,
    wnw_cdf,
    wnw_quantile,
)

__all__ = [
    "__version__",
    "Series",
    "LagDataset",
    "embed",
    "log_returns",
    "load_series_csv",
    "DgpSpec",
    "g_eval",
    "g_eval_rows",
    "error_quantile",
    "true_quantile",
    "iterate_skeleton",
    "simulate_path",
    "ForestConfig",
    "DoubleSample",
    "Tree",
    "Forest",
    "enumerate_double_samples",
    "draw_double_sample",
    "choose_split_directions",
    "best_split",
    "grow_tree",
    "fit_forest",
    "leaf_of",
    "leaf_diameter_stats",
    "forest_to_doc",
    "forest_from_doc",
    "WeightVector",
    "tree_weights",
    "forest_weights",
    "weighted_quantile",
    "predict_quantiles",
    "score_diagnostic",
    "exact_weights",
    "WnwConfig",
    "WnwModel",
    "wnw_cdf",
    "wnw_quantile",
    "bandwidth_rule_of_thumb",
    "select_bandwidth_cv",
    "fit_wnw",
    "Scenario",
    "BiasSample",
    "ReportRow",
    "CoverageRow",
    "SimulationResult",
    "mbias_sdbias_mse",
    "empirical_coverage",
    "run_simulation",
    "coverage_table",
]
