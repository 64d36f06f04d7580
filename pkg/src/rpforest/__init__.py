"""k-nearest-neighbor search with ensembles of randomly grown projection trees.

Build a forest of trees, each splitting on random directions at random
cuts; answer a query exactly within the union of the leaves it routes to.
More trees mean fewer missed neighbors, at linear extra cost.
"""

from .bench import (
    ConfigError,
    ExperimentConfig,
    InvariantError,
    ReportRow,
    emit_report,
    load_report,
    run_experiment,
    time_parallel_scaling,
)
from .data import DataFormatError, Dataset, gen_gaussian, load_points, save_points, standardize
from .evaluation import (
    AccuracyReport,
    ExactKnnTable,
    SeparationBoundParams,
    accuracy_report,
    exact_knn,
    exact_knn_cached,
    estimate_neck,
    missing_rate,
    nearest_pair,
    separation_bound,
    separation_probability,
)
from .forest import BatchResult, QueryResult, RandomProjectionForest
from .rng import derive_seed, seed_sequence, stream
from .tree import RpTree, TreeParams, build_tree

__version__ = "0.1.0"

__all__ = [
    "AccuracyReport",
    "BatchResult",
    "ConfigError",
    "DataFormatError",
    "Dataset",
    "ExactKnnTable",
    "ExperimentConfig",
    "InvariantError",
    "QueryResult",
    "RandomProjectionForest",
    "ReportRow",
    "RpTree",
    "SeparationBoundParams",
    "TreeParams",
    "accuracy_report",
    "build_tree",
    "derive_seed",
    "emit_report",
    "estimate_neck",
    "exact_knn",
    "exact_knn_cached",
    "gen_gaussian",
    "load_points",
    "load_report",
    "missing_rate",
    "nearest_pair",
    "run_experiment",
    "save_points",
    "seed_sequence",
    "separation_bound",
    "separation_probability",
    "standardize",
    "stream",
    "time_parallel_scaling",
    "__version__",
]
