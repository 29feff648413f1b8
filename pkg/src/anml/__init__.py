"""Adaptive neighborhood metric learning.

Log-exp mean surrogates for trimmed neighborhood radii, the convex linear
metric learner built on them (with its parameterized-NCA form), the anchored
batch losses for embeddings, inseparable-region diagnostics, and a
reproducible k-NN / Recall@K evaluation harness.
"""

from ._kernels import backend_name
from .data import (LabeledDataset, SplitPlan, fetch_dataset, load_bundled,
                   load_dataset, make_splits, pca_reduce, standardize)
from .evaluation import (ExperimentConfig, RecallResult, SyntheticSpec,
                         TrialResult, knn_classify, recall_at_k,
                         run_experiment, toy_embedding_train)
from .exceptions import (AnmlError, ConvergenceError, InvalidInputError,
                         NumericError, ParseError, SolverError)
from .geometry import (QueryContext, RegionVerdict, class_gap,
                       inseparability_report, lipschitz_lower_bound,
                       membership_na, membership_nb)
from .linear import (LanmlConfig, MetricMatrix, PairSets, build_pair_sets,
                     lanml_objective, mahalanobis_sq, pnca_objective,
                     solve_lanml, solve_pnca)
from .logexp import (NeighborhoodSpec, gamma_for_k, log_exp_mean,
                     sup_log_exp, trimmed_radius)
from .losses import (DanmlConfig, EmbeddingBatch, LossResult, MiningConfig,
                     danml_loss, lifted_improved_loss, mine_pairs, ms_loss,
                     npairs_improved_loss, triplet_loss)

__version__ = "0.1.0"

__all__ = [
    "AnmlError", "ConvergenceError", "InvalidInputError", "NumericError",
    "ParseError", "SolverError",
    "NeighborhoodSpec", "log_exp_mean", "sup_log_exp", "trimmed_radius",
    "gamma_for_k",
    "QueryContext", "RegionVerdict", "membership_na", "membership_nb",
    "class_gap", "lipschitz_lower_bound", "inseparability_report",
    "MetricMatrix", "LanmlConfig", "PairSets", "mahalanobis_sq",
    "build_pair_sets", "lanml_objective", "solve_lanml", "pnca_objective",
    "solve_pnca",
    "EmbeddingBatch", "DanmlConfig", "MiningConfig", "LossResult",
    "danml_loss", "ms_loss", "lifted_improved_loss", "npairs_improved_loss",
    "triplet_loss", "mine_pairs",
    "LabeledDataset", "SplitPlan", "load_dataset", "load_bundled",
    "standardize", "pca_reduce", "make_splits", "fetch_dataset",
    "TrialResult", "RecallResult", "ExperimentConfig", "SyntheticSpec",
    "knn_classify", "recall_at_k", "run_experiment", "toy_embedding_train",
    "backend_name",
]
