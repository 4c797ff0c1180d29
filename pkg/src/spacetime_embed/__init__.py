"""Directed graph embeddings in Riemannian and Lorentzian manifolds.

Edges are scored by a causal edge-probability model (Triple Fermi-Dirac) that
depends on both the squared interval and the time difference between two
embedded nodes, and trained with manifold-aware SGD.
"""
from .evaluation import Metrics, average_precision, best_f1_threshold, evaluate, f1_at, score_edges
from .graphs import (
    DirectedGraph,
    DupDivParams,
    SplitDataset,
    generate_chain,
    generate_common_neighbors,
    generate_cycle,
    generate_duplication_divergence,
    generate_transitive_chain,
    load_edge_list,
    make_dataset,
    sample_negatives,
    save_edge_list,
)
from .kernels import BACKEND
from .likelihood import FdParams, Likelihood, TfdParams, calibrate_k, edge_nll, fd, tfd, wrapped_tfd
from .manifolds import (
    Kind,
    ManifoldSpec,
    exp_map,
    interval_images,
    random_point,
    squared_distance,
    time_delta,
)
from .optimizer import (
    EmbeddingTable,
    TrainConfig,
    TrainingDivergedError,
    grad_check,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DirectedGraph",
    "DupDivParams",
    "EmbeddingTable",
    "FdParams",
    "Kind",
    "Likelihood",
    "ManifoldSpec",
    "Metrics",
    "SplitDataset",
    "TfdParams",
    "TrainConfig",
    "TrainingDivergedError",
    "average_precision",
    "best_f1_threshold",
    "calibrate_k",
    "edge_nll",
    "evaluate",
    "exp_map",
    "f1_at",
    "fd",
    "generate_chain",
    "generate_common_neighbors",
    "generate_cycle",
    "generate_duplication_divergence",
    "generate_transitive_chain",
    "grad_check",
    "interval_images",
    "load_checkpoint",
    "load_edge_list",
    "make_dataset",
    "random_point",
    "sample_negatives",
    "save_checkpoint",
    "save_edge_list",
    "score_edges",
    "squared_distance",
    "tfd",
    "time_delta",
    "train",
    "wrapped_tfd",
]
