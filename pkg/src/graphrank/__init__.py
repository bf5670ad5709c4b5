"""Self-supervised node embeddings with a margin rank loss over augmented graph views."""

from .augment import AugmentConfig, View, drop_edges, make_views, mask_features
from .datasets import generate_sbm, import_planetoid_raw, load_dataset, save_dataset
from .evaluation import (
    EvalReport,
    ari,
    auc,
    average_precision,
    inter_class_distance,
    intra_class_variance,
    kmeans,
    linear_probe,
    link_scores,
    nmi,
)
from .graph import Dataset, EdgeSplit, Graph, NodeSplit, NormAdj, normalize_adjacency
from .numkit import EncoderParams, adam_step, finite_diff_check, gcn_backward, gcn_forward, spmm, xavier_init
from .objectives import infonce_loss, rank_loss, sample_negatives, sample_negatives_label_filtered, similarity
from .splits import Fractional, PerClass, edge_split, node_split
from .trainer import TrainConfig, TrainReport, train, train_for_link_prediction

__version__ = "0.1.0"

__all__ = [
    "adam_step",
    "ari",
    "auc",
    "AugmentConfig",
    "average_precision",
    "Dataset",
    "drop_edges",
    "edge_split",
    "EdgeSplit",
    "EncoderParams",
    "EvalReport",
    "finite_diff_check",
    "Fractional",
    "gcn_backward",
    "gcn_forward",
    "generate_sbm",
    "Graph",
    "import_planetoid_raw",
    "infonce_loss",
    "inter_class_distance",
    "intra_class_variance",
    "kmeans",
    "linear_probe",
    "link_scores",
    "load_dataset",
    "make_views",
    "mask_features",
    "nmi",
    "node_split",
    "NodeSplit",
    "NormAdj",
    "normalize_adjacency",
    "PerClass",
    "rank_loss",
    "sample_negatives",
    "sample_negatives_label_filtered",
    "save_dataset",
    "similarity",
    "spmm",
    "train",
    "train_for_link_prediction",
    "TrainConfig",
    "TrainReport",
    "View",
    "xavier_init",
]
