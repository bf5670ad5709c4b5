"""Stochastic graph views: Bernoulli edge dropping and shared feature-column masking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Dataset, Graph


@dataclass(frozen=True)
class AugmentConfig:
    p_e1: float = 0.2
    p_f1: float = 0.2
    p_e2: float = 0.2
    p_f2: float = 0.2

    def __post_init__(self):
        for name in ("p_e1", "p_f1", "p_e2", "p_f2"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")


@dataclass(frozen=True)
class View:
    graph: Graph
    features: np.ndarray


def drop_edges(graph: Graph, p_e: float, rng: np.random.Generator) -> Graph:
    """Keep each undirected edge independently with probability ``1 - p_e``."""
    edges = graph.edges()
    keep = rng.random(len(edges)) >= p_e
    return Graph.from_edges(graph.num_nodes, edges[keep])


def mask_features(features: np.ndarray, p_f: float, rng: np.random.Generator) -> np.ndarray:
    """Zero whole feature columns; one mask vector is shared by every node."""
    if features.size == 0:
        raise ValueError("cannot mask an empty feature matrix")
    keep = rng.random(features.shape[1]) >= p_f
    return features * keep.astype(features.dtype)


def make_views(dataset: Dataset, cfg: AugmentConfig, rng: np.random.Generator) -> tuple[View, View]:
    # draw order is fixed: edges then features, view 1 then view 2
    g1 = drop_edges(dataset.graph, cfg.p_e1, rng)
    x1 = mask_features(dataset.features, cfg.p_f1, rng)
    g2 = drop_edges(dataset.graph, cfg.p_e2, rng)
    x2 = mask_features(dataset.features, cfg.p_f2, rng)
    return View(g1, x1), View(g2, x2)
