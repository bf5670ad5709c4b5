"""Core graph containers: CSR adjacency, datasets, splits and the GCN propagation matrix."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp


class GraphError(ValueError):
    """Raised when graph or dataset data violate structural invariants."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph stored in compressed-row form.

    Both directions of every edge are stored, neighbor lists are sorted and
    self-loops are never stored.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", _frozen(np.asarray(self.row_offsets, dtype=np.int64)))
        object.__setattr__(self, "col_indices", _frozen(np.asarray(self.col_indices, dtype=np.int64)))
        if self.row_offsets.shape != (self.num_nodes + 1,):
            raise GraphError("row_offsets must have length num_nodes + 1")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != len(self.col_indices):
            raise GraphError("row_offsets must start at 0 and end at len(col_indices)")
        if np.any(np.diff(self.row_offsets) < 0):
            raise GraphError("row_offsets must be nondecreasing")
        if len(self.col_indices) % 2:
            raise GraphError("an undirected graph stores an even number of entries")

    @classmethod
    def from_edges(cls, num_nodes: int, edges: Iterable | np.ndarray) -> "Graph":
        """Build a graph from (src, dst) pairs; duplicates and reversed pairs collapse.

        Self-loops are rejected.
        """
        arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if arr.size and (arr.min() < 0 or arr.max() >= num_nodes):
            raise GraphError(f"edge endpoint out of range [0, {num_nodes})")
        if np.any(arr[:, 0] == arr[:, 1]):
            bad = arr[arr[:, 0] == arr[:, 1]][0]
            raise GraphError(f"self-loop on node {bad[0]}")
        lo = np.minimum(arr[:, 0], arr[:, 1])
        hi = np.maximum(arr[:, 0], arr[:, 1])
        keys = np.unique(lo * num_nodes + hi)
        lo, hi = keys // num_nodes, keys % num_nodes
        src = np.concatenate([lo, hi])
        dst = np.concatenate([hi, lo])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        offsets = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=num_nodes), out=offsets[1:])
        return cls(num_nodes, offsets, dst)

    @property
    def num_undirected_edges(self) -> int:
        return len(self.col_indices) // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def contains(self, i: int, j: int) -> bool:
        nbrs = self.neighbors(i)
        pos = np.searchsorted(nbrs, j)
        return bool(pos < len(nbrs) and nbrs[pos] == j)

    def edges(self) -> np.ndarray:
        """Undirected edge list as an (|E|, 2) array with src < dst, sorted."""
        src = np.repeat(np.arange(self.num_nodes), self.degrees())
        keep = src < self.col_indices
        return np.stack([src[keep], self.col_indices[keep]], axis=1)

    def to_scipy(self, dtype=np.float64) -> sp.csr_matrix:
        data = np.ones(len(self.col_indices), dtype=dtype)
        return sp.csr_matrix((data, self.col_indices, self.row_offsets), shape=(self.num_nodes,) * 2)

    def check_invariants(self) -> None:
        n = self.num_nodes
        for i in range(n):
            nbrs = self.neighbors(i)
            if np.any(np.diff(nbrs) <= 0):
                raise GraphError(f"neighbors of {i} not strictly increasing")
            if np.any(nbrs == i):
                raise GraphError(f"self-loop stored at {i}")
        mat = self.to_scipy()
        if (mat != mat.T).nnz:
            raise GraphError("adjacency is not symmetric")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        feats = np.asarray(self.features)
        if feats.dtype not in (np.float32, np.float64):
            feats = feats.astype(np.float64)
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "labels", _frozen(np.asarray(self.labels, dtype=np.int64)))
        n = self.graph.num_nodes
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise GraphError(f"features must have {n} rows, got shape {self.features.shape}")
        if self.labels.shape != (n,):
            raise GraphError(f"labels must have length {n}, got {self.labels.shape}")
        if not np.all(np.isfinite(self.features)):
            raise GraphError("features contain non-finite values")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise GraphError(f"label out of range [0, {self.num_classes})")
        counts = np.bincount(self.labels, minlength=self.num_classes)
        if np.any(counts == 0):
            raise GraphError(f"classes without nodes: {np.flatnonzero(counts == 0).tolist()}")

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def with_graph(self, graph: Graph) -> "Dataset":
        return Dataset(graph, self.features, self.labels, self.num_classes, self.name)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.graph == other.graph
            and self.num_classes == other.num_classes
            and self.name == other.name
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class NodeSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=np.int64)))
        if len(self.train) == 0:
            raise GraphError("train split is empty")
        joined = np.concatenate([self.train, self.val, self.test])
        if len(np.unique(joined)) != len(joined):
            raise GraphError("node split sets overlap")

    def validate(self, num_nodes: int) -> None:
        joined = np.concatenate([self.train, self.val, self.test])
        if joined.size and (joined.min() < 0 or joined.max() >= num_nodes):
            raise GraphError(f"split index out of range [0, {num_nodes})")

    def to_json(self) -> dict:
        return {"train": self.train.tolist(), "val": self.val.tolist(), "test": self.test.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "NodeSplit":
        return cls(np.array(obj["train"]), np.array(obj["val"]), np.array(obj["test"]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, NodeSplit):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("train", "val", "test"))

    __hash__ = None


_EDGE_FIELDS = ("train_edges", "val_edges", "test_edges", "val_negatives", "test_negatives")


@dataclass(frozen=True, eq=False)
class EdgeSplit:
    train_edges: np.ndarray
    val_edges: np.ndarray
    test_edges: np.ndarray
    val_negatives: np.ndarray
    test_negatives: np.ndarray

    def __post_init__(self):
        for name in _EDGE_FIELDS:
            arr = np.asarray(getattr(self, name), dtype=np.int64).reshape(-1, 2)
            object.__setattr__(self, name, _frozen(arr))
        if len(self.val_negatives) != len(self.val_edges) or len(self.test_negatives) != len(self.test_edges):
            raise GraphError("negative counts must match positive counts")

    def train_graph(self, num_nodes: int) -> Graph:
        return Graph.from_edges(num_nodes, self.train_edges)

    def to_json(self) -> dict:
        return {name: getattr(self, name).tolist() for name in _EDGE_FIELDS}

    @classmethod
    def from_json(cls, obj: dict) -> "EdgeSplit":
        return cls(**{name: np.array(obj[name], dtype=np.int64).reshape(-1, 2) for name in _EDGE_FIELDS})

    def __eq__(self, other) -> bool:
        if not isinstance(other, EdgeSplit):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in _EDGE_FIELDS)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class NormAdj:
    """Symmetrically normalized adjacency with self-loops, D^-1/2 (A + I) D^-1/2."""

    matrix: sp.csr_matrix

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    @property
    def row_offsets(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def values(self) -> np.ndarray:
        return self.matrix.data

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def normalize_adjacency(graph: Graph, dtype=np.float64) -> NormAdj:
    n = graph.num_nodes
    deg = graph.degrees() + 1.0
    inv_sqrt = 1.0 / np.sqrt(deg)
    # add the diagonal into each row while keeping columns ascending
    src = np.concatenate([np.repeat(np.arange(n), graph.degrees()), np.arange(n)])
    dst = np.concatenate([graph.col_indices, np.arange(n)])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    vals = (inv_sqrt[src] * inv_sqrt[dst]).astype(dtype)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])
    mat = sp.csr_matrix((vals, dst, offsets), shape=(n, n))
    mat.has_sorted_indices = True
    return NormAdj(mat)
