"""Node and edge splits for probing and link prediction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Dataset, EdgeSplit, GraphError, NodeSplit


@dataclass(frozen=True)
class PerClass:
    """``k`` training nodes from every class, then ``n_val`` / ``n_test`` from the rest."""

    k: int = 20
    n_val: int = 500
    n_test: int = 1000


@dataclass(frozen=True)
class Fractional:
    f_train: float = 0.1
    f_val: float = 0.1


def _floor(x: float) -> int:
    # guard against 0.7 * 10 evaluating to 6.999...
    return int(math.floor(x + 1e-9))


def node_split(dataset: Dataset, policy: PerClass | Fractional, seed: int = 0) -> NodeSplit:
    rng = np.random.default_rng(seed)
    n = dataset.num_nodes
    if isinstance(policy, PerClass):
        train = []
        for c in range(dataset.num_classes):
            members = np.flatnonzero(dataset.labels == c)
            if len(members) < policy.k:
                raise GraphError(f"class {c} has {len(members)} nodes, fewer than k={policy.k}")
            train.append(rng.permutation(members)[: policy.k])
        train = np.concatenate(train)
        rest = np.setdiff1d(np.arange(n), train)
        if policy.n_val + policy.n_test > len(rest):
            raise GraphError(f"need {policy.n_val + policy.n_test} val/test nodes, only {len(rest)} remain")
        rest = rng.permutation(rest)
        val = rest[: policy.n_val]
        test = rest[policy.n_val : policy.n_val + policy.n_test]
        return NodeSplit(np.sort(train), np.sort(val), np.sort(test))

    if isinstance(policy, Fractional):
        if policy.f_train < 0 or policy.f_val < 0 or policy.f_train + policy.f_val > 1 + 1e-9:
            raise GraphError("split fractions must be nonnegative and sum to at most 1")
        n_train, n_val = _floor(policy.f_train * n), _floor(policy.f_val * n)
        perm = rng.permutation(n)
        return NodeSplit(
            np.sort(perm[:n_train]),
            np.sort(perm[n_train : n_train + n_val]),
            np.sort(perm[n_train + n_val :]),
        )
    raise TypeError(f"unknown split policy {policy!r}")


def _sample_non_edges(n, count, forbidden: set, rng, max_attempts):
    out = []
    attempts = 0
    while len(out) < count:
        if attempts >= max_attempts:
            raise GraphError(f"graph too dense: found {len(out)} of {count} non-edges in {attempts} draws")
        attempts += 1
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        if key in forbidden:
            continue
        forbidden.add(key)
        out.append(key)
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def edge_split(
    dataset: Dataset, f_train: float = 0.7, f_val: float = 0.2, f_test: float = 0.1, seed: int = 0
) -> EdgeSplit:
    """Partition the edges at random and draw matching numbers of non-edges.

    Validation and test sizes are floored; the remainder goes to training.
    """
    if min(f_train, f_val, f_test) <= 0 or abs(f_train + f_val + f_test - 1.0) > 1e-9:
        raise GraphError("edge split fractions must be positive and sum to 1")
    rng = np.random.default_rng(seed)
    edges = dataset.graph.edges()
    m = len(edges)
    n_val, n_test = _floor(f_val * m), _floor(f_test * m)
    perm = rng.permutation(m)
    val = edges[np.sort(perm[:n_val])]
    test = edges[np.sort(perm[n_val : n_val + n_test])]
    train = edges[np.sort(perm[n_val + n_test :])]

    forbidden = {(int(a), int(b)) for a, b in edges}
    needed = n_val + n_test
    cap = 100 * max(needed, 1)
    negatives = _sample_non_edges(dataset.num_nodes, needed, forbidden, rng, cap)
    return EdgeSplit(train, val, test, negatives[:n_val], negatives[n_val:])


def save_node_split(split: NodeSplit, path) -> None:
    Path(path).write_text(json.dumps(split.to_json()) + "\n")


def load_node_split(path) -> NodeSplit:
    return NodeSplit.from_json(json.loads(Path(path).read_text()))


def save_edge_split(split: EdgeSplit, path) -> None:
    Path(path).write_text(json.dumps(split.to_json()) + "\n")


def load_edge_split(path) -> EdgeSplit:
    return EdgeSplit.from_json(json.loads(Path(path).read_text()))
