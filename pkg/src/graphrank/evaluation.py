"""Downstream measurements on frozen embeddings."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, log_softmax, softmax
from scipy.stats import rankdata

from .graph import EdgeSplit, NodeSplit


@dataclass
class EvalReport:
    accuracy: float | None = None
    auc: float | None = None
    ap: float | None = None
    nmi: float | None = None
    ari: float | None = None
    intra_class_variance: float | None = None
    inter_class_distance: float | None = None

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")


# -- linear probe -----------------------------------------------------------------------


def linear_probe(
    Z: np.ndarray,
    labels: np.ndarray,
    split: NodeSplit,
    l2: float = 1e-4,
    max_iters: int = 2000,
    tol: float = 1e-6,
) -> float:
    """Test accuracy of an L2-regularized softmax regression fit on the train nodes.

    Embeddings are divided by their RMS row norm over the train nodes, then the
    objective (mean cross-entropy + l2/2 * |W|^2, bias unpenalized) is minimized
    by Nesterov-accelerated gradient descent with step 1/L. Every step is
    equivariant under orthogonal maps of Z, so rotating Z leaves predictions
    unchanged up to roundoff.
    """
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels)
    num_classes = int(labels.max()) + 1
    y = labels[split.train]
    if len(np.unique(y)) < 2:
        raise ValueError("linear probe needs at least two classes in the training set")

    X = Z[split.train]
    scale = np.sqrt(np.mean(np.sum(X * X, axis=1)))
    if scale == 0 or not np.isfinite(scale):
        scale = 1.0
    X = X / scale
    m, d = X.shape
    Y = np.zeros((m, num_classes))
    Y[np.arange(m), y] = 1.0

    lipschitz = 0.5 * (np.linalg.norm(X, 2) ** 2 + m) / m + l2
    step = 1.0 / lipschitz
    W = np.zeros((d, num_classes))
    b = np.zeros(num_classes)
    W_prev, b_prev = W, b
    for it in range(1, max_iters + 1):
        mom = (it - 1) / (it + 2)
        Wy = W + mom * (W - W_prev)
        by = b + mom * (b - b_prev)
        P = softmax(X @ Wy + by, axis=1)
        G = (P - Y) / m
        gW = X.T @ G + l2 * Wy
        gb = G.sum(axis=0)
        W_prev, b_prev = W, b
        W = Wy - step * gW
        b = by - step * gb
        if max(np.abs(gW).max(), np.abs(gb).max()) < tol:
            break

    logits = (Z[split.test] / scale) @ W + b
    pred = np.argmax(logits, axis=1)
    return float(np.mean(pred == labels[split.test])) if len(split.test) else float("nan")


def probe_loss(Z, labels, idx, W, b, l2):
    """Objective value used by :func:`linear_probe`; exposed for tests."""
    X = np.asarray(Z, dtype=np.float64)[idx]
    lp = log_softmax(X @ W + b, axis=1)
    return float(-np.mean(lp[np.arange(len(idx)), labels[idx]]) + 0.5 * l2 * np.sum(W * W))


# -- link prediction --------------------------------------------------------------------


def link_scores(Z: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """sigmoid(Z_i . Z_j) for each (i, j)."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    Z = np.asarray(Z, dtype=np.float64)
    return expit(np.einsum("ij,ij->i", Z[pairs[:, 0]], Z[pairs[:, 1]]))


def _binary(labels):
    labels = np.asarray(labels).astype(bool)
    return labels, int(labels.sum()), int((~labels).sum())


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    labels, n_pos, n_neg = _binary(labels)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative examples")
    ranks = rankdata(np.asarray(scores, dtype=np.float64))
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean of precision@rank over positive ranks; ties broken by ascending index."""
    labels, n_pos, _ = _binary(labels)
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    hits = labels[order]
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(precision[hits].sum() / n_pos)


def link_metrics(Z: np.ndarray, positives: np.ndarray, negatives: np.ndarray) -> EvalReport:
    scores = np.concatenate([link_scores(Z, positives), link_scores(Z, negatives)])
    truth = np.concatenate([np.ones(len(positives)), np.zeros(len(negatives))])
    return EvalReport(auc=auc(scores, truth), ap=average_precision(scores, truth))


def evaluate_link(Z: np.ndarray, edge_split: EdgeSplit, part: str = "test") -> EvalReport:
    if part == "test":
        return link_metrics(Z, edge_split.test_edges, edge_split.test_negatives)
    return link_metrics(Z, edge_split.val_edges, edge_split.val_negatives)


# -- clustering -------------------------------------------------------------------------


@dataclass
class KMeansResult:
    assignments: np.ndarray
    centers: np.ndarray
    inertia: float
    history: list  # inertia after every assignment step of the winning restart


def _sq_dists(X, C):
    d = np.sum(X * X, axis=1)[:, None] - 2 * X @ C.T + np.sum(C * C, axis=1)[None, :]
    return np.maximum(d, 0.0)


def _plus_plus(X, k, rng):
    n = len(X)
    chosen = [int(rng.integers(n))]
    closest = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            # all remaining mass is zero: pick an unused index uniformly
            unused = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(unused))
        chosen.append(nxt)
        closest = np.minimum(closest, np.sum((X - X[nxt]) ** 2, axis=1))
    return X[chosen].copy()


def _lloyd(X, centers, max_iter):
    k = len(centers)
    history = []
    assign = None
    for _ in range(max_iter):
        d = _sq_dists(X, centers)
        new_assign = np.argmin(d, axis=1)
        counts = np.bincount(new_assign, minlength=k)
        for c in np.flatnonzero(counts == 0):
            # reseed an empty cluster at the point farthest from its centroid
            far = int(np.argmax(d[np.arange(len(X)), new_assign]))
            centers[c] = X[far]
            d = _sq_dists(X, centers)
            new_assign = np.argmin(d, axis=1)
            counts = np.bincount(new_assign, minlength=k)
        history.append(float(d[np.arange(len(X)), new_assign].sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            members = assign == c
            if members.any():
                centers[c] = X[members].mean(axis=0)
    inertia = float(_sq_dists(X, centers)[np.arange(len(X)), assign].sum())
    return assign, centers, inertia, history


def kmeans_fit(Z: np.ndarray, k: int, restarts: int = 10, seed: int = 0, max_iter: int = 300) -> KMeansResult:
    X = np.asarray(Z, dtype=np.float64)
    if not 1 <= k <= len(X):
        raise ValueError(f"k must be in [1, {len(X)}]")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(restarts, 1)):
        assign, centers, inertia, history = _lloyd(X, _plus_plus(X, k, rng), max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansResult(assign, centers, inertia, history)
    return best


def kmeans(Z: np.ndarray, k: int, restarts: int = 10, seed: int = 0) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; best inertia over ``restarts``."""
    return kmeans_fit(Z, k, restarts, seed).assignments


def _contingency(a, b):
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(assignments: np.ndarray, labels: np.ndarray) -> float:
    """Normalized mutual information with arithmetic-mean normalization."""
    if len(assignments) != len(labels):
        raise ValueError("length mismatch")
    table = _contingency(assignments, labels)
    n = table.sum()
    rows, cols = table.sum(axis=1), table.sum(axis=0)
    nz = table > 0
    outer = np.outer(rows, cols)
    mi = float(np.sum(table[nz] / n * np.log(n * table[nz] / outer[nz])))
    denom = 0.5 * (_entropy(rows, n) + _entropy(cols, n))
    if denom <= 0:
        return 0.0
    return float(np.clip(mi / denom, 0.0, 1.0))


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2


def ari(assignments: np.ndarray, labels: np.ndarray) -> float:
    """Adjusted Rand index."""
    if len(assignments) != len(labels):
        raise ValueError("length mismatch")
    table = _contingency(assignments, labels)
    n = table.sum()
    index = _comb2(table).sum()
    a = _comb2(table.sum(axis=1)).sum()
    b = _comb2(table.sum(axis=0)).sum()
    expected = a * b / _comb2(n) if n > 1 else 0.0
    max_index = 0.5 * (a + b)
    if max_index == expected:
        # both partitions trivial (all singletons or one block): identical up to relabeling
        return 1.0
    return float((index - expected) / (max_index - expected))


def cluster_metrics(Z, labels, num_classes, restarts=10, seed=0) -> EvalReport:
    assign = kmeans(Z, num_classes, restarts, seed)
    return EvalReport(nmi=nmi(assign, labels), ari=ari(assign, labels))


# -- representation geometry -------------------------------------------------------------


def _class_means(Z, labels):
    classes = np.unique(labels)
    return classes, np.stack([Z[labels == c].mean(axis=0) for c in classes])


def intra_class_variance(Z: np.ndarray, labels: np.ndarray, delta: float = 0.0) -> float:
    """Unweighted class average of sum_i |z_i - mean_c|^2 / max(0, N_c - delta N_c)."""
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels)
    per_class = []
    for c in np.unique(labels):
        members = Z[labels == c]
        scatter = np.sum((members - members.mean(axis=0)) ** 2)
        per_class.append(scatter / max(0.0, len(members) - delta * len(members)))
    return float(np.mean(per_class))


def inter_class_distance(Z: np.ndarray, labels: np.ndarray) -> float:
    """Mean Euclidean distance between class means over ordered pairs of distinct classes."""
    Z = np.asarray(Z, dtype=np.float64)
    classes, means = _class_means(Z, np.asarray(labels))
    c = len(classes)
    if c < 2:
        raise ValueError("inter-class distance needs at least two classes")
    diffs = means[:, None, :] - means[None, :, :]
    dist = np.sqrt(np.sum(diffs**2, axis=2))
    return float(dist.sum() / (c * (c - 1)))


def geometry_metrics(Z, labels, delta=0.0) -> EvalReport:
    return EvalReport(
        intra_class_variance=intra_class_variance(Z, labels, delta),
        inter_class_distance=inter_class_distance(Z, labels),
    )
