"""Dataset directory I/O, synthetic stochastic block models and a Planetoid raw-format importer.

Directory layout::

    graph.edges    one undirected edge per line, "src dst", '#' starts a comment
    features.csv   one comma-separated row of reals per node, no header
    labels.txt     one integer label per line
    meta.json      optional {"name": ..., "num_classes": ...}
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .graph import Dataset, Graph, GraphError

log = logging.getLogger(__name__)

FEATURE_FORMAT = "%.17g"  # round-trips float64 exactly


class DatasetFormatError(GraphError):
    pass


def _read_edges(path: Path) -> np.ndarray:
    pairs = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].split()
            if not body:
                continue
            if len(body) != 2:
                raise DatasetFormatError(f"{path}:{lineno}: expected 'src dst', got {line.strip()!r}")
            try:
                pairs.append((int(body[0]), int(body[1])))
            except ValueError:
                raise DatasetFormatError(f"{path}:{lineno}: non-integer node index") from None
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    for fname in ("graph.edges", "features.csv", "labels.txt"):
        if not (directory / fname).is_file():
            raise FileNotFoundError(f"missing {fname} in {directory}")

    try:
        features = np.loadtxt(directory / "features.csv", delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DatasetFormatError(f"non-numeric feature in {directory / 'features.csv'}: {exc}") from None
    try:
        labels = np.loadtxt(directory / "labels.txt", dtype=np.int64, ndmin=1)
    except ValueError as exc:
        raise DatasetFormatError(f"bad label in {directory / 'labels.txt'}: {exc}") from None

    n = features.shape[0]
    if len(labels) != n:
        raise DatasetFormatError(f"features.csv has {n} rows but labels.txt has {len(labels)}")

    meta = {}
    if (directory / "meta.json").is_file():
        meta = json.loads((directory / "meta.json").read_text())
    num_classes = int(meta.get("num_classes", labels.max() + 1 if n else 0))
    if n and (labels.min() < 0 or labels.max() >= num_classes):
        raise DatasetFormatError(f"label out of range [0, {num_classes})")

    edges = _read_edges(directory / "graph.edges")
    try:
        graph = Graph.from_edges(n, edges)
    except GraphError as exc:
        raise DatasetFormatError(f"{directory / 'graph.edges'}: {exc}") from None
    return Dataset(graph, features, labels, num_classes, meta.get("name", directory.name))


def save_dataset(dataset: Dataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    edges = dataset.graph.edges()
    with (directory / "graph.edges").open("w") as fh:
        fh.write(f"# {dataset.name}: {dataset.num_nodes} nodes, {len(edges)} undirected edges\n")
        np.savetxt(fh, edges, fmt="%d")
    np.savetxt(directory / "features.csv", dataset.features, fmt=FEATURE_FORMAT, delimiter=",")
    np.savetxt(directory / "labels.txt", dataset.labels, fmt="%d")
    meta = {"name": dataset.name, "num_classes": dataset.num_classes}
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def _block_edges(members_a, members_b, p, rng, same_block):
    if p <= 0.0:
        return np.empty((0, 2), dtype=np.int64)
    if same_block:
        rows, cols = np.triu_indices(len(members_a), k=1)
        total = len(rows)
    else:
        total = len(members_a) * len(members_b)
    count = rng.binomial(total, p)
    picks = np.sort(rng.choice(total, size=count, replace=False))
    if same_block:
        return np.stack([members_a[rows[picks]], members_a[cols[picks]]], axis=1)
    return np.stack([members_a[picks // len(members_b)], members_b[picks % len(members_b)]], axis=1)


def generate_sbm(
    n: int,
    num_classes: int,
    p_in: float,
    p_out: float,
    feat_dim: int,
    feat_noise: float = 0.5,
    seed: int = 0,
    name: str | None = None,
) -> Dataset:
    """Planted-partition graph with noisy one-hot class features.

    Node ``i`` belongs to class ``i % num_classes``. Each within-class pair is
    linked with probability ``p_in`` and each cross-class pair with ``p_out``;
    drawing a binomial count per block and then that many distinct pairs gives
    the same law as independent coin flips without materializing all pairs.
    """
    if not (0.0 <= p_out <= 1.0 and 0.0 <= p_in <= 1.0):
        raise ValueError("edge probabilities must lie in [0, 1]")
    if p_in < p_out:
        raise ValueError(f"p_in ({p_in}) must not be below p_out ({p_out})")
    if num_classes < 1 or n < num_classes:
        raise ValueError("need n >= num_classes >= 1")
    if feat_dim < num_classes:
        raise ValueError(f"feat_dim ({feat_dim}) must be at least num_classes ({num_classes})")
    if feat_noise < 0:
        raise ValueError("feat_noise must be nonnegative")

    rng = np.random.default_rng(seed)
    labels = np.arange(n) % num_classes
    members = [np.flatnonzero(labels == c) for c in range(num_classes)]
    blocks = []
    for a in range(num_classes):
        for b in range(a, num_classes):
            p = p_in if a == b else p_out
            blocks.append(_block_edges(members[a], members[b], p, rng, a == b))
    graph = Graph.from_edges(n, np.concatenate(blocks))

    features = np.zeros((n, feat_dim))
    features[np.arange(n), labels] = 1.0
    features += rng.normal(0.0, feat_noise, size=features.shape) if feat_noise > 0 else 0.0
    name = name or f"sbm-n{n}-c{num_classes}-s{seed}"
    return Dataset(graph, features, labels, num_classes, name)


def import_planetoid_raw(content_path, cites_path, name: str = "cora") -> Dataset:
    """Read the raw LINQS citation format (``<id> <feat>... <label>`` / ``<cited> <citing>``).

    Citations naming unknown papers and self-citations are dropped; labels are
    indexed in sorted order of their names.
    """
    ids, rows, label_names = [], [], []
    with Path(content_path).open() as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:-1]])
            label_names.append(parts[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    classes = sorted(set(label_names))
    labels = np.array([classes.index(c) for c in label_names], dtype=np.int64)

    edges, skipped = [], 0
    with Path(cites_path).open() as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != 2:
                continue
            a, b = index.get(parts[0]), index.get(parts[1])
            if a is None or b is None or a == b:
                skipped += 1
                continue
            edges.append((a, b))
    if skipped:
        log.warning("dropped %d citation lines (unknown ids or self-citations)", skipped)
    graph = Graph.from_edges(len(ids), edges)
    return Dataset(graph, np.array(rows), labels, len(classes), name)
