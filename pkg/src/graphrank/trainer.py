"""The self-supervised training loop and its configuration."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, make_views
from .graph import Dataset, EdgeSplit, NodeSplit, normalize_adjacency
from .numkit import ACTIVATIONS, AdamState, DivergenceError, EncoderParams, adam_step, gcn_backward, gcn_forward, init_encoder
from .objectives import ALL_NODES, SIMILARITIES, infonce_loss, rank_loss, sample_negatives, sample_negatives_label_filtered

log = logging.getLogger(__name__)

LOSSES = ("rank", "infonce")
NEGATIVE_MODES = ("uniform", "label_filtered", "all")
PRECISIONS = {"single": np.float32, "double": np.float64}


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, reason: str):
        super().__init__(f"training diverged at epoch {epoch}: {reason}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden_dim: int = 256
    out_dim: int = 256
    activation: str = "relu"
    p_e1: float = 0.2
    p_f1: float = 0.2
    p_e2: float = 0.2
    p_f2: float = 0.2
    loss: str = "rank"
    margin: float = 0.0
    tau: float = 0.5
    num_negatives: int = 1
    negatives: str = "uniform"
    similarity: str = "dot"
    symmetric: bool = False
    seed: int = 0
    eval_every: int = 0
    patience: int = 0
    precision: str = "single"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be nonnegative")
        if self.hidden_dim < 1 or self.out_dim < 1:
            raise ValueError("dimensions must be >= 1")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.negatives not in NEGATIVE_MODES:
            raise ValueError(f"negatives must be one of {NEGATIVE_MODES}")
        if self.negatives == "all" and self.loss != "infonce":
            raise ValueError("negatives=all is only supported with the infonce loss")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {tuple(PRECISIONS)}")
        if self.num_negatives < 1:
            raise ValueError("num_negatives must be >= 1")
        if self.similarity not in SIMILARITIES:
            raise ValueError(f"similarity must be one of {SIMILARITIES}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        self.augment  # validates the probabilities

    @property
    def augment(self) -> AugmentConfig:
        return AugmentConfig(self.p_e1, self.p_f1, self.p_e2, self.p_f2)

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        unknown = set(values) - set(types)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: _coerce(v, types[k]) for k, v in values.items()})


def _coerce(value, type_name: str):
    if type_name == "bool":
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes", "on"):
                return True
            if value.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        return bool(value)
    if type_name == "int":
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"not an integer: {value!r}")
        return int(value)
    if type_name == "float":
        return float(value)
    return str(value)


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file (a TOML subset; ``[sections]`` and ``#`` comments ignored)."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = val.strip("\"'")
    return values


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    total_time: float = 0.0
    config: dict = field(default_factory=dict)
    seed: int = 0
    evals: list = field(default_factory=list)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r["loss"] for r in self.records])

    @property
    def epoch_times(self) -> np.ndarray:
        return np.array([r["wall_time_seconds"] for r in self.records])

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config,
            "records": self.records,
            "evals": self.evals,
            "total_time": self.total_time,
        }

    def write(self, json_path, csv_path=None) -> None:
        Path(json_path).write_text(json.dumps(self.to_json(), indent=2) + "\n")
        if csv_path is not None:
            with open(csv_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["epoch", "loss", "seconds"])
                for r in self.records:
                    writer.writerow([r["epoch"], repr(r["loss"]), f"{r['wall_time_seconds']:.6f}"])


def _epoch_loss(cfg: TrainConfig, Z1, Z2, negs):
    if cfg.loss == "rank":
        return rank_loss(Z1, Z2, negs, cfg.margin, cfg.similarity, cfg.symmetric)
    return infonce_loss(Z1, Z2, negs, cfg.tau, cfg.similarity, cfg.symmetric)


def _negatives(cfg: TrainConfig, dataset: Dataset, rng):
    if cfg.negatives == "all":
        return ALL_NODES
    if cfg.negatives == "label_filtered":
        return sample_negatives_label_filtered(dataset.labels, cfg.num_negatives, rng)
    return sample_negatives(dataset.num_nodes, cfg.num_negatives, rng)


def encode(params: EncoderParams, dataset: Dataset, dtype=np.float64) -> np.ndarray:
    """Embeddings of the unaugmented graph."""
    adj = normalize_adjacency(dataset.graph, dtype)
    Z, _ = gcn_forward(params.astype(dtype), adj, dataset.features.astype(dtype))
    return Z


def train(
    dataset: Dataset, cfg: TrainConfig, split: NodeSplit | None = None
) -> tuple[np.ndarray, EncoderParams, TrainReport]:
    """Run the two-view training loop and return (embeddings, params, report).

    Each epoch draws two corrupted views, encodes both, draws fresh negatives,
    and takes one Adam step. With ``eval_every > 0`` and a ``split``, a linear
    probe is scored on the validation nodes (outside the timed region);
    ``patience > 0`` then stops after that many evaluations without improvement.
    """
    dtype = cfg.dtype
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    init_seed = int(seeds[0].generate_state(1)[0])
    aug_rng = np.random.default_rng(seeds[1])
    neg_rng = np.random.default_rng(seeds[2])

    params = init_encoder(dataset.num_features, cfg.hidden_dim, cfg.out_dim, init_seed, cfg.activation).astype(dtype)
    state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    work = Dataset(dataset.graph, dataset.features.astype(dtype), dataset.labels, dataset.num_classes, dataset.name)
    aug = cfg.augment

    report = TrainReport(config=cfg.to_dict(), seed=cfg.seed)
    best_val, stale = -np.inf, 0
    elapsed = 0.0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        try:
            v1, v2 = make_views(work, aug, aug_rng)
            Z1, c1 = gcn_forward(params, normalize_adjacency(v1.graph, dtype), v1.features)
            Z2, c2 = gcn_forward(params, normalize_adjacency(v2.graph, dtype), v2.features)
            negs = _negatives(cfg, work, neg_rng)
            out = _epoch_loss(cfg, Z1, Z2, negs)
        except DivergenceError as exc:
            raise TrainingDiverged(epoch, str(exc)) from None
        if not np.isfinite(out.value):
            raise TrainingDiverged(epoch, "loss is not finite")
        g1 = gcn_backward(c1, out.dZ1.astype(dtype, copy=False))
        g2 = gcn_backward(c2, out.dZ2.astype(dtype, copy=False))
        new_arrays, state = adam_step(params.arrays, [a + b for a, b in zip(g1, g2)], state)
        params = params.replace(new_arrays)
        dt = time.perf_counter() - t0
        elapsed += dt
        report.records.append({"epoch": epoch, "loss": float(out.value), "wall_time_seconds": dt})

        if cfg.eval_every and split is not None and epoch % cfg.eval_every == 0:
            from .evaluation import linear_probe  # local import keeps trainer importable on its own

            Z = encode(params, dataset, dtype)
            val_split = NodeSplit(split.train, np.empty(0, dtype=np.int64), split.val)
            acc = linear_probe(Z.astype(np.float64), dataset.labels, val_split)
            report.evals.append({"epoch": epoch, "val_accuracy": acc})
            log.info("epoch %d loss %.5f val acc %.4f", epoch, out.value, acc)
            if acc > best_val:
                best_val, stale = acc, 0
            else:
                stale += 1
                if cfg.patience and stale >= cfg.patience:
                    log.info("early stop at epoch %d", epoch)
                    break

    report.total_time = elapsed
    Z = encode(params, dataset, dtype)
    return Z, params, report


def train_for_link_prediction(
    dataset: Dataset, edge_split: EdgeSplit, cfg: TrainConfig
) -> tuple[np.ndarray, TrainReport]:
    """Train with validation and test edges removed from message passing."""
    hidden = dataset.with_graph(edge_split.train_graph(dataset.num_nodes))
    Z, _, report = train(hidden, cfg)
    return Z, report
