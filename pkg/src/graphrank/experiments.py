"""Experiment drivers shared by the CLI and the acceptance suite: sweeps, the
false-negative ablation and the training-time benchmark."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .datasets import generate_sbm
from .evaluation import inter_class_distance, intra_class_variance, linear_probe
from .graph import Dataset, NodeSplit
from .splits import Fractional, node_split
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)

SWEEP_AXES = {
    "margin": ("margin",),
    "num_negatives": ("num_negatives",),
    "p_e": ("p_e1", "p_e2"),
    "p_f": ("p_f1", "p_f2"),
}
SWEEP_HEADER = ["axis", "value", "seed", "loss", "acc", "intra_var", "inter_dist", "seconds"]
ABLATION_HEADER = ["seed", "variant", "loss", "negatives", "num_negatives", "final_loss", "acc", "seconds"]
BENCH_HEADER = ["n", "edges", "rank_seconds", "infonce_seconds", "speedup", "rank_status", "infonce_status"]


def l2_rows(Z: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    return Z / np.where(norms > 0, norms, 1.0)


@dataclass
class ProbeRun:
    loss: float
    acc: float
    intra_var: float
    inter_dist: float
    seconds: float
    embeddings: np.ndarray


def probe_run(dataset: Dataset, cfg: TrainConfig, split: NodeSplit, normalize: bool = False, delta: float = 0.0) -> ProbeRun:
    """Train, probe on ``split`` and measure class geometry (optionally on L2-normalized rows)."""
    Z, _, report = train(dataset, cfg)
    Z = Z.astype(np.float64)
    geo = l2_rows(Z) if normalize else Z
    return ProbeRun(
        loss=float(report.records[-1]["loss"]),
        acc=linear_probe(Z, dataset.labels, split),
        intra_var=intra_class_variance(geo, dataset.labels, delta),
        inter_dist=inter_class_distance(geo, dataset.labels),
        seconds=report.total_time,
        embeddings=Z,
    )


def default_split(dataset: Dataset, seed: int, policy=None) -> NodeSplit:
    return node_split(dataset, policy or Fractional(0.1, 0.1), seed)


def _sweep_job(args):
    dataset, cfg, policy, axis, value, seed = args
    split = default_split(dataset, seed, policy)
    run = probe_run(dataset, cfg, split)
    return {"axis": axis, "value": value, "seed": seed, "loss": run.loss, "acc": run.acc,
            "intra_var": run.intra_var, "inter_dist": run.inter_dist, "seconds": run.seconds}


def _axis_changes(axis: str, value) -> dict:
    if axis not in SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {sorted(SWEEP_AXES)}")
    cast = int if axis == "num_negatives" else float
    return {key: cast(value) for key in SWEEP_AXES[axis]}


def _fan_out(job, tasks, workers):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, tasks))
    return [job(t) for t in tasks]


def run_sweep(
    dataset: Dataset,
    axis: str,
    values,
    seeds,
    base: TrainConfig,
    policy=None,
    workers: int = 1,
) -> list[dict]:
    """One training run per (value, seed); rows come back in (value, seed) order.

    ``loss`` in each row is the final-epoch training loss.
    """
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    tasks = []
    for value in values:
        changes = _axis_changes(axis, value)
        for seed in seeds:
            tasks.append((dataset, base.replace(seed=int(seed), **changes), policy, axis, value, int(seed)))
    return _fan_out(_sweep_job, tasks, workers)


ABLATION_VARIANTS = {
    "plain": dict(loss="infonce", negatives="uniform"),
    "filtered": dict(loss="infonce", negatives="label_filtered"),
    "rank": dict(loss="rank", negatives="uniform", num_negatives=1),
}


def _ablation_job(args):
    dataset, cfg, policy, seed, variant = args
    split = default_split(dataset, seed, policy)
    run = probe_run(dataset, cfg, split)
    return {"seed": seed, "variant": variant, "loss": cfg.loss, "negatives": cfg.negatives,
            "num_negatives": cfg.num_negatives, "final_loss": run.loss, "acc": run.acc, "seconds": run.seconds}


def ablate_false_negatives(
    dataset: Dataset,
    seeds,
    base: TrainConfig,
    num_negatives: int = 32,
    control: bool = False,
    policy=None,
    workers: int = 1,
) -> list[dict]:
    """InfoNCE with uniform vs label-filtered negatives under identical seeds.

    With ``control`` a rank-loss (k=1) reference row is added per seed.
    """
    variants = ["plain", "filtered"] + (["rank"] if control else [])
    tasks = []
    for seed in seeds:
        for variant in variants:
            changes = dict(ABLATION_VARIANTS[variant])
            changes.setdefault("num_negatives", num_negatives)
            tasks.append((dataset, base.replace(seed=int(seed), **changes), policy, int(seed), variant))
    return _fan_out(_ablation_job, tasks, workers)


# -- timing -----------------------------------------------------------------------------


def bench_dataset(n: int, num_classes: int = 4, avg_degree: float = 10.0, homophily: float = 0.8,
                  feat_dim: int = 128, seed: int = 0) -> Dataset:
    """SBM whose expected degree stays fixed as ``n`` grows."""
    per_class = n / num_classes
    p_in = min(1.0, homophily * avg_degree / max(per_class - 1, 1))
    p_out = min(p_in, (1 - homophily) * avg_degree / max(n - per_class, 1))
    return generate_sbm(n, num_classes, p_in, p_out, feat_dim, 0.5, seed)


def epoch_seconds(dataset: Dataset, cfg: TrainConfig, epochs: int = 3, repeats: int = 3) -> float:
    """Median over repeats of the median per-epoch time, first epoch of each repeat excluded."""
    medians = []
    for r in range(repeats):
        _, _, report = train(dataset, cfg.replace(epochs=epochs + 1, seed=cfg.seed + r))
        medians.append(float(np.median(report.epoch_times[1:])))
    return float(np.median(medians))


def run_bench(sizes, base: TrainConfig, epochs: int = 3, repeats: int = 3, **data_kw) -> list[dict]:
    rows = []
    rank_cfg = base.replace(loss="rank", negatives="uniform", num_negatives=1)
    nce_cfg = base.replace(loss="infonce", negatives="all")
    for n in sizes:
        ds = bench_dataset(int(n), **data_kw)
        row = {"n": int(n), "edges": ds.graph.num_undirected_edges}
        for key, cfg in (("rank", rank_cfg), ("infonce", nce_cfg)):
            try:
                row[f"{key}_seconds"] = epoch_seconds(ds, cfg, epochs, repeats)
                row[f"{key}_status"] = "ok"
            except MemoryError:
                log.warning("%s run at n=%d ran out of memory", key, n)
                row[f"{key}_seconds"] = float("nan")
                row[f"{key}_status"] = "oom"
        row["speedup"] = row["infonce_seconds"] / row["rank_seconds"]
        rows.append(row)
        log.info("n=%d rank %.4fs infonce %.4fs", n, row["rank_seconds"], row["infonce_seconds"])
    return rows


def scaling_fit(sizes, seconds) -> dict:
    """Residual sums of squares for t = a + b n versus t = c n^2."""
    n = np.asarray(sizes, dtype=np.float64)
    t = np.asarray(seconds, dtype=np.float64)
    lin = np.stack([np.ones_like(n), n], axis=1)
    coef_lin, *_ = np.linalg.lstsq(lin, t, rcond=None)
    quad = (n**2)[:, None]
    coef_quad, *_ = np.linalg.lstsq(quad, t, rcond=None)
    return {
        "linear_coef": coef_lin.tolist(),
        "linear_rss": float(np.sum((lin @ coef_lin - t) ** 2)),
        "quadratic_coef": coef_quad.tolist(),
        "quadratic_rss": float(np.sum((quad @ coef_quad - t) ** 2)),
    }


def spearman(x, y) -> float:
    from scipy.stats import spearmanr

    return float(spearmanr(x, y).statistic)

