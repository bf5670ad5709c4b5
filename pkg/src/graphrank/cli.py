"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import generate_sbm, import_planetoid_raw, load_dataset, save_dataset
from .evaluation import EvalReport, cluster_metrics, evaluate_link, geometry_metrics, linear_probe
from .experiments import (
    ABLATION_HEADER,
    BENCH_HEADER,
    SWEEP_AXES,
    SWEEP_HEADER,
    ablate_false_negatives,
    run_bench,
    run_sweep,
    scaling_fit,
)
from .numkit import load_embeddings, save_embeddings, save_params
from .splits import Fractional, PerClass, edge_split, load_edge_split, load_node_split, node_split, save_edge_split, save_node_split
from .trainer import NEGATIVE_MODES, TrainConfig, read_config_file, train, train_for_link_prediction

log = logging.getLogger("graphrank")

TASKS = ("classify", "link", "cluster", "geometry")


class UsageError(Exception):
    pass


# -- run manifest -------------------------------------------------------------------------


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


_open_manifests: list = []


class RunManifest:
    """``manifest.json`` written when a run starts and rewritten when it ends."""

    def __init__(self, out_dir: Path, command: str, config: dict, seed):
        _open_manifests.append(self)
        self.path = out_dir / "manifest.json"
        self.data = {
            "command": command,
            "config": config,
            "seed": seed,
            "artifacts": [],
            "version": __version__,
            "argv": sys.argv[1:],
            "start": _now(),
            "end": None,
            "status": "running",
        }
        self._write()

    def add(self, *paths) -> None:
        self.data["artifacts"].extend(str(p) for p in paths)

    def finish(self, status: str = "ok", error: str | None = None) -> None:
        if self in _open_manifests:
            _open_manifests.remove(self)
        self.data["end"] = _now()
        self.data["status"] = status
        if error:
            self.data["error"] = error
        self._write()

    def _write(self) -> None:
        self.path.write_text(json.dumps(self.data, indent=2) + "\n")


# -- argument helpers ---------------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    """One ``--flag`` per TrainConfig field; unset flags fall back to file then defaults."""
    g = p.add_argument_group("training")
    for f in dataclasses.fields(TrainConfig):
        if f.name in ("seed", "negatives"):
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            g.add_argument(flag, dest=f.name, choices=["true", "false"], default=None)
        else:
            kind = {"int": int, "float": float}.get(f.type, str)
            g.add_argument(flag, dest=f.name, type=kind, default=None, metavar=f.name.upper())
    g.add_argument(
        "--negatives",
        dest="negatives_flag",
        default=None,
        help=f"negative mode ({'|'.join(NEGATIVE_MODES)}) or an integer count (same as --num-negatives)",
    )


def _add_split_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("probe split")
    g.add_argument("--split", type=Path, help="node split JSON; otherwise one is drawn per seed")
    g.add_argument("--per-class", type=int, help="train nodes per class (switches to a per-class split)")
    g.add_argument("--n-val", type=int, default=500)
    g.add_argument("--n-test", type=int, default=1000)
    g.add_argument("--fractions", type=_float_list, default=[0.1, 0.1], help="train,val fractions")


def _split_policy(args):
    if args.per_class:
        return PerClass(args.per_class, args.n_val, args.n_test)
    if len(args.fractions) != 2:
        raise UsageError("--fractions takes two values: train,val")
    return Fractional(*args.fractions)


def resolve_config(args) -> TrainConfig:
    """Defaults < config file < command-line flags."""
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    for f in dataclasses.fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None and f.name not in ("seed", "negatives"):
            values[f.name] = v
    neg = getattr(args, "negatives_flag", None)
    if neg is not None:
        if neg.isdigit():
            values["num_negatives"] = int(neg)
        else:
            values["negatives"] = neg
    if args.seed is not None:
        values["seed"] = args.seed
    try:
        return TrainConfig.from_mapping(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


# -- commands -------------------------------------------------------------------------------


def cmd_synth(args, out: Path) -> dict:
    if args.p_in < args.p_out:
        raise UsageError(f"--p-in ({args.p_in}) must be at least --p-out ({args.p_out})")
    seed = 0 if args.seed is None else args.seed
    config = {k: getattr(args, k) for k in ("n", "num_classes", "p_in", "p_out", "feat_dim", "feat_noise")}
    manifest = RunManifest(out, "synth", config, seed)
    try:
        ds = generate_sbm(args.n, args.num_classes, args.p_in, args.p_out, args.feat_dim, args.feat_noise, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_dataset(ds, out)
    manifest.add(*(out / f for f in ("graph.edges", "features.csv", "labels.txt", "meta.json")))
    manifest.finish()
    return {"nodes": ds.num_nodes, "edges": ds.graph.num_undirected_edges}


def cmd_convert(args, out: Path) -> dict:
    manifest = RunManifest(out, "convert-planetoid", {"content": str(args.content), "cites": str(args.cites)}, None)
    ds = import_planetoid_raw(args.content, args.cites, args.name)
    save_dataset(ds, out)
    manifest.add(*(out / f for f in ("graph.edges", "features.csv", "labels.txt", "meta.json")))
    manifest.finish()
    return {"nodes": ds.num_nodes, "edges": ds.graph.num_undirected_edges, "classes": ds.num_classes}


def cmd_split(args, out: Path) -> dict:
    ds = load_dataset(args.data)
    seed = 0 if args.seed is None else args.seed
    manifest = RunManifest(out, "split", {"kind": args.kind, "data": str(args.data)}, seed)
    if args.kind == "node":
        split = node_split(ds, _split_policy(args), seed)
        path = out / "splits.json"
        save_node_split(split, path)
        summary = {"train": len(split.train), "val": len(split.val), "test": len(split.test)}
    else:
        if len(args.edge_fractions) != 3:
            raise UsageError("--edge-fractions takes three values: train,val,test")
        split = edge_split(ds, *args.edge_fractions, seed=seed)
        path = out / "edge_splits.json"
        save_edge_split(split, path)
        summary = {"train": len(split.train_edges), "val": len(split.val_edges), "test": len(split.test_edges)}
    manifest.add(path)
    manifest.finish()
    return summary


def cmd_train(args, out: Path) -> dict:
    cfg = resolve_config(args)
    ds = load_dataset(args.data)
    manifest = RunManifest(out, "train", cfg.to_dict(), cfg.seed)
    if args.edge_split:
        Z, report = train_for_link_prediction(ds, load_edge_split(args.edge_split), cfg)
        params = None
    else:
        split = load_node_split(args.split) if args.split else None
        Z, params, report = train(ds, cfg, split)
    emb = out / "embeddings.bin"
    save_embeddings(Z, emb)
    report.write(out / "report.json", out / "epochs.csv")
    manifest.add(emb, emb.with_name(emb.name + ".json"), out / "report.json", out / "epochs.csv")
    if params is not None:
        save_params(params, out / "params.bin")
        manifest.add(out / "params.bin", out / "params.bin.json")
    manifest.finish()
    return {"rows": int(Z.shape[0]), "cols": int(Z.shape[1]), "final_loss": report.records[-1]["loss"]}


def cmd_eval(args, out: Path) -> dict:
    ds = load_dataset(args.data)
    Z = load_embeddings(args.embeddings).astype(np.float64)
    if Z.shape[0] != ds.num_nodes:
        raise ValueError(f"embeddings have {Z.shape[0]} rows but the dataset has {ds.num_nodes} nodes")
    tasks = [t for t in args.task.split(",") if t]
    bad = set(tasks) - set(TASKS)
    if bad:
        raise UsageError(f"unknown task(s) {sorted(bad)}; choose from {TASKS}")
    seed = 0 if args.seed is None else args.seed
    manifest = RunManifest(out, "eval", {"tasks": tasks, "embeddings": str(args.embeddings)}, seed)
    report = EvalReport()
    if "classify" in tasks:
        split = load_node_split(args.split) if args.split else node_split(ds, _split_policy(args), seed)
        split.validate(ds.num_nodes)
        report.accuracy = linear_probe(Z, ds.labels, split, args.l2, args.max_iters)
    if "link" in tasks:
        if not args.edge_split:
            raise UsageError("--task link needs --edge-split")
        link = evaluate_link(Z, load_edge_split(args.edge_split), args.part)
        report.auc, report.ap = link.auc, link.ap
    if "cluster" in tasks:
        clus = cluster_metrics(Z, ds.labels, ds.num_classes, args.restarts, seed)
        report.nmi, report.ari = clus.nmi, clus.ari
    if "geometry" in tasks:
        geo = geometry_metrics(Z, ds.labels, args.delta)
        report.intra_class_variance = geo.intra_class_variance
        report.inter_class_distance = geo.inter_class_distance
    report.write(out / "eval.json")
    manifest.add(out / "eval.json")
    manifest.finish()
    return report.to_json()


def cmd_sweep(args, out: Path) -> dict:
    if not args.values:
        raise UsageError("--values must list at least one value")
    base = resolve_config(args)
    ds = load_dataset(args.data)
    manifest = RunManifest(out, "sweep", {"axis": args.axis, "values": args.values, "base": base.to_dict()}, args.seeds)
    rows = run_sweep(ds, args.axis, args.values, args.seeds, base, _split_policy(args), args.threads)
    path = out / "sweep.csv"
    _write_csv(path, SWEEP_HEADER, rows)
    manifest.add(path)
    manifest.finish()
    return {"rows": len(rows)}


def cmd_ablate(args, out: Path) -> dict:
    base = resolve_config(args)
    ds = load_dataset(args.data)
    manifest = RunManifest(out, "ablate-falseneg", {"base": base.to_dict(), "k": args.k, "control": args.control}, args.seeds)
    rows = ablate_false_negatives(ds, args.seeds, base, args.k, args.control, _split_policy(args), args.threads)
    path = out / "ablation.csv"
    _write_csv(path, ABLATION_HEADER, rows)
    manifest.add(path)
    manifest.finish()
    wins = sum(
        1
        for s in args.seeds
        if next(r["acc"] for r in rows if r["seed"] == s and r["variant"] == "filtered")
        > next(r["acc"] for r in rows if r["seed"] == s and r["variant"] == "plain")
    )
    return {"rows": len(rows), "filtered_wins": wins}


def cmd_bench(args, out: Path) -> dict:
    base = resolve_config(args)
    manifest = RunManifest(out, "bench", {"sizes": args.sizes, "base": base.to_dict()}, base.seed)
    rows = run_bench(
        args.sizes, base, args.bench_epochs, args.repeats,
        num_classes=args.num_classes, avg_degree=args.avg_degree, feat_dim=args.feat_dim, seed=base.seed,
    )
    path = out / "bench.csv"
    _write_csv(path, BENCH_HEADER, rows)
    ok = [r for r in rows if r["rank_status"] == "ok"]
    fit = scaling_fit([r["n"] for r in ok], [r["rank_seconds"] for r in ok]) if len(ok) >= 2 else {}
    (out / "bench_fit.json").write_text(json.dumps(fit, indent=2) + "\n")
    manifest.add(path, out / "bench_fit.json")
    manifest.finish()
    return {"speedups": {r["n"]: r["speedup"] for r in rows}}


# -- parser ---------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress: bool) -> argparse.ArgumentParser:
        # subcommand copies default to SUPPRESS so values given before the subcommand survive
        p = argparse.ArgumentParser(add_help=False)
        default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        p.add_argument("--config", type=Path, default=default(None), help="key = value training config file")
        p.add_argument("--seed", type=int, default=default(None))
        p.add_argument("--out-dir", type=Path, default=default(Path("out")))
        p.add_argument("--threads", type=int, default=default(1), help="worker processes for sweep/ablation fan-out")
        p.add_argument("-v", "--verbose", action="store_true", default=default(False))
        return p

    common = global_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="graphrank", description=__doc__.splitlines()[0], parents=[global_flags(False)])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a stochastic block model dataset")
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--num-classes", type=int, default=4)
    p.add_argument("--p-in", type=float, default=0.1)
    p.add_argument("--p-out", type=float, default=0.01)
    p.add_argument("--feat-dim", type=int, default=256)
    p.add_argument("--feat-noise", type=float, default=0.5)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert-planetoid", parents=[common], help="import raw cora.content / cora.cites files")
    p.add_argument("--content", type=Path, required=True)
    p.add_argument("--cites", type=Path, required=True)
    p.add_argument("--name", default="cora")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("split", parents=[common], help="write node or edge splits")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--kind", choices=["node", "edge"], default="node")
    p.add_argument("--edge-fractions", type=_float_list, default=[0.7, 0.2, 0.1])
    _add_split_flags(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=[common], help="train the encoder and write embeddings")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--edge-split", type=Path, help="hide val/test edges of this split from message passing")
    p.add_argument("--split", type=Path, help="node split used by --eval-every probing")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score embeddings on downstream tasks")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--task", default="classify", help=f"comma list from {','.join(TASKS)}")
    p.add_argument("--edge-split", type=Path)
    p.add_argument("--part", choices=["test", "val"], default="test")
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--delta", type=float, default=0.0)
    _add_split_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="cross product of one hyperparameter and seeds")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--axis", choices=sorted(SWEEP_AXES), required=True)
    p.add_argument("--values", type=_float_list, required=True)
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
    _add_train_flags(p)
    _add_split_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate-falseneg", parents=[common], help="InfoNCE with and without same-class negatives")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
    p.add_argument("--k", type=int, default=32, help="negatives per anchor")
    p.add_argument("--control", action="store_true", help="add a rank-loss reference row per seed")
    _add_train_flags(p)
    _add_split_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", parents=[common], help="per-epoch time, rank loss vs all-negative InfoNCE")
    p.add_argument("--sizes", type=_int_list, default=[1000, 2000, 4000, 8000, 10000])
    p.add_argument("--bench-epochs", type=int, default=3, help="timed epochs after one warmup epoch")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--num-classes", type=int, default=4)
    p.add_argument("--avg-degree", type=float, default=10.0)
    p.add_argument("--feat-dim", type=int, default=128)
    _add_train_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def _close_open_manifests(error: str) -> None:
    for manifest in list(_open_manifests):
        manifest.finish("error", error)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    _open_manifests.clear()
    try:
        summary = args.func(args, out)
    except UsageError as exc:
        _close_open_manifests(str(exc))
        parser.print_usage(sys.stderr)
        print(f"graphrank: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any failure maps to exit status 1
        _close_open_manifests(f"{type(exc).__name__}: {exc}")
        log.debug("run failed", exc_info=True)
        print(f"graphrank: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    summary = {"command": args.command, "out_dir": str(out), "seconds": round(time.perf_counter() - t0, 3), **summary}
    print(json.dumps(summary, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
