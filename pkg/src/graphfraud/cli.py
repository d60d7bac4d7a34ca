"""Operator-facing command line: dataset generation, embedding preparation,
training, and bottleneck-width sweeps.

Configuration is layered (built-in defaults, then an optional JSON config
file, then flags) and the fully resolved form is persisted in the run
manifest before training starts, so any run can be reproduced from its
manifest plus the dataset and cache bytes. Exit codes are stable:
0 success, 2 validation, 3 IO, 4 provider, 5 numeric abort.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .enhancer import (
    CacheOnlyProvider,
    EmbeddingCache,
    PseudoEmbeddingProvider,
    RemoteEmbeddingProvider,
    build_prompts,
    collect_embeddings,
    fetch_embedding,
)
from .errors import GraphFraudError, ValidationError
from .graph import SyntheticSpec, generate_synthetic, load_dataset, read_meta, save_dataset
from .model import ModelConfig, dump_fused_representations
from .training import TrainConfig, run_experiment

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    "model": {
        "hidden_dim": 64,
        "type_bottleneck": 8,
        "relation_bottleneck": 16,
        "leaky_slope": 0.01,
        "backbone": "relation-mean",
        "backbone_layers": 1,
        "use_type_enhancer": True,
        "use_relation_enhancer": True,
    },
    "train": {
        "batch_size": 256,
        "max_epochs": 300,
        "learning_rate": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
        "seed": 0,
        "early_stop_patience": 30,
        "eval_every": 1,
        "class_weighting": "none",
    },
    "split": {"train_ratio": 0.01, "val_ratio": 0.10},
    "repeats": 1,
}

METRICS_CSV_HEADER = "seed,lambda,gamma,batch_size,epochs,best_epoch,aucroc,aucprc,f1_macro\n"


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------


def resolve_config(config_path: str | None, flag_overrides: dict) -> dict:
    """defaults < config file < flags; rejects unknown keys, listing all of them.

    A run manifest is accepted wherever a config file is: its
    ``resolved_config`` subtree is used, so any run can be repeated from its
    own manifest.
    """
    resolved = copy.deepcopy(DEFAULT_CONFIG)
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}") from exc
        if "resolved_config" in loaded:
            loaded = loaded["resolved_config"]
        _merge_config(resolved, loaded, source=str(path))
    _merge_config(resolved, flag_overrides, source="flags")
    return resolved


def _merge_config(base: dict, update: dict, source: str) -> None:
    bad_keys = []
    for section, value in update.items():
        if section not in base:
            bad_keys.append(section)
            continue
        if isinstance(base[section], dict):
            if not isinstance(value, dict):
                bad_keys.append(section)
                continue
            for key, inner in value.items():
                if key not in base[section]:
                    bad_keys.append(f"{section}.{key}")
                else:
                    base[section][key] = inner
        else:
            base[section] = value
    if bad_keys:
        raise ValidationError(f"unknown config keys from {source}: {sorted(bad_keys)}")


def _model_config(resolved: dict, meta: dict) -> ModelConfig:
    m = resolved["model"]
    return ModelConfig(
        input_dim=int(meta["feature_dim"]),
        num_types=len(meta["node_type_names"]),
        num_relations=len(meta["relation_names"]),
        hidden_dim=int(m["hidden_dim"]),
        type_bottleneck=int(m["type_bottleneck"]),
        relation_bottleneck=int(m["relation_bottleneck"]),
        leaky_slope=float(m["leaky_slope"]),
        backbone=str(m["backbone"]),
        backbone_layers=int(m["backbone_layers"]),
        use_type_enhancer=bool(m["use_type_enhancer"]),
        use_relation_enhancer=bool(m["use_relation_enhancer"]),
    )


def _train_config(resolved: dict) -> TrainConfig:
    t = resolved["train"]
    return TrainConfig(
        batch_size=int(t["batch_size"]),
        max_epochs=int(t["max_epochs"]),
        learning_rate=float(t["learning_rate"]),
        beta1=float(t["beta1"]),
        beta2=float(t["beta2"]),
        epsilon=float(t["epsilon"]),
        seed=int(t["seed"]),
        early_stop_patience=int(t["early_stop_patience"]),
        eval_every=int(t["eval_every"]),
        class_weighting=str(t["class_weighting"]),
    )


def dataset_fingerprint(dataset_dir) -> str:
    """sha256 over meta.json bytes plus (name, size) of every dataset file."""
    root = Path(dataset_dir)
    digest = hashlib.sha256()
    meta_path = root / "meta.json"
    if meta_path.exists():
        digest.update(meta_path.read_bytes())
    for path in sorted(root.glob("*.csv")):
        digest.update(path.name.encode("utf-8"))
        digest.update(str(path.stat().st_size).encode("ascii"))
    return digest.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------


def make_provider(args, cache: EmbeddingCache):
    kind = args.provider
    if kind == "pseudo":
        return PseudoEmbeddingProvider(dim=args.dim, seed=args.provider_seed)
    if kind == "cache-only":
        provider_id = args.provider_id or cache.single_provider_id()
        return CacheOnlyProvider(provider_id)
    if kind == "remote":
        if not args.remote_url:
            raise ValidationError("--remote-url is required with --provider remote")
        return RemoteEmbeddingProvider(
            args.remote_url,
            model=args.remote_model,
            summary_url=args.summary_url,
        )
    raise ValidationError(f"unknown provider '{kind}'")


def _load_embeddings_from_cache(dataset_dir, cache_path, provider_id=None):
    meta = read_meta(dataset_dir)
    cache = EmbeddingCache(cache_path)
    pid = provider_id or cache.single_provider_id()
    provider = CacheOnlyProvider(pid)
    type_prompts, relation_prompts = build_prompts(meta)
    return meta, collect_embeddings(type_prompts, relation_prompts, provider, cache)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    spec = SyntheticSpec(
        num_nodes=args.nodes,
        num_relations=args.relations,
        feature_dim=args.feature_dim,
        fraud_ratio=args.fraud_ratio,
        homophily=_float_list(args.homophily, args.relations),
        feature_shift=args.feature_shift,
        avg_degree=_float_list(args.avg_degree, args.relations),
        seed=args.seed,
        num_types=args.types,
    )
    graph = generate_synthetic(spec)
    save_dataset(graph, args.out, name=args.name)
    counts = graph.edge_counts()
    print(f"wrote dataset to {args.out}")
    print(f"nodes: {graph.num_nodes}, fraud: {int(graph.labels.sum())}")
    for name, count in counts.items():
        print(f"relation {name}: {count} undirected edges")
    return 0


def cmd_prepare_embeddings(args) -> int:
    meta = read_meta(args.dataset)
    cache = EmbeddingCache(args.cache)
    provider = make_provider(args, cache)
    type_prompts, relation_prompts = build_prompts(meta)
    for prompt in type_prompts + relation_prompts:
        record = fetch_embedding(prompt, provider, cache)
        print(f"{prompt.kind} {prompt.subject_name} {record.prompt_sha256} dim={record.dim}")
    print(f"provider calls: {provider.calls}")
    print(f"cache records: {len(cache)} at {args.cache}")
    return 0


def _train_flag_overrides(args) -> dict:
    overrides: dict = {"model": {}, "train": {}, "split": {}}
    if args.lambda_ is not None:
        overrides["model"]["type_bottleneck"] = args.lambda_
    if args.gamma is not None:
        overrides["model"]["relation_bottleneck"] = args.gamma
    if args.batch_size is not None:
        overrides["train"]["batch_size"] = args.batch_size
    if args.seed is not None:
        overrides["train"]["seed"] = args.seed
    if args.learning_rate is not None:
        overrides["train"]["learning_rate"] = args.learning_rate
    if args.max_epochs is not None:
        overrides["train"]["max_epochs"] = args.max_epochs
    if args.train_ratio is not None:
        overrides["split"]["train_ratio"] = args.train_ratio
    if args.val_ratio is not None:
        overrides["split"]["val_ratio"] = args.val_ratio
    if args.repeats is not None:
        overrides["repeats"] = args.repeats
    return overrides


def _prepare_run(args):
    resolved = resolve_config(args.config, _train_flag_overrides(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta, embeddings = _load_embeddings_from_cache(args.dataset, args.cache, args.provider_id)
    manifest = {
        "artifact_version": __version__,
        "config_path": args.config,
        "resolved_config": resolved,
        "dataset_dir": str(args.dataset),
        "dataset_fingerprint": dataset_fingerprint(args.dataset),
        "cache_path": str(args.cache),
        "output_dir": str(out),
    }
    _write_json(out / "manifest.json", manifest)
    graph = load_dataset(args.dataset)
    return resolved, out, meta, embeddings, graph


def _append_metrics_rows(csv_path: Path, resolved: dict, runs) -> None:
    new_file = not csv_path.exists()
    with open(csv_path, "a", encoding="utf-8") as f:
        if new_file:
            f.write(METRICS_CSV_HEADER)
        for record in runs:
            test = record.test
            f.write(
                f"{record.seed},{resolved['model']['type_bottleneck']},"
                f"{resolved['model']['relation_bottleneck']},"
                f"{resolved['train']['batch_size']},{len(record.epochs)},"
                f"{'' if record.best_epoch is None else record.best_epoch},"
                f"{_fmt(test.aucroc if test else None)},"
                f"{_fmt(test.aucprc if test else None)},"
                f"{_fmt(test.f1_macro if test else None)}\n"
            )


def cmd_train(args) -> int:
    resolved, out, meta, embeddings, graph = _prepare_run(args)
    model_cfg = _model_config(resolved, meta)
    train_cfg = _train_config(resolved)
    repeats = int(resolved["repeats"])

    report = run_experiment(
        graph,
        embeddings,
        model_cfg,
        train_cfg,
        repeats=repeats,
        base_seed=train_cfg.seed,
        train_ratio=float(resolved["split"]["train_ratio"]),
        val_ratio=float(resolved["split"]["val_ratio"]),
        out_dir=out,
        keep_models=bool(args.dump_embeddings),
    )

    for record in report.runs:
        _write_json(out / f"run_seed{record.seed}.json", record.to_dict())
    _write_json(out / "aggregate.json", report.to_dict())
    csv_path = Path(args.metrics_csv) if args.metrics_csv else out / "metrics.csv"
    _append_metrics_rows(csv_path, resolved, report.runs)

    if args.dump_embeddings:
        rows = dump_fused_representations(
            report.models[0], graph, embeddings, args.dump_embeddings
        )
        print(f"wrote {rows} representation rows to {args.dump_embeddings}")

    for name, stats in report.metrics.items():
        if stats["mean"] is None:
            print(f"test {name}: undefined")
        else:
            print(f"test {name}: {stats['mean']:.4f} +/- {stats['std']:.4f} (n={stats['n']})")
    print(f"artifacts in {out}")
    return 0


def cmd_sweep(args) -> int:
    values = sorted({int(v) for v in args.values.split(",") if v.strip()})
    if not values:
        raise ValidationError("--values must name at least one bottleneck width")
    section_key = "type_bottleneck" if args.param == "lambda" else "relation_bottleneck"

    resolved, out, meta, embeddings, graph = _prepare_run(args)
    train_cfg = _train_config(resolved)
    repeats = int(resolved["repeats"])

    rows = []
    for value in values:
        local = copy.deepcopy(resolved)
        local["model"][section_key] = value
        model_cfg = _model_config(local, meta)
        report = run_experiment(
            graph,
            embeddings,
            model_cfg,
            train_cfg,
            repeats=repeats,
            base_seed=train_cfg.seed,
            train_ratio=float(resolved["split"]["train_ratio"]),
            val_ratio=float(resolved["split"]["val_ratio"]),
        )
        stats = report.metrics["aucroc"]
        rows.append((value, stats["mean"], stats["std"]))

    csv_path = out / f"sweep_{args.param}.csv"
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write("value,aucroc_mean,aucroc_std\n")
        for value, mean, std in rows:
            f.write(f"{value},{_fmt(mean)},{_fmt(std)}\n")
    for value, mean, std in rows:
        shown = "undefined" if mean is None else f"{mean:.4f} +/- {std:.4f}"
        print(f"{args.param}={value}: aucroc {shown}")
    print(f"sweep table: {csv_path}")
    return 0


def _float_list(text: str, count: int):
    parts = [float(v) for v in str(text).split(",") if v.strip()]
    if len(parts) == 1:
        return parts[0]
    if len(parts) != count:
        raise ValidationError(f"expected 1 or {count} comma-separated values, got {len(parts)}")
    return tuple(parts)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphfraud",
        description="Multi-relation graph fraud detection with semantic enhancement.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset directory")
    gen.add_argument("--out", required=True)
    gen.add_argument("--nodes", type=int, default=2000)
    gen.add_argument("--relations", type=int, default=3)
    gen.add_argument("--feature-dim", type=int, default=16)
    gen.add_argument("--fraud-ratio", type=float, default=0.05)
    gen.add_argument("--homophily", default="0.8", help="scalar or per-relation comma list")
    gen.add_argument("--feature-shift", type=float, default=0.5)
    gen.add_argument("--avg-degree", default="10", help="scalar or per-relation comma list")
    gen.add_argument("--types", type=int, default=2)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--name", default="synthetic")
    gen.set_defaults(func=cmd_generate)

    prep = sub.add_parser("prepare-embeddings", help="build prompts and fill the cache")
    prep.add_argument("--dataset", required=True)
    prep.add_argument("--cache", required=True)
    prep.add_argument("--provider", choices=["pseudo", "cache-only", "remote"], default="pseudo")
    prep.add_argument("--dim", type=int, default=1536, help="pseudo provider dimension")
    prep.add_argument("--provider-seed", type=int, default=0)
    prep.add_argument("--provider-id", default=None, help="provider id for cache-only mode")
    prep.add_argument("--remote-url", default=None)
    prep.add_argument("--remote-model", default="text-embedding")
    prep.add_argument("--summary-url", default=None)
    prep.set_defaults(func=cmd_prepare_embeddings)

    def add_run_flags(p):
        p.add_argument("--dataset", required=True)
        p.add_argument("--cache", required=True)
        p.add_argument("--config", default=None)
        p.add_argument("--out", required=True)
        p.add_argument("--provider-id", default=None, help="cache provider id to replay")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--repeats", type=int, default=None)
        p.add_argument("--lambda", dest="lambda_", type=int, default=None,
                       help="type-path bottleneck width")
        p.add_argument("--gamma", type=int, default=None,
                       help="relation-path bottleneck width")
        p.add_argument("--batch-size", type=int, default=None)
        p.add_argument("--learning-rate", type=float, default=None)
        p.add_argument("--max-epochs", type=int, default=None)
        p.add_argument("--train-ratio", type=float, default=None)
        p.add_argument("--val-ratio", type=float, default=None)

    tr = sub.add_parser("train", help="train and evaluate on a dataset")
    add_run_flags(tr)
    tr.add_argument("--metrics-csv", default=None, help="append one row per run here")
    tr.add_argument("--dump-embeddings", default=None,
                    help="write fused representations of labeled nodes to this CSV")
    tr.set_defaults(func=cmd_train)

    sw = sub.add_parser("sweep", help="train across bottleneck widths")
    add_run_flags(sw)
    sw.add_argument("--param", choices=["lambda", "gamma"], required=True)
    sw.add_argument("--values", required=True, help="comma-separated widths, e.g. 2,4,8,16,32,64")
    sw.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        # single BLAS thread: runs are reproducible bit for bit
        with threadpool_limits(limits=1):
            return args.func(args)
    except GraphFraudError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
