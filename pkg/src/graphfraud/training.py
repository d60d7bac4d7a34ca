"""End-to-end training: mini-batch schedule, Adam stepping, validation-driven
early stopping, checkpointing, test evaluation, and multi-seed experiments.

One run is fully determined by its seed: parameter initialization, the
per-epoch shuffles, and the split all derive from it, so a repeated run
reproduces the same parameters and metrics bit for bit (single-threaded).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .enhancer import EmbeddingSet
from .errors import NumericError, ValidationError
from .graph import MultiRelationGraph, SplitAssignment, make_split
from .metrics import EvalReport
from .model import FraudDetector, ModelConfig
from .numerics import AdamConfig, adam_step, cross_entropy_loss

logger = logging.getLogger(__name__)

WEIGHTING_CHOICES = ("none", "inverse-frequency")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    max_epochs: int = 300
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    early_stop_patience: int = 30
    eval_every: int = 1
    class_weighting: str = "none"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be >= 1")
        if self.early_stop_patience < 1:
            raise ValidationError("early_stop_patience must be >= 1")
        if self.eval_every < 1:
            raise ValidationError("eval_every must be >= 1")
        if self.class_weighting not in WEIGHTING_CHOICES:
            raise ValidationError(
                f"class_weighting must be one of {WEIGHTING_CHOICES}, got '{self.class_weighting}'"
            )
        # delegate optimizer validation
        self.adam()

    def adam(self) -> AdamConfig:
        return AdamConfig(
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
        )


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    wall_clock_s: float
    val: EvalReport | None = None

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "wall_clock_s": self.wall_clock_s,
            "val": self.val.to_dict() if self.val is not None else None,
        }


@dataclass
class RunRecord:
    seed: int
    epochs: list
    best_epoch: int | None
    best_val_aucroc: float | None
    best_checkpoint: str | None
    test: EvalReport | None
    model_config: dict
    train_config: dict

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "epochs": [e.to_dict() for e in self.epochs],
            "best_epoch": self.best_epoch,
            "best_val_aucroc": self.best_val_aucroc,
            "best_checkpoint": self.best_checkpoint,
            "test": self.test.to_dict() if self.test is not None else None,
            "model_config": self.model_config,
            "train_config": self.train_config,
        }

    @property
    def initial_train_loss(self) -> float:
        return self.epochs[0].train_loss

    @property
    def final_train_loss(self) -> float:
        return self.epochs[-1].train_loss


def _per_sample_nll(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum(axis=1))
    return lse - shifted[np.arange(logits.shape[0]), targets]


def _class_weights(labels: np.ndarray, scheme: str) -> np.ndarray | None:
    if scheme == "none":
        return None
    counts = np.bincount(labels, minlength=2).astype(np.float64)
    if np.any(counts == 0):
        raise ValidationError("inverse-frequency weighting requires both classes in train")
    return labels.shape[0] / (2.0 * counts)


def train(
    graph: MultiRelationGraph,
    split: SplitAssignment,
    embeddings: EmbeddingSet,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    *,
    out_dir=None,
    checkpoint_name: str = "checkpoint.bin",
    check_invariants: bool = False,
) -> tuple[RunRecord, FraudDetector]:
    """Run the full training loop and return the record plus the restored model.

    Per epoch: shuffle the train ids (seeded), then for each batch run
    forward -> cross-entropy -> backward -> Adam. Validation runs every
    ``eval_every`` epochs; the best-validation-AUCROC parameters are restored
    at the end and test metrics are computed exactly once on them.
    ``check_invariants`` makes every forward pass assert its normalization
    invariants, aborting the run on the first violation.
    """
    if split.train_ids.size == 0:
        raise ValidationError("train: empty train split")
    if not np.all(graph.label_mask[split.train_ids]):
        raise ValidationError("train: every train node must be labeled")

    model = FraudDetector(model_cfg, embeddings.raw_dim, init_seed=train_cfg.seed)
    model.check_invariants = check_invariants
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([train_cfg.seed, 1]))
    adam_cfg = train_cfg.adam()

    train_ids = split.train_ids
    train_labels = graph.labels[train_ids]
    weights = _class_weights(train_labels, train_cfg.class_weighting)

    best_values = None
    best_epoch: int | None = None
    best_val = -np.inf
    epochs: list[EpochRecord] = []

    for epoch in range(1, train_cfg.max_epochs + 1):
        started = time.perf_counter()
        perm = shuffle_rng.permutation(train_ids)
        nll_perm = np.empty(perm.shape[0], dtype=np.float64)
        for batch_index, start in enumerate(range(0, perm.shape[0], train_cfg.batch_size)):
            batch = perm[start : start + train_cfg.batch_size]
            targets = graph.labels[batch]
            trace = model.forward(graph, batch, embeddings)
            sample_w = weights[targets] if weights is not None else None
            loss, dlogits = cross_entropy_loss(trace.logits, targets, sample_w)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}, batch {batch_index}"
                )
            model.backward(trace, dlogits, graph)
            adam_step(model.store, adam_cfg)
            nll_perm[start : start + batch.shape[0]] = _per_sample_nll(trace.logits, targets)

        # aggregate in node-id order so the reported loss does not depend on
        # how the shuffle partitioned the epoch
        canonical = np.argsort(perm, kind="stable")
        nll = nll_perm[canonical]
        if weights is None:
            epoch_loss = float(nll.mean())
        else:
            w = weights[graph.labels[perm[canonical]]]
            epoch_loss = float((w * nll).sum() / w.sum())
        wall = time.perf_counter() - started

        val_report = None
        if epoch % train_cfg.eval_every == 0:
            val_report = evaluate(
                model, graph, split.val_ids, embeddings, batch_size=train_cfg.batch_size
            )
            if val_report.aucroc is not None and val_report.aucroc > best_val:
                best_val = float(val_report.aucroc)
                best_epoch = epoch
                best_values = model.store.copy_values()

        epochs.append(EpochRecord(epoch=epoch, train_loss=epoch_loss, wall_clock_s=wall,
                                  val=val_report))
        logger.debug("epoch %d: loss=%.6f", epoch, epoch_loss)

        if best_epoch is not None and epoch - best_epoch >= train_cfg.early_stop_patience:
            logger.info("early stop at epoch %d (best epoch %d)", epoch, best_epoch)
            break

    if best_values is not None:
        model.store.load_values(best_values)

    checkpoint_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        checkpoint_path = str(out / checkpoint_name)
        model.store.save(checkpoint_path)

    test_report = None
    if split.test_ids.size:
        test_report = evaluate(
            model, graph, split.test_ids, embeddings, batch_size=train_cfg.batch_size
        )

    record = RunRecord(
        seed=train_cfg.seed,
        epochs=epochs,
        best_epoch=best_epoch,
        best_val_aucroc=None if best_epoch is None else best_val,
        best_checkpoint=checkpoint_path,
        test=test_report,
        model_config=_config_dict(model_cfg),
        train_config=_config_dict(train_cfg),
    )
    return record, model


def evaluate(
    model: FraudDetector,
    graph: MultiRelationGraph,
    node_ids,
    embeddings: EmbeddingSet,
    batch_size: int = 1024,
) -> EvalReport:
    """Batched inference over ``node_ids``; fraud-class probabilities feed the
    ranking metrics, argmax feeds F1."""
    ids = np.asarray(node_ids, dtype=np.int64).reshape(-1)
    if ids.size == 0:
        raise ValidationError("evaluate: empty node id set")
    if not np.all(graph.label_mask[ids]):
        raise ValidationError("evaluate: every node must be labeled")
    scores = np.empty(ids.shape[0], dtype=np.float64)
    preds = np.empty(ids.shape[0], dtype=np.int64)
    for start in range(0, ids.shape[0], batch_size):
        batch = ids[start : start + batch_size]
        trace = model.forward(graph, batch, embeddings)
        scores[start : start + batch.shape[0]] = trace.probs[:, 1]
        preds[start : start + batch.shape[0]] = trace.probs.argmax(axis=1)
    return EvalReport.from_scores(scores, graph.labels[ids], preds)


# ---------------------------------------------------------------------------
# Multi-seed experiments
# ---------------------------------------------------------------------------

METRIC_NAMES = ("aucroc", "aucprc", "f1_macro")


def aggregate_metrics(reports: list) -> dict:
    """Mean and sample standard deviation per metric over defined values.

    Undefined (None) values are skipped; a single value reports std 0.0; the
    result does not depend on the order of the reports.
    """
    out = {}
    for name in METRIC_NAMES:
        values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        if not values:
            out[name] = {"mean": None, "std": None, "n": 0}
            continue
        arr = np.sort(np.asarray(values, dtype=np.float64))
        mean = float(arr.mean())
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        out[name] = {"mean": mean, "std": std, "n": int(arr.size)}
    return out


@dataclass
class AggregateReport:
    repeats: int
    base_seed: int
    runs: list
    metrics: dict
    models: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "repeats": self.repeats,
            "base_seed": self.base_seed,
            "metrics": self.metrics,
            "runs": [r.to_dict() for r in self.runs],
        }


def run_experiment(
    graph: MultiRelationGraph,
    embeddings: EmbeddingSet,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    *,
    repeats: int,
    base_seed: int | None = None,
    train_ratio: float = 0.01,
    val_ratio: float = 0.10,
    out_dir=None,
    keep_models: bool = False,
) -> AggregateReport:
    """``repeats`` full runs with seeds base_seed .. base_seed + repeats - 1.

    Each seed drives its own split, initialization, and shuffle stream; test
    metrics are reported as mean plus sample standard deviation.
    """
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    if base_seed is None:
        base_seed = train_cfg.seed
    runs = []
    models = []
    for i in range(repeats):
        seed = int(base_seed) + i
        split = make_split(graph, train_ratio, val_ratio, seed=seed)
        cfg = replace(train_cfg, seed=seed)
        record, model = train(
            graph, split, embeddings, model_cfg, cfg,
            out_dir=out_dir,
            checkpoint_name=f"checkpoint_seed{seed}.bin",
        )
        runs.append(record)
        if keep_models:
            models.append(model)
    metrics = aggregate_metrics([r.test for r in runs if r.test is not None])
    return AggregateReport(
        repeats=repeats,
        base_seed=int(base_seed),
        runs=runs,
        metrics=metrics,
        models=models,
    )


def _config_dict(cfg) -> dict:
    out = {}
    for name in cfg.__dataclass_fields__:
        value = getattr(cfg, name)
        if isinstance(value, tuple):
            value = list(value)
        out[name] = value
    return out
