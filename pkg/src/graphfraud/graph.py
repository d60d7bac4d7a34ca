"""Multi-relation graph data model, dataset directory IO, stratified splits,
and a seeded synthetic fraud-graph generator for desk-scale experiments.

A dataset directory holds:

* ``meta.json`` with ``num_nodes``, ``feature_dim``, ``relation_names``,
  ``node_type_names``, label-value semantics, and optional type/relation
  descriptions used for prompt construction;
* ``features.csv`` with N rows of D comma-separated floats, no header;
* ``labels.csv`` with ``node_id,label`` rows where -1 marks unlabeled nodes;
* one ``edges_<relation>.csv`` of ``src,dst`` pairs per relation. Edge files
  may be directed and may contain duplicates; loading always symmetrizes,
  deduplicates, and removes self-loops.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import LoadError, ValidationError

logger = logging.getLogger(__name__)

UNLABELED = -1

META_REQUIRED_KEYS = ("num_nodes", "feature_dim", "relation_names", "node_type_names")


@dataclass(frozen=True, eq=False)
class RelationAdjacency:
    """CSR adjacency for one relation: per-node sorted, duplicate-free rows."""

    offsets: np.ndarray
    neighbors: np.ndarray

    @classmethod
    def from_pairs(cls, num_nodes: int, src, dst) -> "RelationAdjacency":
        """Build symmetric, deduplicated, self-loop-free CSR from raw pairs."""
        src = np.asarray(src, dtype=np.int64).reshape(-1)
        dst = np.asarray(dst, dtype=np.int64).reshape(-1)
        if src.shape != dst.shape:
            raise ValidationError("edge source/target arrays must have equal length")
        keep = src != dst
        src, dst = src[keep], dst[keep]
        a = np.concatenate([src, dst])
        b = np.concatenate([dst, src])
        if a.size:
            keys = np.unique(a * np.int64(num_nodes) + b)
            a = keys // num_nodes
            b = keys % num_nodes
        counts = np.bincount(a, minlength=num_nodes)
        offsets = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(offsets=offsets, neighbors=b.astype(np.int64))

    @property
    def num_nodes(self) -> int:
        return self.offsets.shape[0] - 1

    @property
    def num_undirected_edges(self) -> int:
        return self.neighbors.shape[0] // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    def neighbors_of(self, node: int) -> np.ndarray:
        return self.neighbors[self.offsets[node] : self.offsets[node + 1]]

    def validate(self, num_nodes: int, name: str = "relation") -> None:
        off, nbr = self.offsets, self.neighbors
        if off.shape[0] != num_nodes + 1:
            raise ValidationError(f"{name}: offsets length {off.shape[0]} != num_nodes + 1")
        if off[0] != 0 or off[-1] != nbr.shape[0]:
            raise ValidationError(f"{name}: offsets do not bracket the neighbor buffer")
        if np.any(np.diff(off) < 0):
            raise ValidationError(f"{name}: offsets must be nondecreasing")
        if nbr.size and (nbr.min() < 0 or nbr.max() >= num_nodes):
            raise ValidationError(f"{name}: neighbor index out of range [0, {num_nodes})")
        if nbr.size:
            diffs = np.diff(nbr)
            row_start = np.zeros(nbr.shape[0], dtype=bool)
            starts = off[1:-1]
            row_start[starts[starts < nbr.shape[0]]] = True
            if not np.all(diffs[~row_start[1:]] > 0):
                raise ValidationError(f"{name}: neighbor rows must be sorted without duplicates")
            src = np.repeat(np.arange(num_nodes, dtype=np.int64), np.diff(off))
            if np.any(src == nbr):
                raise ValidationError(f"{name}: self-loops are not allowed")
            fwd = src * np.int64(num_nodes) + nbr
            rev = nbr * np.int64(num_nodes) + src
            if not np.array_equal(np.sort(rev), fwd):
                raise ValidationError(f"{name}: adjacency is not symmetric")


@dataclass(frozen=True, eq=False)
class MultiRelationGraph:
    """Immutable node set with per-relation CSR adjacency, features, labels."""

    num_nodes: int
    num_relations: int
    relations: list
    features: np.ndarray
    labels: np.ndarray
    label_mask: np.ndarray
    node_type_names: list
    relation_names: list

    def validate(self) -> None:
        n = self.num_nodes
        if n <= 0:
            raise ValidationError("graph must contain at least one node")
        if self.num_relations != len(self.relations) or self.num_relations != len(self.relation_names):
            raise ValidationError("relation count disagrees with adjacency/name lists")
        if not self.node_type_names:
            raise ValidationError("node_type_names must be non-empty")
        if self.features.shape[0] != n or self.features.ndim != 2:
            raise ValidationError(f"features must be {n} x D, got shape {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            bad = int(np.flatnonzero(~np.isfinite(self.features).all(axis=1))[0])
            raise ValidationError(f"non-finite feature value at node {bad}")
        if self.labels.shape != (n,) or self.label_mask.shape != (n,):
            raise ValidationError("labels and label_mask must have one entry per node")
        masked = self.labels[self.label_mask]
        if masked.size and np.any((masked != 0) & (masked != 1)):
            raise ValidationError("labels must be 0 or 1 wherever label_mask is set")
        for name, rel in zip(self.relation_names, self.relations):
            rel.validate(n, name=f"relation '{name}'")

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def edge_counts(self) -> dict:
        """Undirected edge count per relation name."""
        return {
            name: rel.num_undirected_edges
            for name, rel in zip(self.relation_names, self.relations)
        }

    def labeled_ids(self) -> np.ndarray:
        return np.flatnonzero(self.label_mask)


@dataclass(frozen=True)
class SplitAssignment:
    """Disjoint train/val/test node-index vectors over the labeled nodes."""

    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray
    seed: int
    train_ratio: float
    val_ratio: float


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for the planted-signal synthetic fraud graph.

    ``homophily`` and ``avg_degree`` accept a scalar (broadcast over
    relations) or one value per relation. ``feature_shift`` is the Euclidean
    distance between the class-conditional feature means.
    """

    num_nodes: int
    num_relations: int
    feature_dim: int
    fraud_ratio: float
    homophily: tuple = (0.8,)
    feature_shift: float = 0.5
    avg_degree: tuple = (10.0,)
    seed: int = 0
    num_types: int = 2

    def __post_init__(self):
        object.__setattr__(self, "homophily", _per_relation(self.homophily, self.num_relations))
        object.__setattr__(self, "avg_degree", _per_relation(self.avg_degree, self.num_relations))
        if self.num_nodes < 2 or self.num_relations < 1 or self.feature_dim < 1:
            raise ValidationError("num_nodes, num_relations, feature_dim must be positive")
        if not 0.0 < self.fraud_ratio < 0.5:
            raise ValidationError(f"fraud_ratio must lie in (0, 0.5), got {self.fraud_ratio}")
        if any(not 0.0 <= h <= 1.0 for h in self.homophily):
            raise ValidationError("homophily values must lie in [0, 1]")
        if any(d < 1.0 for d in self.avg_degree):
            raise ValidationError("avg_degree must be >= 1 for every relation")
        if self.num_types < 1:
            raise ValidationError("num_types must be >= 1")


def _per_relation(value, num_relations: int) -> tuple:
    if np.isscalar(value):
        return (float(value),) * num_relations
    out = tuple(float(v) for v in value)
    if len(out) != num_relations:
        raise ValidationError(
            f"expected {num_relations} per-relation values, got {len(out)}"
        )
    return out


# ---------------------------------------------------------------------------
# Dataset directory IO
# ---------------------------------------------------------------------------


def read_meta(path) -> dict:
    """Load and validate ``meta.json`` from a dataset directory."""
    meta_path = Path(path) / "meta.json"
    if not meta_path.exists():
        raise LoadError(f"missing meta descriptor: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise LoadError(f"cannot parse {meta_path}: {exc}") from exc
    for key in META_REQUIRED_KEYS:
        if key not in meta:
            raise ValidationError(f"{meta_path}: missing required key '{key}'")
    if int(meta["num_nodes"]) <= 0 or int(meta["feature_dim"]) <= 0:
        raise ValidationError(f"{meta_path}: num_nodes and feature_dim must be positive")
    if not meta["relation_names"] or not meta["node_type_names"]:
        raise ValidationError(f"{meta_path}: relation_names and node_type_names must be non-empty")
    return meta


def _read_features(path: Path, num_nodes: int, dim: int) -> np.ndarray:
    if not path.exists():
        raise LoadError(f"missing feature table: {path}")
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"{path}: unparseable feature value ({exc})") from exc
    if arr.shape != (num_nodes, dim):
        raise ValidationError(
            f"{path}: expected {num_nodes} x {dim} features, got {arr.shape[0]} x {arr.shape[1]}"
        )
    if not np.all(np.isfinite(arr)):
        row = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise ValidationError(f"{path}: non-finite feature at row {row + 1}")
    return np.ascontiguousarray(arr)


def _read_labels(path: Path, num_nodes: int):
    if not path.exists():
        raise LoadError(f"missing label table: {path}")
    text = path.read_text(encoding="utf-8").strip()
    labels = np.zeros(num_nodes, dtype=np.int64)
    mask = np.zeros(num_nodes, dtype=bool)
    seen = np.zeros(num_nodes, dtype=bool)
    if not text:
        return labels, mask
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split(",")
        if len(parts) != 2:
            raise ValidationError(f"{path}: row {lineno} must be 'node_id,label'")
        try:
            node_id, label = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise ValidationError(f"{path}: row {lineno} is not integer-valued") from exc
        if not 0 <= node_id < num_nodes:
            raise ValidationError(f"{path}: row {lineno} node id {node_id} out of range")
        if seen[node_id]:
            raise ValidationError(f"{path}: duplicate node id {node_id} at row {lineno}")
        seen[node_id] = True
        if label == UNLABELED:
            continue
        if label not in (0, 1):
            raise ValidationError(f"{path}: row {lineno} label must be -1, 0, or 1")
        labels[node_id] = label
        mask[node_id] = True
    return labels, mask


def _read_edges(path: Path, num_nodes: int, relation: str):
    if not path.exists():
        raise LoadError(f"missing edge list for relation '{relation}': {path}")
    text = path.read_text(encoding="utf-8").strip()
    if not text:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"{path}: unparseable edge row ({exc})") from exc
    if arr.shape[1] != 2:
        raise ValidationError(f"{path}: edge rows must be 'src,dst'")
    bad = (arr < 0) | (arr >= num_nodes)
    if np.any(bad):
        row = int(np.flatnonzero(bad.any(axis=1))[0])
        raise ValidationError(
            f"edge index out of range in relation '{relation}' at row {row + 1}: "
            f"{arr[row, 0]},{arr[row, 1]} (num_nodes={num_nodes})"
        )
    return arr[:, 0].copy(), arr[:, 1].copy()


def load_dataset(path) -> MultiRelationGraph:
    """Load a dataset directory into a validated MultiRelationGraph."""
    root = Path(path)
    if not root.is_dir():
        raise LoadError(f"dataset directory not found: {root}")
    meta = read_meta(root)
    num_nodes = int(meta["num_nodes"])
    dim = int(meta["feature_dim"])
    features = _read_features(root / "features.csv", num_nodes, dim)
    labels, mask = _read_labels(root / "labels.csv", num_nodes)
    relations = []
    for rel_name in meta["relation_names"]:
        src, dst = _read_edges(root / f"edges_{rel_name}.csv", num_nodes, rel_name)
        relations.append(RelationAdjacency.from_pairs(num_nodes, src, dst))
    graph = MultiRelationGraph(
        num_nodes=num_nodes,
        num_relations=len(relations),
        relations=relations,
        features=features,
        labels=labels,
        label_mask=mask,
        node_type_names=list(meta["node_type_names"]),
        relation_names=list(meta["relation_names"]),
    )
    graph.validate()
    for name, count in graph.edge_counts().items():
        logger.info("loaded relation '%s': %d undirected edges", name, count)
    return graph


def save_dataset(
    graph: MultiRelationGraph,
    path,
    *,
    name: str | None = None,
    type_descriptions: dict | None = None,
    relation_descriptions: dict | None = None,
) -> None:
    """Write a graph as a dataset directory; byte-deterministic for a fixed graph."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "num_nodes": int(graph.num_nodes),
        "feature_dim": int(graph.feature_dim),
        "relation_names": list(graph.relation_names),
        "node_type_names": list(graph.node_type_names),
        "label_values": {"benign": 0, "fraud": 1, "unlabeled": UNLABELED},
    }
    if name:
        meta["name"] = name
    if type_descriptions:
        meta["type_descriptions"] = dict(type_descriptions)
    if relation_descriptions:
        meta["relation_descriptions"] = dict(relation_descriptions)
    (root / "meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    with open(root / "features.csv", "w", encoding="utf-8") as f:
        for row in graph.features:
            f.write(",".join(repr(float(v)) for v in row))
            f.write("\n")

    with open(root / "labels.csv", "w", encoding="utf-8") as f:
        for i in range(graph.num_nodes):
            label = int(graph.labels[i]) if graph.label_mask[i] else UNLABELED
            f.write(f"{i},{label}\n")

    for rel_name, rel in zip(graph.relation_names, graph.relations):
        src = np.repeat(np.arange(graph.num_nodes, dtype=np.int64), rel.degrees())
        keep = src < rel.neighbors
        pairs = np.column_stack([src[keep], rel.neighbors[keep]])
        with open(root / f"edges_{rel_name}.csv", "w", encoding="utf-8") as f:
            for i, j in pairs:
                f.write(f"{i},{j}\n")


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def make_split(
    graph: MultiRelationGraph, train_ratio: float, val_ratio: float, seed: int
) -> SplitAssignment:
    """Class-stratified train/val/test split over the labeled nodes.

    Each split's class counts track the global class proportions to within
    one node per class; the same seed always reproduces the same assignment.
    """
    if train_ratio <= 0 or val_ratio <= 0:
        raise ValidationError("train_ratio and val_ratio must be positive")
    if train_ratio + val_ratio >= 1.0:
        raise ValidationError(
            f"train_ratio + val_ratio must be < 1, got {train_ratio} + {val_ratio}"
        )
    labeled = graph.labeled_ids()
    if labeled.size == 0:
        raise ValidationError("make_split: graph has no labeled nodes")

    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    parts = {"train": [], "val": [], "test": []}
    for cls in (0, 1):
        ids = labeled[graph.labels[labeled] == cls]
        if ids.size == 0:
            continue
        if ids.size < 3:
            raise ValidationError(
                f"class {cls} has only {ids.size} labeled nodes, fewer than the 3 splits; "
                "use a larger training ratio or a dataset with more labeled nodes"
            )
        shuffled = rng.permutation(ids)
        n_train = max(1, round(train_ratio * ids.size))
        n_train = min(n_train, ids.size - 2)
        n_val = max(1, round(val_ratio * ids.size))
        n_val = min(n_val, ids.size - n_train - 1)
        parts["train"].append(shuffled[:n_train])
        parts["val"].append(shuffled[n_train : n_train + n_val])
        parts["test"].append(shuffled[n_train + n_val :])

    return SplitAssignment(
        train_ids=np.sort(np.concatenate(parts["train"])),
        val_ids=np.sort(np.concatenate(parts["val"])),
        test_ids=np.sort(np.concatenate(parts["test"])),
        seed=int(seed),
        train_ratio=float(train_ratio),
        val_ratio=float(val_ratio),
    )


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


def generate_synthetic(spec: SyntheticSpec) -> MultiRelationGraph:
    """Planted-signal fraud graph: class-conditional Gaussian features plus
    per-relation stub wiring where each stub picks a same-class endpoint with
    the relation's homophily probability."""
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed)]))
    n = spec.num_nodes

    labels = (rng.random(n) < spec.fraud_ratio).astype(np.int64)
    n_fraud = int(labels.sum())
    if n_fraud == 0 or n_fraud == n:
        raise ValidationError(
            f"synthetic draw produced a single class ({n_fraud} fraud of {n}); "
            "adjust seed, num_nodes, or fraud_ratio"
        )
    class_ids = {0: np.flatnonzero(labels == 0), 1: np.flatnonzero(labels == 1)}
    min_class = min(class_ids[0].size, class_ids[1].size)
    for r, deg in enumerate(spec.avg_degree):
        if deg >= min_class:
            raise ValidationError(
                f"relation {r}: avg_degree {deg} is infeasible for class size {min_class}"
            )

    features = rng.standard_normal((n, spec.feature_dim))
    features[labels == 1] += spec.feature_shift / np.sqrt(spec.feature_dim)

    relations = []
    for r in range(spec.num_relations):
        n_edges = int(round(n * spec.avg_degree[r] / 2.0))
        src = rng.integers(0, n, size=n_edges)
        same = rng.random(n_edges) < spec.homophily[r]
        target_cls = np.where(same, labels[src], 1 - labels[src])
        dst = np.empty(n_edges, dtype=np.int64)
        for cls in (0, 1):
            sel = target_cls == cls
            pool = class_ids[cls]
            dst[sel] = pool[rng.integers(0, pool.size, size=int(sel.sum()))]
        collision = np.flatnonzero(dst == src)
        while collision.size:
            for cls in (0, 1):
                sel = collision[target_cls[collision] == cls]
                pool = class_ids[cls]
                dst[sel] = pool[rng.integers(0, pool.size, size=sel.size)]
            collision = collision[dst[collision] == src[collision]]
        relations.append(RelationAdjacency.from_pairs(n, src, dst))

    graph = MultiRelationGraph(
        num_nodes=n,
        num_relations=spec.num_relations,
        relations=relations,
        features=np.ascontiguousarray(features),
        labels=labels,
        label_mask=np.ones(n, dtype=bool),
        node_type_names=[f"type_{t}" for t in range(spec.num_types)],
        relation_names=[f"rel_{r}" for r in range(spec.num_relations)],
    )
    graph.validate()
    return graph
