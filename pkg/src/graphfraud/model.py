"""The fraud-detection network: feature mapper, type-level and relation-level
semantic enhancers, learned fusion, an optional relation-mean graph backbone,
and a two-class softmax head, with explicit forward and backward passes.

Shapes (S = number of nodes computed this pass, U = hidden width):

* feature map: h = LeakyReLU(X @ W.T + b), h in R^{S x U};
* type path: raw type vectors -> two-layer MLP (bottleneck ``type_bottleneck``)
  -> t in R^{K_t x U}; scalar gate beta[i, n] = sigmoid(w . (h[i] + t[n]) + b);
  z[i] = mean_n beta[i, n] * t[n];
* relation path: raw relation vectors -> MLP (bottleneck
  ``relation_bottleneck``) -> g in R^{R x U}; per-dimension attention
  delta = softmax over relations of LeakyReLU((h[i] + g[r]) @ W.T);
  m[i] = sum_r delta[i, r] * g[r];
* fusion: F = h + w_tp * z + w_re * m with learnable scalars;
* backbone (optional): repeat ``backbone_layers`` times
  rep = LeakyReLU(rep + (1/R) * sum_r mean_r(rep) @ W_r.T) where mean_r is the
  neighbor mean under relation r (zero vector for isolated nodes);
* head: logits = rep @ W.T + b, probabilities via row softmax.

When the backbone is enabled a forward pass computes representations for the
whole graph (neighbor representations must be current, not stale), and the
batch only selects which rows reach the classifier and the loss.
"""

from __future__ import annotations

import hashlib
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .enhancer import EmbeddingSet
from .errors import DimensionError, NumericError, ValidationError
from .graph import MultiRelationGraph
from .numerics import (
    ParameterStore,
    as_matrix,
    leaky_relu,
    leaky_relu_grad,
    linear_forward,
    sigmoid,
    softmax_axis,
    softmax_rows,
)

BACKBONE_CHOICES = ("none", "relation-mean")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    num_types: int
    num_relations: int
    hidden_dim: int = 64
    type_bottleneck: int = 8
    relation_bottleneck: int = 16
    leaky_slope: float = 0.01
    backbone: str = "relation-mean"
    backbone_layers: int = 1
    use_type_enhancer: bool = True
    use_relation_enhancer: bool = True

    def __post_init__(self):
        for name in ("input_dim", "num_types", "num_relations", "hidden_dim",
                     "type_bottleneck", "relation_bottleneck", "backbone_layers"):
            if getattr(self, name) < 1:
                raise ValidationError(f"ModelConfig.{name} must be >= 1")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValidationError("leaky_slope must lie in (0, 1)")
        if self.backbone not in BACKBONE_CHOICES:
            raise ValidationError(
                f"backbone must be one of {BACKBONE_CHOICES}, got '{self.backbone}'"
            )


def _block_rng(seed: int, name: str) -> np.random.Generator:
    # Per-name streams: shared blocks initialize identically no matter which
    # optional blocks a configuration adds or removes.
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    entropy = np.random.SeedSequence([int(seed), int.from_bytes(digest[:8], "big")])
    return np.random.default_rng(entropy)


def _xavier(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-bound, bound, size=(out_dim, in_dim))


def init_parameters(config: ModelConfig, raw_dim: int, seed: int = 0) -> ParameterStore:
    """Fresh parameter blocks: Xavier-uniform matrices, zero biases, fusion
    scalars at 1.0. Block creation order is the checkpoint order."""
    active = []
    if config.use_type_enhancer:
        active.append(config.type_bottleneck)
    if config.use_relation_enhancer:
        active.append(config.relation_bottleneck)
    if active and raw_dim < max(active):
        raise ValidationError(
            f"bottleneck widths {active} must not exceed the raw embedding dim {raw_dim}"
        )
    store = ParameterStore()

    def matrix(name: str, out_dim: int, in_dim: int) -> None:
        store.add(name, _xavier(_block_rng(seed, name), out_dim, in_dim))

    def zeros(name: str, cols: int) -> None:
        store.add(name, np.zeros((1, cols)))

    matrix("feature_map.weight", config.hidden_dim, config.input_dim)
    zeros("feature_map.bias", config.hidden_dim)
    if config.use_type_enhancer:
        matrix("type_mlp.w1", config.type_bottleneck, raw_dim)
        zeros("type_mlp.b1", config.type_bottleneck)
        matrix("type_mlp.w2", config.hidden_dim, config.type_bottleneck)
        zeros("type_mlp.b2", config.hidden_dim)
        matrix("type_gate.weight", 1, config.hidden_dim)
        zeros("type_gate.bias", 1)
        store.add("fusion.type_weight", np.array([[1.0]]))
    if config.use_relation_enhancer:
        matrix("relation_mlp.w1", config.relation_bottleneck, raw_dim)
        zeros("relation_mlp.b1", config.relation_bottleneck)
        matrix("relation_mlp.w2", config.hidden_dim, config.relation_bottleneck)
        zeros("relation_mlp.b2", config.hidden_dim)
        matrix("relation_attention.weight", config.hidden_dim, config.hidden_dim)
        store.add("fusion.relation_weight", np.array([[1.0]]))
    if config.backbone != "none":
        for r in range(config.num_relations):
            matrix(f"backbone.agg_{r}", config.hidden_dim, config.hidden_dim)
    matrix("classifier.weight", 2, config.hidden_dim)
    zeros("classifier.bias", 2)
    return store


# ---------------------------------------------------------------------------
# Layer operations
# ---------------------------------------------------------------------------


def project_enhancer_embeddings(raw, w1, b1, w2, b2, slope: float):
    """Two-layer MLP raw -> bottleneck -> hidden with LeakyReLU in between.

    Returns the projected rows plus the intermediates the backward pass needs.
    """
    raw = as_matrix(raw, "raw embeddings")
    pre1 = linear_forward(raw, w1, b1)
    hidden = leaky_relu(pre1, slope)
    out = linear_forward(hidden, w2, b2)
    return out, (pre1, hidden)


def feature_map(x, weight, bias, slope: float):
    """h = LeakyReLU(W x + b) applied row-wise."""
    pre = linear_forward(x, weight, bias)
    return leaky_relu(pre, slope), pre


def type_enhance(h, type_emb, gate_weight, gate_bias):
    """Scalar gate per (node, type) and the gated mean of type embeddings.

    beta[i, n] = sigmoid(w . (h[i] + t[n]) + b);  z[i] = (1/K) sum_n beta[i, n] t[n].
    """
    h = as_matrix(h, "h")
    t = as_matrix(type_emb, "type embeddings")
    if t.shape[0] < 1:
        raise ValidationError("type_enhance requires at least one node type")
    if t.shape[1] != h.shape[1]:
        raise DimensionError(
            f"type embeddings have width {t.shape[1]}, node representations {h.shape[1]}"
        )
    w = as_matrix(gate_weight, "gate weight")
    b = float(as_matrix(gate_bias, "gate bias")[0, 0])
    gate_logits = (h @ w.T) + (t @ w.T).T + b  # separable: [S,1] + [1,K]
    beta = sigmoid(gate_logits)
    z = (beta @ t) / t.shape[0]
    return z, beta, gate_logits


def relation_enhance(h, rel_emb, att_weight, slope: float):
    """Per-dimension attention over relations and the attended mixture.

    delta[:, r, :] = softmax over r of LeakyReLU((h[i] + g[r]) @ W.T), taken
    independently for every embedding dimension; m[i] = sum_r delta[i, r] * g[r].
    """
    h = as_matrix(h, "h")
    g = as_matrix(rel_emb, "relation embeddings")
    if g.shape[0] < 1:
        raise ValidationError("relation_enhance requires at least one relation")
    if g.shape[1] != h.shape[1]:
        raise DimensionError(
            f"relation embeddings have width {g.shape[1]}, node representations {h.shape[1]}"
        )
    w = as_matrix(att_weight, "attention weight")
    hw = h @ w.T
    gw = g @ w.T
    pre_alpha = hw[:, None, :] + gw[None, :, :]  # [S, R, U]
    alpha = leaky_relu(pre_alpha, slope)
    delta = softmax_axis(alpha, axis=1)
    m = np.einsum("srd,rd->sd", delta, g)
    return m, delta, pre_alpha


def fuse(h, z, m, type_weight: float, relation_weight: float) -> np.ndarray:
    """F = h + w_tp * z + w_re * m.

    A weight of exactly zero contributes nothing at all, so freezing a fusion
    weight at zero is bitwise identical to removing that enhancer.
    """
    out = h.copy()
    if z is not None and type_weight != 0.0:
        out += type_weight * z
    if m is not None and relation_weight != 0.0:
        out += relation_weight * m
    return out


class RelationAggregators:
    """Sparse neighbor-mean operators per relation, plus their transposes.

    Rows of isolated nodes are all-zero, so their aggregate is the zero vector.
    """

    def __init__(self, graph: MultiRelationGraph) -> None:
        n = graph.num_nodes
        self._mean = []
        self._mean_t = []
        for rel in graph.relations:
            deg = rel.degrees()
            inv = np.zeros(n, dtype=np.float64)
            nz = deg > 0
            inv[nz] = 1.0 / deg[nz]
            data = np.repeat(inv, deg)
            mat = sp.csr_matrix(
                (data, rel.neighbors, rel.offsets), shape=(n, n)
            )
            self._mean.append(mat)
            self._mean_t.append(mat.T.tocsr())

    def __len__(self) -> int:
        return len(self._mean)

    def mean(self, r: int, rep: np.ndarray) -> np.ndarray:
        return self._mean[r] @ rep

    def mean_transpose(self, r: int, grad: np.ndarray) -> np.ndarray:
        return self._mean_t[r] @ grad


def backbone_aggregate(fused, aggregators: RelationAggregators, agg_weights, slope: float,
                       layers: int):
    """Relation-mean aggregation stack over the full fused representations.

    Each layer computes LeakyReLU(rep + (1/R) sum_r mean_r(rep) @ W_r.T);
    returns all per-layer representations, pre-activations, and neighbor means.
    """
    num_rel = len(agg_weights)
    reps = [np.asarray(fused, dtype=np.float64)]
    pres = []
    neigh = []
    for _ in range(layers):
        current = reps[-1]
        a_list = [aggregators.mean(r, current) for r in range(num_rel)]
        pre = current.copy()
        for r in range(num_rel):
            pre += (a_list[r] @ agg_weights[r].T) / num_rel
        pres.append(pre)
        neigh.append(a_list)
        reps.append(leaky_relu(pre, slope))
    return reps, pres, neigh


def classify(rep, weight, bias):
    """Two-class head: logits plus row-softmax probabilities."""
    logits = linear_forward(rep, weight, bias)
    return logits, softmax_rows(logits)


# ---------------------------------------------------------------------------
# Forward trace and the full model
# ---------------------------------------------------------------------------


@dataclass
class ForwardTrace:
    """Every intermediate the backward pass needs, for one forward call.

    Arrays cover the computed node set: the batch itself without a backbone,
    the whole graph with one. ``batch_rows`` indexes the batch inside it.
    """

    batch_ids: np.ndarray
    batch_rows: np.ndarray
    x: np.ndarray
    pre_h: np.ndarray
    h: np.ndarray
    type_raw: np.ndarray | None
    type_proj: np.ndarray | None
    type_mlp_cache: tuple | None
    gate_logits: np.ndarray | None
    beta: np.ndarray | None
    z: np.ndarray | None
    rel_raw: np.ndarray | None
    rel_proj: np.ndarray | None
    rel_mlp_cache: tuple | None
    pre_alpha: np.ndarray | None
    delta: np.ndarray | None
    m: np.ndarray | None
    fused: np.ndarray
    backbone_reps: list
    backbone_pre: list
    backbone_neigh: list
    logits: np.ndarray
    probs: np.ndarray
    param_version: int
    consumed: bool = False

    @property
    def final_rep(self) -> np.ndarray:
        return self.backbone_reps[-1] if self.backbone_reps else self.fused


class FraudDetector:
    """Forward/backward composition of the mapper, enhancers, fusion,
    backbone, and classifier over one ParameterStore."""

    def __init__(
        self,
        config: ModelConfig,
        raw_embedding_dim: int,
        *,
        store: ParameterStore | None = None,
        init_seed: int = 0,
    ) -> None:
        self.config = config
        self.raw_dim = int(raw_embedding_dim)
        self.store = store if store is not None else init_parameters(config, self.raw_dim, init_seed)
        self.check_invariants = False
        self.op_counts = {"forward_calls": 0, "projection_rows": 0}
        self._aggregator_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()

    # -- helpers ------------------------------------------------------------

    def _aggregators(self, graph: MultiRelationGraph) -> RelationAggregators:
        agg = self._aggregator_cache.get(graph)
        if agg is None:
            agg = RelationAggregators(graph)
            self._aggregator_cache[graph] = agg
        return agg

    def _fusion_weights(self) -> tuple[float, float]:
        w_tp = (
            float(self.store.value("fusion.type_weight")[0, 0])
            if self.config.use_type_enhancer
            else 0.0
        )
        w_re = (
            float(self.store.value("fusion.relation_weight")[0, 0])
            if self.config.use_relation_enhancer
            else 0.0
        )
        return w_tp, w_re

    # -- forward ------------------------------------------------------------

    def forward(
        self, graph: MultiRelationGraph, batch_ids, embeddings: EmbeddingSet
    ) -> ForwardTrace:
        cfg = self.config
        p = self.store
        slope = cfg.leaky_slope

        batch_ids = np.asarray(batch_ids, dtype=np.int64).reshape(-1)
        if batch_ids.size == 0:
            raise ValidationError("forward: empty batch")
        if batch_ids.min() < 0 or batch_ids.max() >= graph.num_nodes:
            raise ValidationError("forward: batch ids out of range")
        if np.unique(batch_ids).size != batch_ids.size:
            raise ValidationError("forward: batch ids must be unique")
        if graph.num_relations != cfg.num_relations:
            raise DimensionError(
                f"graph has {graph.num_relations} relations, config expects {cfg.num_relations}"
            )
        if graph.feature_dim != cfg.input_dim:
            raise DimensionError(
                f"graph features have dim {graph.feature_dim}, config expects {cfg.input_dim}"
            )

        full = cfg.backbone != "none"
        if full:
            rows = batch_ids
            x = graph.features
        else:
            rows = np.arange(batch_ids.size, dtype=np.int64)
            x = graph.features[batch_ids]

        h, pre_h = feature_map(
            x, p.value("feature_map.weight"), p.value("feature_map.bias"), slope
        )

        type_raw = type_proj = type_cache = gate_logits = beta = z = None
        if cfg.use_type_enhancer:
            type_raw = embeddings.type_vectors
            if type_raw.shape[0] != cfg.num_types:
                raise DimensionError(
                    f"{type_raw.shape[0]} type embeddings but config expects {cfg.num_types}"
                )
            if type_raw.shape[1] != self.raw_dim:
                raise DimensionError(
                    f"type embeddings have raw dim {type_raw.shape[1]}, model expects {self.raw_dim}"
                )
            type_proj, type_cache = project_enhancer_embeddings(
                type_raw,
                p.value("type_mlp.w1"), p.value("type_mlp.b1"),
                p.value("type_mlp.w2"), p.value("type_mlp.b2"),
                slope,
            )
            z, beta, gate_logits = type_enhance(
                h, type_proj, p.value("type_gate.weight"), p.value("type_gate.bias")
            )
            self.op_counts["projection_rows"] += type_raw.shape[0]

        rel_raw = rel_proj = rel_cache = pre_alpha = delta = m = None
        if cfg.use_relation_enhancer:
            rel_raw = embeddings.relation_vectors
            if rel_raw.shape[0] != cfg.num_relations:
                raise DimensionError(
                    f"{rel_raw.shape[0]} relation embeddings but config expects {cfg.num_relations}"
                )
            if rel_raw.shape[1] != self.raw_dim:
                raise DimensionError(
                    f"relation embeddings have raw dim {rel_raw.shape[1]}, model expects {self.raw_dim}"
                )
            rel_proj, rel_cache = project_enhancer_embeddings(
                rel_raw,
                p.value("relation_mlp.w1"), p.value("relation_mlp.b1"),
                p.value("relation_mlp.w2"), p.value("relation_mlp.b2"),
                slope,
            )
            m, delta, pre_alpha = relation_enhance(
                h, rel_proj, p.value("relation_attention.weight"), slope
            )
            self.op_counts["projection_rows"] += rel_raw.shape[0]

        w_tp, w_re = self._fusion_weights()
        fused = fuse(h, z, m, w_tp, w_re)

        if full:
            agg_weights = [p.value(f"backbone.agg_{r}") for r in range(cfg.num_relations)]
            reps, pres, neigh = backbone_aggregate(
                fused, self._aggregators(graph), agg_weights, slope, cfg.backbone_layers
            )
        else:
            reps, pres, neigh = [], [], []

        final_rep = reps[-1] if reps else fused
        logits, probs = classify(
            final_rep[rows], p.value("classifier.weight"), p.value("classifier.bias")
        )
        self.op_counts["forward_calls"] += 1

        trace = ForwardTrace(
            batch_ids=batch_ids,
            batch_rows=rows,
            x=x,
            pre_h=pre_h,
            h=h,
            type_raw=type_raw,
            type_proj=type_proj,
            type_mlp_cache=type_cache,
            gate_logits=gate_logits,
            beta=beta,
            z=z,
            rel_raw=rel_raw,
            rel_proj=rel_proj,
            rel_mlp_cache=rel_cache,
            pre_alpha=pre_alpha,
            delta=delta,
            m=m,
            fused=fused,
            backbone_reps=reps,
            backbone_pre=pres,
            backbone_neigh=neigh,
            logits=logits,
            probs=probs,
            param_version=p.version,
        )
        if self.check_invariants:
            self.validate_trace(trace)
        return trace

    def validate_trace(self, trace: ForwardTrace) -> None:
        """Raise NumericError on any violated forward-pass invariant."""
        if trace.delta is not None:
            worst = float(np.max(np.abs(trace.delta.sum(axis=1) - 1.0)))
            if worst > 1e-9:
                raise NumericError(f"relation attention rows deviate from 1 by {worst:.3e}")
        if trace.beta is not None:
            if not np.all((trace.beta > 0.0) & (trace.beta < 1.0)):
                raise NumericError("type gate values left the open interval (0, 1)")
        row_err = float(np.max(np.abs(trace.probs.sum(axis=1) - 1.0)))
        if row_err > 1e-12:
            raise NumericError(f"class probability rows deviate from 1 by {row_err:.3e}")

    # -- backward -----------------------------------------------------------

    def backward(self, trace: ForwardTrace, dlogits, graph: MultiRelationGraph) -> None:
        """Accumulate gradients for every block from the loss gradient."""
        cfg = self.config
        p = self.store
        slope = cfg.leaky_slope

        if trace.consumed:
            raise ValidationError(
                "backward: trace already consumed; run forward again before backward"
            )
        if trace.param_version != p.version:
            raise ValidationError("backward: parameters changed since this trace's forward")
        dlogits = as_matrix(dlogits, "dlogits")
        if dlogits.shape != trace.logits.shape:
            raise DimensionError(
                f"dlogits shape {dlogits.shape} does not match logits {trace.logits.shape}"
            )

        final_rep = trace.final_rep
        rep_batch = final_rep[trace.batch_rows]
        p["classifier.weight"].grad += dlogits.T @ rep_batch
        p["classifier.bias"].grad += dlogits.sum(axis=0, keepdims=True)
        d_rep = np.zeros_like(final_rep)
        d_rep[trace.batch_rows] = dlogits @ p.value("classifier.weight")

        if trace.backbone_reps:
            agg = self._aggregators(graph)
            num_rel = cfg.num_relations
            for layer in reversed(range(cfg.backbone_layers)):
                dpre = d_rep * leaky_relu_grad(trace.backbone_pre[layer], slope)
                d_prev = dpre.copy()
                for r in range(num_rel):
                    ds = dpre / num_rel
                    p[f"backbone.agg_{r}"].grad += ds.T @ trace.backbone_neigh[layer][r]
                    d_prev += agg.mean_transpose(r, ds @ p.value(f"backbone.agg_{r}"))
                d_rep = d_prev

        d_fused = d_rep
        dh = d_fused.copy()
        w_tp, w_re = self._fusion_weights()

        if cfg.use_relation_enhancer:
            p["fusion.relation_weight"].grad += np.sum(d_fused * trace.m)
            dm = w_re * d_fused
            g = trace.rel_proj
            delta = trace.delta
            d_delta = dm[:, None, :] * g[None, :, :]
            dg = np.einsum("srd,sd->rd", delta, dm)
            inner = np.sum(d_delta * delta, axis=1, keepdims=True)
            d_alpha = delta * (d_delta - inner)
            d_pre = d_alpha * leaky_relu_grad(trace.pre_alpha, slope)
            d_hw = d_pre.sum(axis=1)
            d_gw = d_pre.sum(axis=0)
            att = p.value("relation_attention.weight")
            p["relation_attention.weight"].grad += d_hw.T @ trace.h + d_gw.T @ g
            dh += d_hw @ att
            dg += d_gw @ att
            pre1, hidden = trace.rel_mlp_cache
            p["relation_mlp.w2"].grad += dg.T @ hidden
            p["relation_mlp.b2"].grad += dg.sum(axis=0, keepdims=True)
            d_hidden = dg @ p.value("relation_mlp.w2")
            d_pre1 = d_hidden * leaky_relu_grad(pre1, slope)
            p["relation_mlp.w1"].grad += d_pre1.T @ trace.rel_raw
            p["relation_mlp.b1"].grad += d_pre1.sum(axis=0, keepdims=True)

        if cfg.use_type_enhancer:
            p["fusion.type_weight"].grad += np.sum(d_fused * trace.z)
            dz = w_tp * d_fused
            t = trace.type_proj
            beta = trace.beta
            k = t.shape[0]
            d_beta = (dz @ t.T) / k
            dt = (beta.T @ dz) / k
            d_gate = d_beta * beta * (1.0 - beta)
            gate_w = p.value("type_gate.weight")
            row_sums = d_gate.sum(axis=1, keepdims=True)
            col_sums = d_gate.sum(axis=0, keepdims=True)
            p["type_gate.weight"].grad += row_sums.T @ trace.h + col_sums @ t
            p["type_gate.bias"].grad += d_gate.sum()
            dh += row_sums @ gate_w
            dt += col_sums.T @ gate_w
            pre1, hidden = trace.type_mlp_cache
            p["type_mlp.w2"].grad += dt.T @ hidden
            p["type_mlp.b2"].grad += dt.sum(axis=0, keepdims=True)
            d_hidden = dt @ p.value("type_mlp.w2")
            d_pre1 = d_hidden * leaky_relu_grad(pre1, slope)
            p["type_mlp.w1"].grad += d_pre1.T @ trace.type_raw
            p["type_mlp.b1"].grad += d_pre1.sum(axis=0, keepdims=True)

        d_pre_h = dh * leaky_relu_grad(trace.pre_h, slope)
        p["feature_map.weight"].grad += d_pre_h.T @ trace.x
        p["feature_map.bias"].grad += d_pre_h.sum(axis=0, keepdims=True)

        trace.consumed = True


def fused_representations(
    model: FraudDetector,
    graph: MultiRelationGraph,
    embeddings: EmbeddingSet,
    node_ids,
) -> np.ndarray:
    """Fused (pre-backbone) representation rows for the requested nodes."""
    node_ids = np.asarray(node_ids, dtype=np.int64).reshape(-1)
    trace = model.forward(graph, node_ids, embeddings)
    return trace.fused[trace.batch_rows]


def dump_fused_representations(
    model: FraudDetector,
    graph: MultiRelationGraph,
    embeddings: EmbeddingSet,
    path,
    node_ids=None,
) -> int:
    """Write (node_id, label, representation...) rows for labeled nodes as CSV.

    Returns the number of rows written.
    """
    if node_ids is None:
        node_ids = graph.labeled_ids()
    node_ids = np.asarray(node_ids, dtype=np.int64).reshape(-1)
    reps = fused_representations(model, graph, embeddings, node_ids)
    width = reps.shape[1]
    with open(path, "w", encoding="utf-8") as f:
        f.write("node_id,label," + ",".join(f"f{i}" for i in range(width)) + "\n")
        for node, row in zip(node_ids, reps):
            label = int(graph.labels[node]) if graph.label_mask[node] else -1
            f.write(f"{node},{label}," + ",".join(repr(float(v)) for v in row) + "\n")
    return int(node_ids.size)
