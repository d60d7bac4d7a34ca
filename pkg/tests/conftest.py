"""Shared fixtures: small synthetic graphs, pseudo embeddings, dataset dirs."""

from __future__ import annotations

import pytest

from graphfraud import (
    EmbeddingCache,
    ModelConfig,
    PseudoEmbeddingProvider,
    SyntheticSpec,
    build_relation_prompt,
    build_type_prompt,
    collect_embeddings,
    generate_synthetic,
)


def make_graph(
    num_nodes=60,
    num_relations=2,
    feature_dim=6,
    fraud_ratio=0.25,
    homophily=0.8,
    avg_degree=4.0,
    seed=11,
    num_types=2,
):
    spec = SyntheticSpec(
        num_nodes=num_nodes,
        num_relations=num_relations,
        feature_dim=feature_dim,
        fraud_ratio=fraud_ratio,
        homophily=homophily,
        feature_shift=0.5,
        avg_degree=avg_degree,
        seed=seed,
        num_types=num_types,
    )
    return generate_synthetic(spec)


def make_embeddings(graph, tmp_path, raw_dim=24, seed=0):
    provider = PseudoEmbeddingProvider(dim=raw_dim, seed=seed)
    cache = EmbeddingCache(tmp_path / "emb-cache.ndjson")
    type_prompts = [build_type_prompt(t) for t in graph.node_type_names]
    rel_prompts = [build_relation_prompt(r) for r in graph.relation_names]
    return collect_embeddings(type_prompts, rel_prompts, provider, cache)


def small_model_config(graph, **overrides):
    base = dict(
        input_dim=graph.feature_dim,
        num_types=len(graph.node_type_names),
        num_relations=graph.num_relations,
        hidden_dim=8,
        type_bottleneck=4,
        relation_bottleneck=6,
        backbone="relation-mean",
        backbone_layers=1,
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def small_graph():
    return make_graph()


@pytest.fixture
def small_embeddings(small_graph, tmp_path):
    return make_embeddings(small_graph, tmp_path)


def zero_all_params(store):
    for _, block in store.items():
        block.value[...] = 0.0
    store.version += 1
