"""Layer-level examples, forward invariants, ablation identity, gradients."""

import math

import numpy as np
import pytest

from graphfraud import (
    DimensionError,
    FraudDetector,
    ModelConfig,
    ValidationError,
    adam_step,
    classify,
    cross_entropy_loss,
    feature_map,
    fuse,
    gradient_check,
    init_parameters,
    project_enhancer_embeddings,
    relation_enhance,
    type_enhance,
)
from graphfraud.graph import MultiRelationGraph, RelationAdjacency
from graphfraud.model import RelationAggregators, backbone_aggregate
from graphfraud.numerics import AdamConfig, leaky_relu
from tests.conftest import make_embeddings, make_graph, small_model_config, zero_all_params


class TestProjection:
    def test_zero_weights_give_zero_embeddings(self):
        raw = np.random.default_rng(0).normal(size=(3, 10))
        out, _ = project_enhancer_embeddings(
            raw, np.zeros((4, 10)), np.zeros((1, 4)), np.zeros((6, 4)), np.zeros((1, 6)), 0.01
        )
        np.testing.assert_array_equal(out, np.zeros((3, 6)))

    def test_bottleneck_shape(self):
        rng = np.random.default_rng(1)
        raw = rng.normal(size=(5, 32))
        out, (pre1, hidden) = project_enhancer_embeddings(
            raw, rng.normal(size=(8, 32)), np.zeros((1, 8)),
            rng.normal(size=(16, 8)), np.zeros((1, 16)), 0.01,
        )
        assert hidden.shape == (5, 8)
        assert out.shape == (5, 16)

    def test_default_provider_width_through_an_eight_wide_bottleneck(self):
        # 1536-dim raw provider vectors squeezed to 8 before widening to 64
        rng = np.random.default_rng(2)
        raw = rng.normal(size=(3, 1536))
        out, (_, hidden) = project_enhancer_embeddings(
            raw, rng.normal(size=(8, 1536)) * 0.01, np.zeros((1, 8)),
            rng.normal(size=(64, 8)) * 0.01, np.zeros((1, 64)), 0.01,
        )
        assert hidden.shape == (3, 8)
        assert out.shape == (3, 64)


class TestFeatureMap:
    def test_zero_parameters_give_zero(self):
        h, _ = feature_map(np.ones((3, 4)), np.zeros((2, 4)), np.zeros((1, 2)), 0.01)
        np.testing.assert_array_equal(h, np.zeros((3, 2)))

    def test_hand_computed_example(self):
        w = np.array([[1.0, -1.0], [0.5, 0.25]])
        b = np.array([[0.1, -0.2]])
        h, _ = feature_map(np.array([[2.0, 1.0]]), w, b, 0.01)
        np.testing.assert_allclose(h, [[1.1, 1.05]])

    def test_negative_preactivations_use_slope(self):
        h, _ = feature_map(np.array([[-2.0, 1.0]]), np.array([[1.5, 0.0]]), np.zeros((1, 1)), 0.01)
        assert h[0, 0] == pytest.approx(-0.03)


class TestTypeEnhance:
    def test_constant_gate_when_weights_zero(self):
        rng = np.random.default_rng(2)
        h = rng.normal(size=(4, 6))
        t = rng.normal(size=(3, 6))
        z, beta, _ = type_enhance(h, t, np.zeros((1, 6)), np.zeros((1, 1)))
        np.testing.assert_array_equal(beta, np.full((4, 3), 0.5))
        np.testing.assert_allclose(z, np.tile(0.5 * t.mean(axis=0), (4, 1)), atol=1e-15)

    def test_singleton_type_set(self):
        rng = np.random.default_rng(3)
        h = rng.normal(size=(5, 4))
        t = rng.normal(size=(1, 4))
        w = rng.normal(size=(1, 4))
        z, beta, _ = type_enhance(h, t, w, np.array([[0.3]]))
        np.testing.assert_allclose(z, beta * t[0], atol=1e-15)

    def test_gate_stays_inside_open_interval_on_random_sweep(self):
        rng = np.random.default_rng(4)
        h = rng.normal(size=(1000, 8))
        t = rng.normal(size=(5, 8))
        _, beta, _ = type_enhance(h, t, rng.normal(size=(1, 8)), np.array([[0.1]]))
        assert np.all((beta > 0.0) & (beta < 1.0))

    def test_width_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            type_enhance(np.zeros((2, 4)), np.zeros((3, 5)), np.zeros((1, 4)), np.zeros((1, 1)))


class TestRelationEnhance:
    def test_single_relation_attention_is_constant_one(self):
        rng = np.random.default_rng(5)
        h = rng.normal(size=(6, 4))
        g = rng.normal(size=(1, 4))
        m, delta, _ = relation_enhance(h, g, rng.normal(size=(4, 4)), 0.01)
        np.testing.assert_array_equal(delta, np.ones((6, 1, 4)))
        np.testing.assert_allclose(m, np.tile(g[0], (6, 1)), atol=1e-15)

    def test_identical_relation_rows_give_uniform_attention(self):
        rng = np.random.default_rng(6)
        h = rng.normal(size=(4, 3))
        g = np.tile(rng.normal(size=(1, 3)), (5, 1))
        _, delta, _ = relation_enhance(h, g, rng.normal(size=(3, 3)), 0.01)
        np.testing.assert_allclose(delta, np.full((4, 5, 3), 0.2), atol=1e-12)

    def test_attention_normalizes_over_relations_per_dimension(self):
        rng = np.random.default_rng(7)
        h = rng.normal(size=(50, 6))
        g = rng.normal(size=(4, 6))
        _, delta, _ = relation_enhance(h, g, rng.normal(size=(6, 6)), 0.01)
        np.testing.assert_allclose(delta.sum(axis=1), 1.0, atol=1e-9)


class TestFuse:
    def test_zero_weights_return_h_bitwise(self):
        rng = np.random.default_rng(8)
        h = rng.normal(size=(5, 4))
        z = rng.normal(size=(5, 4))
        m = rng.normal(size=(5, 4))
        out = fuse(h, z, m, 0.0, 0.0)
        assert out.tobytes() == h.tobytes()

    def test_unit_type_weight_adds_exactly_z(self):
        rng = np.random.default_rng(9)
        z = rng.normal(size=(5, 4))
        out = fuse(np.zeros((5, 4)), z, None, 1.0, 0.0)
        np.testing.assert_array_equal(out, z)
        h = rng.normal(size=(5, 4))
        np.testing.assert_allclose(fuse(h, z, None, 1.0, 0.0) - h, z, rtol=0, atol=1e-14)

    def test_derivative_wrt_type_weight_is_z(self):
        rng = np.random.default_rng(10)
        h = rng.normal(size=(5, 4))
        z = rng.normal(size=(5, 4))
        m = rng.normal(size=(5, 4))
        step = 1e-6
        numeric = (fuse(h, z, m, 0.3 + step, -0.7) - fuse(h, z, m, 0.3 - step, -0.7)) / (2 * step)
        np.testing.assert_allclose(numeric, z, atol=1e-9)


def triangle_graph(extra_isolated=True):
    n = 4 if extra_isolated else 3
    edges = [(0, 1), (0, 2), (1, 2)]
    rel = RelationAdjacency.from_pairs(n, [a for a, _ in edges], [b for _, b in edges])
    graph = MultiRelationGraph(
        num_nodes=n,
        num_relations=1,
        relations=[rel],
        features=np.zeros((n, 2)),
        labels=np.zeros(n, dtype=np.int64),
        label_mask=np.ones(n, dtype=bool),
        node_type_names=["t"],
        relation_names=["r"],
    )
    graph.validate()
    return graph


class TestBackboneAggregate:
    def test_zero_weights_disable_aggregation(self):
        graph = triangle_graph()
        rng = np.random.default_rng(11)
        fused = rng.normal(size=(4, 3))
        reps, _, _ = backbone_aggregate(
            fused, RelationAggregators(graph), [np.zeros((3, 3))], 0.01, 1
        )
        np.testing.assert_array_equal(reps[-1], leaky_relu(fused, 0.01))

    def test_triangle_with_identity_weight_doubles_shared_representation(self):
        graph = triangle_graph(extra_isolated=False)
        v = np.array([0.5, -0.25, 2.0])
        fused = np.tile(v, (3, 1))
        reps, pres, _ = backbone_aggregate(
            fused, RelationAggregators(graph), [np.eye(3)], 0.01, 1
        )
        np.testing.assert_allclose(pres[0], 2 * fused, atol=1e-15)
        np.testing.assert_allclose(reps[-1], leaky_relu(2 * fused, 0.01), atol=1e-15)

    def test_isolated_node_aggregates_zero(self):
        graph = triangle_graph(extra_isolated=True)
        rng = np.random.default_rng(12)
        fused = rng.normal(size=(4, 3))
        reps, pres, _ = backbone_aggregate(
            fused, RelationAggregators(graph), [rng.normal(size=(3, 3))], 0.01, 1
        )
        np.testing.assert_array_equal(pres[0][3], fused[3])
        np.testing.assert_array_equal(reps[-1][3], leaky_relu(fused[3], 0.01))


class TestClassify:
    def test_zero_parameters_give_even_odds(self):
        _, probs = classify(np.ones((4, 3)), np.zeros((2, 3)), np.zeros((1, 2)))
        np.testing.assert_array_equal(probs, np.full((4, 2), 0.5))

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(13)
        _, probs = classify(rng.normal(size=(9, 5)), rng.normal(size=(2, 5)), rng.normal(size=(1, 2)))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_argmax_invariant_under_constant_logit_shift(self):
        rng = np.random.default_rng(14)
        rep = rng.normal(size=(20, 4))
        w = rng.normal(size=(2, 4))
        logits, probs = classify(rep, w, np.zeros((1, 2)))
        _, shifted = classify(rep, w, np.full((1, 2), 11.5))
        np.testing.assert_array_equal(probs.argmax(axis=1), shifted.argmax(axis=1))


class TestForward:
    def test_all_zero_parameters_give_even_odds_and_ln2_loss(self, small_graph, small_embeddings):
        cfg = small_model_config(small_graph)
        model = FraudDetector(cfg, small_embeddings.raw_dim, init_seed=0)
        zero_all_params(model.store)
        batch = np.arange(20)
        trace = model.forward(small_graph, batch, small_embeddings)
        np.testing.assert_array_equal(trace.probs, np.full((20, 2), 0.5))
        loss, _ = cross_entropy_loss(trace.logits, small_graph.labels[batch])
        assert loss == pytest.approx(math.log(2.0), abs=1e-9)

    def test_repeated_forward_is_bitwise_identical(self, small_graph, small_embeddings):
        model = FraudDetector(small_model_config(small_graph), small_embeddings.raw_dim, init_seed=1)
        batch = np.arange(12)
        a = model.forward(small_graph, batch, small_embeddings)
        b = model.forward(small_graph, batch, small_embeddings)
        assert a.logits.tobytes() == b.logits.tobytes()
        assert a.probs.tobytes() == b.probs.tobytes()
        assert a.fused.tobytes() == b.fused.tobytes()

    def test_trace_invariants_hold_on_random_model(self, small_graph, small_embeddings):
        model = FraudDetector(small_model_config(small_graph), small_embeddings.raw_dim, init_seed=2)
        model.check_invariants = True
        trace = model.forward(small_graph, np.arange(30), small_embeddings)
        assert trace.delta.sum(axis=1) == pytest.approx(1.0, abs=1e-9)
        assert np.all((trace.beta > 0) & (trace.beta < 1))

    def test_projection_work_is_independent_of_batch_size(self, small_graph, small_embeddings):
        model = FraudDetector(small_model_config(small_graph), small_embeddings.raw_dim, init_seed=3)
        model.forward(small_graph, np.arange(2), small_embeddings)
        small = model.op_counts["projection_rows"]
        model.forward(small_graph, np.arange(40), small_embeddings)
        big = model.op_counts["projection_rows"] - small
        assert small == big == len(small_graph.node_type_names) + small_graph.num_relations

    def test_batch_id_validation(self, small_graph, small_embeddings):
        model = FraudDetector(small_model_config(small_graph), small_embeddings.raw_dim)
        with pytest.raises(ValidationError):
            model.forward(small_graph, [], small_embeddings)
        with pytest.raises(ValidationError):
            model.forward(small_graph, [0, 0], small_embeddings)
        with pytest.raises(ValidationError):
            model.forward(small_graph, [small_graph.num_nodes], small_embeddings)

    def test_embedding_count_mismatch_rejected(self, small_graph, tmp_path):
        bigger = make_graph(num_types=3, seed=5)
        wrong = make_embeddings(bigger, tmp_path)
        model = FraudDetector(small_model_config(small_graph), wrong.raw_dim)
        with pytest.raises(DimensionError):
            model.forward(small_graph, [0, 1], wrong)


class TestBackward:
    def test_zero_loss_gradient_gives_zero_parameter_gradients(self, small_graph, small_embeddings):
        model = FraudDetector(small_model_config(small_graph), small_embeddings.raw_dim, init_seed=4)
        trace = model.forward(small_graph, np.arange(10), small_embeddings)
        model.backward(trace, np.zeros_like(trace.logits), small_graph)
        for name, block in model.store.items():
            assert not np.any(block.grad), name

    def test_double_backward_without_forward_is_an_error(self, small_graph, small_embeddings):
        model = FraudDetector(small_model_config(small_graph), small_embeddings.raw_dim, init_seed=5)
        trace = model.forward(small_graph, np.arange(10), small_embeddings)
        model.backward(trace, np.zeros_like(trace.logits), small_graph)
        with pytest.raises(ValidationError, match="consumed"):
            model.backward(trace, np.zeros_like(trace.logits), small_graph)

    def test_stale_trace_after_optimizer_step_is_an_error(self, small_graph, small_embeddings):
        model = FraudDetector(small_model_config(small_graph), small_embeddings.raw_dim, init_seed=6)
        batch = np.arange(10)
        trace = model.forward(small_graph, batch, small_embeddings)
        loss, dlogits = cross_entropy_loss(trace.logits, small_graph.labels[batch])
        stale = model.forward(small_graph, batch, small_embeddings)
        model.backward(trace, dlogits, small_graph)
        adam_step(model.store, AdamConfig())
        with pytest.raises(ValidationError, match="changed"):
            model.backward(stale, dlogits, small_graph)

    def test_fusion_weight_gradient_is_inner_product_of_dF_and_z(self, small_graph, small_embeddings):
        cfg = small_model_config(small_graph, backbone="none")
        model = FraudDetector(cfg, small_embeddings.raw_dim, init_seed=7)
        batch = np.arange(14)
        trace = model.forward(small_graph, batch, small_embeddings)
        rng = np.random.default_rng(0)
        dlogits = rng.normal(size=trace.logits.shape)
        model.backward(trace, dlogits, small_graph)
        d_fused = dlogits @ model.store.value("classifier.weight")
        expected = np.sum(d_fused * trace.z)
        assert model.store["fusion.type_weight"].grad[0, 0] == pytest.approx(expected, rel=1e-12)


def _grad_check_setup(graph, embeddings, cfg, batch, seed=3):
    model = FraudDetector(cfg, embeddings.raw_dim, init_seed=seed)
    targets = graph.labels[batch]

    def loss_fn():
        trace = model.forward(graph, batch, embeddings)
        loss, _ = cross_entropy_loss(trace.logits, targets)
        return loss

    def grad_fn():
        trace = model.forward(graph, batch, embeddings)
        _, dlogits = cross_entropy_loss(trace.logits, targets)
        model.backward(trace, dlogits, graph)

    return model, loss_fn, grad_fn


class TestGradients:
    def test_full_model_without_backbone_matches_finite_differences(self, tmp_path):
        graph = make_graph(num_nodes=24, num_relations=2, feature_dim=5, seed=8)
        emb = make_embeddings(graph, tmp_path, raw_dim=16)
        cfg = small_model_config(graph, backbone="none")
        model, loss_fn, grad_fn = _grad_check_setup(graph, emb, cfg, np.arange(24))
        report = gradient_check(loss_fn, grad_fn, model.store, tolerance=1e-4, seed=5)
        assert report.passed, report.per_block

    def test_full_model_with_two_backbone_layers_matches_finite_differences(self, tmp_path):
        graph = make_graph(num_nodes=20, num_relations=2, feature_dim=4, seed=9,
                           avg_degree=2.0, fraud_ratio=0.3)
        emb = make_embeddings(graph, tmp_path, raw_dim=12)
        cfg = small_model_config(graph, backbone_layers=2)
        model, loss_fn, grad_fn = _grad_check_setup(graph, emb, cfg, np.arange(0, 20, 2))
        report = gradient_check(loss_fn, grad_fn, model.store, tolerance=1e-4, seed=6)
        assert report.passed, report.per_block

    def test_class_weighted_loss_gradients_also_match(self, tmp_path):
        graph = make_graph(num_nodes=18, num_relations=2, feature_dim=4, seed=10,
                           avg_degree=2.0, fraud_ratio=0.3)
        emb = make_embeddings(graph, tmp_path, raw_dim=12)
        cfg = small_model_config(graph)
        model = FraudDetector(cfg, emb.raw_dim, init_seed=11)
        batch = np.arange(18)
        targets = graph.labels[batch]
        weights = np.where(targets == 1, 3.0, 0.5)

        def loss_fn():
            trace = model.forward(graph, batch, emb)
            loss, _ = cross_entropy_loss(trace.logits, targets, weights)
            return loss

        def grad_fn():
            trace = model.forward(graph, batch, emb)
            _, dlogits = cross_entropy_loss(trace.logits, targets, weights)
            model.backward(trace, dlogits, graph)

        report = gradient_check(loss_fn, grad_fn, model.store, tolerance=1e-4, seed=7)
        assert report.passed, report.per_block


class TestAblationIdentity:
    def test_frozen_zero_fusion_weights_match_disabled_enhancers_bitwise(
        self, small_graph, small_embeddings
    ):
        batch = np.arange(25)
        enabled_cfg = small_model_config(small_graph)
        disabled_cfg = small_model_config(
            small_graph, use_type_enhancer=False, use_relation_enhancer=False
        )

        enabled = FraudDetector(enabled_cfg, small_embeddings.raw_dim, init_seed=42)
        enabled.store["fusion.type_weight"].value[...] = 0.0
        enabled.store["fusion.relation_weight"].value[...] = 0.0
        enabled.store["fusion.type_weight"].frozen = True
        enabled.store["fusion.relation_weight"].frozen = True
        disabled = FraudDetector(disabled_cfg, small_embeddings.raw_dim, init_seed=42)

        t_on = enabled.forward(small_graph, batch, small_embeddings)
        t_off = disabled.forward(small_graph, batch, small_embeddings)
        assert t_on.fused.tobytes() == t_off.fused.tobytes()
        assert t_on.logits.tobytes() == t_off.logits.tobytes()
        assert t_on.probs.tobytes() == t_off.probs.tobytes()

    @pytest.mark.parametrize("keep", ["type", "relation"])
    def test_single_enhancer_variants_match_their_removed_twin(
        self, keep, small_graph, small_embeddings
    ):
        batch = np.arange(15)
        full = FraudDetector(small_model_config(small_graph), small_embeddings.raw_dim,
                             init_seed=8)
        if keep == "type":
            full.store["fusion.relation_weight"].value[...] = 0.0
            variant_cfg = small_model_config(small_graph, use_relation_enhancer=False)
        else:
            full.store["fusion.type_weight"].value[...] = 0.0
            variant_cfg = small_model_config(small_graph, use_type_enhancer=False)
        variant = FraudDetector(variant_cfg, small_embeddings.raw_dim, init_seed=8)
        t_full = full.forward(small_graph, batch, small_embeddings)
        t_var = variant.forward(small_graph, batch, small_embeddings)
        assert t_full.logits.tobytes() == t_var.logits.tobytes()

    def test_shared_blocks_initialize_identically_across_configs(self, small_graph, small_embeddings):
        full = init_parameters(small_model_config(small_graph), small_embeddings.raw_dim, seed=3)
        bare = init_parameters(
            small_model_config(small_graph, use_type_enhancer=False, use_relation_enhancer=False),
            small_embeddings.raw_dim,
            seed=3,
        )
        for name in bare.names():
            np.testing.assert_array_equal(bare.value(name), full.value(name))


class TestModelConfig:
    def test_bad_values_rejected(self):
        with pytest.raises(ValidationError):
            ModelConfig(input_dim=0, num_types=1, num_relations=1)
        with pytest.raises(ValidationError):
            ModelConfig(input_dim=2, num_types=1, num_relations=1, backbone="mystery")

    def test_bottleneck_wider_than_raw_dim_rejected(self):
        cfg = ModelConfig(input_dim=2, num_types=1, num_relations=1, type_bottleneck=64)
        with pytest.raises(ValidationError, match="bottleneck"):
            init_parameters(cfg, raw_dim=8)
