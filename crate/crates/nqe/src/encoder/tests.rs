use super::*;
use crate::autodiff::Tensor;
use crate::logic::{self, FuzzyVec, LogicKind};
use crate::query::{canonical_ast, compile, QueryType, StepProgram};
use crate::store::{EntityId, RelationId};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn tiny_config(dim: usize, ffn: usize) -> EncoderConfig {
    EncoderConfig {
        dim,
        layers: 1,
        heads: 1,
        ffn_dim: ffn,
        ..EncoderConfig::default()
    }
}

/// d=2, K=1, h=1 model with hand-set parameters, matching the frozen
/// spreadsheet evaluation below.
fn hand_model() -> ModelParams {
    let mut p = ModelParams::init(tiny_config(2, 2), 2, 1, 0).unwrap();
    p.entity_logits = Tensor::new(2, 2, vec![0.2, -0.4, 1.0, 0.5]);
    p.relation_logits = Tensor::new(1, 2, vec![0.3, -0.2]);
    p.mask_token = Tensor::col(&[0.1, -0.3]);
    let head = &mut p.layers[0].heads[0];
    head.wq_e = Tensor::new(2, 2, vec![0.5, -0.1, 0.2, 0.3]);
    head.wk_e = Tensor::new(2, 2, vec![0.1, 0.4, -0.2, 0.2]);
    head.wv_e = Tensor::new(2, 2, vec![0.3, 0.1, 0.0, -0.4]);
    head.wq_r = Tensor::new(2, 2, vec![-0.3, 0.2, 0.1, 0.5]);
    head.wk_r = Tensor::new(2, 2, vec![0.2, -0.1, 0.4, 0.1]);
    head.wv_r = Tensor::new(2, 2, vec![-0.1, 0.2, 0.3, 0.2]);
    let mut bq = Vec::new();
    let mut bk = Vec::new();
    let mut bv = Vec::new();
    for t in 0..NUM_EDGE_TYPES {
        let t = t as f64;
        bq.extend([0.01 * t, -0.01 * t]);
        bk.extend([0.02 * t, 0.01 * t]);
        bv.extend([-0.01 * t, 0.02 * t]);
    }
    p.edge_biases[0].q = Tensor::new(NUM_EDGE_TYPES, 2, bq);
    p.edge_biases[0].k = Tensor::new(NUM_EDGE_TYPES, 2, bk);
    p.edge_biases[0].v = Tensor::new(NUM_EDGE_TYPES, 2, bv);
    let layer = &mut p.layers[0];
    layer.ffn_w1 = Tensor::new(2, 2, vec![0.4, -0.2, 0.1, 0.3]);
    layer.ffn_b1 = Tensor::col(&[0.05, -0.05]);
    layer.ffn_w2 = Tensor::new(2, 2, vec![0.2, 0.1, -0.3, 0.4]);
    layer.ffn_b2 = Tensor::col(&[0.0, 0.1]);
    layer.ln1_gain = Tensor::col(&[1.1, 0.9]);
    layer.ln1_bias = Tensor::col(&[0.01, -0.01]);
    layer.ln2_gain = Tensor::col(&[1.0, 1.0]);
    layer.ln2_bias = Tensor::col(&[0.0, 0.0]);
    p.head_w1 = Tensor::new(2, 2, vec![0.3, -0.2, 0.1, 0.4]);
    p.head_b1 = Tensor::col(&[0.02, 0.03]);
    p.head_w2 = Tensor::new(2, 2, vec![0.5, 0.1, -0.1, 0.2]);
    p.head_b2 = Tensor::col(&[-0.02, 0.01]);
    p.head_ln_gain = Tensor::col(&[1.0, 1.2]);
    p.head_ln_bias = Tensor::col(&[0.05, 0.0]);
    p
}

fn triple_input() -> EncoderInput {
    EncoderInput {
        slots: vec![InputSlot::Entity(EntityId(0)), InputSlot::Mask],
        relations: vec![RelationId(0)],
    }
}

#[test]
fn hand_computed_forward_pass() {
    // frozen from an independent numpy evaluation of the same equations
    let expected = [0.7406775263206787, 0.23158346856338605];
    let out = project(&hand_model(), &triple_input()).unwrap();
    for (o, e) in out.values().iter().zip(expected) {
        assert!((o - e).abs() < 1e-12, "{o} vs {e}");
    }
}

#[test]
fn similarity_hand_case_and_degenerate() {
    // d=2, |E|=3, hand-set logits; frozen softmax values
    let mut p = ModelParams::init(tiny_config(2, 2), 3, 1, 0).unwrap();
    p.entity_logits = Tensor::new(3, 2, vec![0.2, -0.4, 1.0, 0.5, -0.3, 0.8]);
    let q = FuzzyVec::new(vec![0.6, 0.3]).unwrap();
    let probs = similarity(&p, &q).unwrap();
    let expected = [
        0.31216388105160103,
        0.37189336348266777,
        0.31594275546573114,
    ];
    for (p, e) in probs.iter().zip(expected) {
        assert!((p - e).abs() < 1e-12);
    }
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);

    // |E| = 1 collapses to probability 1
    let p1 = ModelParams::init(tiny_config(2, 2), 1, 1, 0).unwrap();
    let probs = similarity(&p1, &q).unwrap();
    assert_eq!(probs.len(), 1);
    assert!((probs[0] - 1.0).abs() < 1e-12);

    // identical embeddings get identical probabilities
    let mut p2 = ModelParams::init(tiny_config(2, 2), 3, 1, 0).unwrap();
    p2.entity_logits = Tensor::new(3, 2, vec![0.4, -0.1, 0.4, -0.1, 2.0, 0.3]);
    let probs = similarity(&p2, &q).unwrap();
    assert!((probs[0] - probs[1]).abs() < 1e-15);
}

#[test]
fn loss_hand_cases_and_errors() {
    // uniform scores over 4 entities: loss = ln 4 regardless of target
    let uniform = [0.25; 4];
    let l = loss(&uniform, EntityId(2), 0.1).unwrap();
    assert!((l - 4.0f64.ln()).abs() < 1e-12);

    // eps = 0.3, |E| = 3, hand value
    let l = loss(&[0.5, 0.3, 0.2], EntityId(0), 0.3).unwrap();
    assert!((l - 0.9072146339059671).abs() < 1e-12);

    // near-one-hot scores with vanishing smoothing: loss tends to zero
    let l = loss(&[1.0 - 2e-15, 1e-15, 1e-15], EntityId(0), 1e-12).unwrap();
    assert!(l < 1e-9, "{l}");

    assert!(loss(&[0.5, 0.5], EntityId(0), 0.0).is_err());
    assert!(loss(&[0.5, 0.5], EntityId(0), 1.0).is_err());
    assert!(loss(&[0.5, 0.5], EntityId(5), 0.1).is_err());
    assert!(loss(&[1.0], EntityId(0), 0.1).is_err());
}

fn random_model(seed: u64) -> ModelParams {
    let config = EncoderConfig {
        dim: 8,
        layers: 2,
        heads: 2,
        ffn_dim: 16,
        ..EncoderConfig::default()
    };
    ModelParams::init(config, 12, 6, seed).unwrap()
}

fn qualified_input() -> EncoderInput {
    EncoderInput {
        slots: vec![
            InputSlot::Entity(EntityId(1)),
            InputSlot::Mask,
            InputSlot::Entity(EntityId(3)),
            InputSlot::Entity(EntityId(7)),
        ],
        relations: vec![RelationId(0), RelationId(2), RelationId(4)],
    }
}

#[test]
fn attention_rows_sum_to_one_and_output_in_range() {
    let p = random_model(3);
    let (out, rows) = project_with_attention(&p, &qualified_input()).unwrap();
    assert!(!rows.is_empty());
    for row in rows {
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6, "attention row sums to {sum}");
    }
    for v in out.values() {
        assert!(*v > 0.0 && *v < 1.0, "output component {v} not in (0,1)");
    }
}

#[test]
fn qualifier_permutation_invariance() {
    let p = random_model(5);
    let input = qualified_input();
    let mut swapped = input.clone();
    // swap whole qualifier pairs: (a1, v1) <-> (a2, v2)
    swapped.slots.swap(2, 3);
    swapped.relations.swap(1, 2);
    let a = project(&p, &input).unwrap();
    let b = project(&p, &swapped).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-6, "diff {}", a.max_abs_diff(&b));
}

#[test]
fn register_inputs_enter_like_entities() {
    let p = random_model(7);
    let q = FuzzyVec::splat(0.4, 8).unwrap();
    let input = EncoderInput {
        slots: vec![InputSlot::Query(q), InputSlot::Mask],
        relations: vec![RelationId(1)],
    };
    let out = project(&p, &input).unwrap();
    assert_eq!(out.len(), 8);
}

#[test]
fn input_validation_errors() {
    let p = random_model(1);
    let no_mask = EncoderInput {
        slots: vec![
            InputSlot::Entity(EntityId(0)),
            InputSlot::Entity(EntityId(1)),
        ],
        relations: vec![RelationId(0)],
    };
    assert!(project(&p, &no_mask).is_err());

    let two_masks = EncoderInput {
        slots: vec![InputSlot::Mask, InputSlot::Mask],
        relations: vec![RelationId(0)],
    };
    assert!(project(&p, &two_masks).is_err());

    let bad_width = EncoderInput {
        slots: vec![
            InputSlot::Query(FuzzyVec::splat(0.5, 3).unwrap()),
            InputSlot::Mask,
        ],
        relations: vec![RelationId(0)],
    };
    assert!(project(&p, &bad_width).is_err());
}

fn mixed_programs() -> Vec<StepProgram> {
    let e = |i: u32| EntityId(i);
    let r = |i: u32| RelationId(i);
    let asts = vec![
        canonical_ast(QueryType::P1, &[e(0)], &[r(0)]).unwrap(),
        canonical_ast(QueryType::I2, &[e(1), e(2)], &[r(1), r(2)]).unwrap(),
        canonical_ast(QueryType::Pni, &[e(3), e(4)], &[r(0), r(3), r(1)]).unwrap(),
        canonical_ast(QueryType::Cp2, &[e(5), e(6), e(7)], &[r(2), r(4), r(5), r(3)]).unwrap(),
    ];
    asts.iter().map(|a| compile(a).unwrap()).collect()
}

#[test]
fn batched_execution_equals_sequential() {
    let p = random_model(11);
    let programs = mixed_programs();
    let refs: Vec<&StepProgram> = programs.iter().collect();
    let batched = run_step_program(&p, &refs, LogicKind::Product).unwrap();
    for (prog, b) in programs.iter().zip(&batched) {
        let single = run_step_program(&p, &[prog], LogicKind::Product).unwrap();
        assert!(b.target.max_abs_diff(&single[0].target) < 1e-6);
        for (br, sr) in b.registers.iter().zip(&single[0].registers) {
            assert!(br.max_abs_diff(sr) < 1e-6);
        }
    }
}

#[test]
fn tape_logic_matches_reference_operators() {
    let p = random_model(13);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for kind in [LogicKind::Product, LogicKind::Godel, LogicKind::Lukasiewicz] {
        for m in 2..=4 {
            let inputs: Vec<FuzzyVec> = (0..m)
                .map(|_| {
                    FuzzyVec::new((0..8).map(|_| rng.gen_range(0.0..=1.0)).collect()).unwrap()
                })
                .collect();
            let expect_conj = logic::conj(kind, &inputs).unwrap();
            let expect_disj = logic::disj(kind, &inputs).unwrap();
            let expect_neg = logic::neg(&inputs[0]);

            let mut fwd = Forward::new(&p, None);
            let vars: Vec<_> = inputs
                .iter()
                .map(|v| fwd.tape.constant(Tensor::col(v.values())))
                .collect();
            let c = fwd.logic_op(crate::query::LogicOp::And, &vars, kind);
            let d = fwd.logic_op(crate::query::LogicOp::Or, &vars, kind);
            let n = fwd.logic_op(crate::query::LogicOp::Not, &vars[..1], kind);
            let got_conj = FuzzyVec::new(fwd.tape.value(c).data.clone()).unwrap();
            let got_disj = FuzzyVec::new(fwd.tape.value(d).data.clone()).unwrap();
            let got_neg = FuzzyVec::new(fwd.tape.value(n).data.clone()).unwrap();
            assert!(got_conj.max_abs_diff(&expect_conj) < 1e-12);
            assert!(got_disj.max_abs_diff(&expect_disj) < 1e-12);
            assert!(got_neg.max_abs_diff(&expect_neg) < 1e-12);
        }
    }

    // logic-blind ablation replaces conj/disj with the arithmetic mean
    let mut blind = random_model(13);
    blind.config.ablation.logic_blind = true;
    let a = FuzzyVec::splat(0.5, 8).unwrap();
    let b = FuzzyVec::splat(0.4, 8).unwrap();
    let mut fwd = Forward::new(&blind, None);
    let va = fwd.tape.constant(Tensor::col(a.values()));
    let vb = fwd.tape.constant(Tensor::col(b.values()));
    let c = fwd.logic_op(crate::query::LogicOp::And, &[va, vb], LogicKind::Product);
    let got = fwd.tape.value(c).data.clone();
    assert!((got[0] - 0.45).abs() < 1e-12); // mean, not 0.2 = product
}

#[test]
fn gradients_symmetric_for_identical_rows() {
    let config = tiny_config(4, 8);
    let mut p = ModelParams::init(config, 4, 2, 0).unwrap();
    p.entity_logits = Tensor::zeros(4, 4);
    let ast = canonical_ast(QueryType::P1, &[EntityId(0)], &[RelationId(0)]).unwrap();
    let program = compile(&ast).unwrap();
    let (_, grads) = gradients(
        &p,
        &[&program],
        &[EntityId(1)],
        0.1,
        LogicKind::Product,
    )
    .unwrap();
    // entities 2 and 3 play identical roles (identical embeddings, both
    // non-target, not in the query): identical gradient rows
    let ent = &grads.0[0];
    for c in 0..4 {
        assert!((ent.at(2, c) - ent.at(3, c)).abs() < 1e-12);
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let config = EncoderConfig {
        dim: 8,
        layers: 1,
        heads: 1,
        ffn_dim: 16,
        ..EncoderConfig::default()
    };
    let params = ModelParams::init(config, 20, 8, 42).unwrap();
    let programs = mixed_programs();
    let refs: Vec<&StepProgram> = programs.iter().collect();
    let targets = vec![EntityId(1), EntityId(5), EntityId(9), EntityId(13)];
    let eps = 0.1;

    let (_, grads) = gradients(&params, &refs, &targets, eps, LogicKind::Product).unwrap();

    let loss_at = |p: &ModelParams| -> f64 {
        gradients(p, &refs, &targets, eps, LogicKind::Product).unwrap().0
    };

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tensor_sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.data.len()).collect();
    let total: usize = tensor_sizes.iter().sum();
    let h = 1e-3;
    let mut checked = 0;
    let mut max_rel: f64 = 0.0;
    while checked < 500 {
        let flat = rng.gen_range(0..total);
        let (ti, offset) = {
            let mut acc = 0;
            let mut found = (0, 0);
            for (i, s) in tensor_sizes.iter().enumerate() {
                if flat < acc + s {
                    found = (i, flat - acc);
                    break;
                }
                acc += s;
            }
            found
        };
        let mut plus = params.clone();
        plus.tensors_mut()[ti].data[offset] += h;
        let mut minus = params.clone();
        minus.tensors_mut()[ti].data[offset] -= h;
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
        let analytic = grads.0[ti].data[offset];
        // central differences at h=1e-3 carry O(h^2) truncation (~1e-7
        // absolute); gradients below 1e-2 are held to that absolute bound,
        // larger ones to the 1e-4 relative bound
        let magnitude = analytic.abs().max(numeric.abs());
        if magnitude >= 1e-2 {
            let rel = (analytic - numeric).abs() / magnitude;
            max_rel = max_rel.max(rel);
            assert!(
                rel <= 1e-4,
                "tensor {ti} offset {offset}: analytic {analytic} vs numeric {numeric} (rel {rel})"
            );
        } else {
            assert!(
                (analytic - numeric).abs() <= 1e-6,
                "tensor {ti} offset {offset}: analytic {analytic} vs numeric {numeric}"
            );
        }
        checked += 1;
    }
    assert!(max_rel <= 1e-4, "max relative error {max_rel}");
}

#[test]
fn gradient_step_descends() {
    let params = random_model(21);
    let programs = mixed_programs();
    let refs: Vec<&StepProgram> = programs.iter().collect();
    let targets = vec![EntityId(0), EntityId(2), EntityId(4), EntityId(6)];
    let (before, grads) =
        gradients(&params, &refs, &targets, 0.1, LogicKind::Product).unwrap();
    let mut stepped = params.clone();
    let lr = 1e-3;
    for (t, g) in stepped.tensors_mut().into_iter().zip(&grads.0) {
        for (x, gx) in t.data.iter_mut().zip(&g.data) {
            *x -= lr * gx;
        }
    }
    let (after, _) = gradients(&stepped, &refs, &targets, 0.1, LogicKind::Product).unwrap();
    assert!(after < before, "loss did not descend: {before} -> {after}");
}

#[test]
fn unparalleled_single_type_batch_matches_batched_gradients() {
    let params = random_model(23);
    let ast1 = canonical_ast(QueryType::I2, &[EntityId(0), EntityId(1)], &[RelationId(0), RelationId(1)]).unwrap();
    let ast2 = canonical_ast(QueryType::I2, &[EntityId(2), EntityId(3)], &[RelationId(2), RelationId(3)]).unwrap();
    let p1 = compile(&ast1).unwrap();
    let p2 = compile(&ast2).unwrap();
    let targets = [EntityId(5), EntityId(7)];

    let (batch_loss, batch_grads) = gradients(
        &params,
        &[&p1, &p2],
        &targets,
        0.1,
        LogicKind::Product,
    )
    .unwrap();

    // per-query execution, averaged by hand
    let (l1, g1) = gradients(&params, &[&p1], &targets[..1], 0.1, LogicKind::Product).unwrap();
    let (l2, g2) = gradients(&params, &[&p2], &targets[1..], 0.1, LogicKind::Product).unwrap();
    assert!((batch_loss - (l1 + l2) / 2.0).abs() < 1e-12);
    for ((b, a), c) in batch_grads.0.iter().zip(&g1.0).zip(&g2.0) {
        for i in 0..b.data.len() {
            let seq = (a.data[i] + c.data[i]) / 2.0;
            assert!((b.data[i] - seq).abs() < 1e-9);
        }
    }
}

#[test]
fn ablation_switches_change_outputs() {
    let base = random_model(31);
    let input = qualified_input();
    let full = project(&base, &input).unwrap();

    let mut node_only = base.clone();
    node_only.config.ablation.node_h_only = true;
    let out = project(&node_only, &input).unwrap();
    assert!(out.max_abs_diff(&full) > 1e-6, "NodeH-only output unchanged");

    let mut edge_only = base.clone();
    edge_only.config.ablation.edge_h_only = true;
    let out = project(&edge_only, &input).unwrap();
    assert!(out.max_abs_diff(&full) > 1e-6, "EdgeH-only output unchanged");

    // logic-blind differs on a query with a logic node
    let ast = canonical_ast(
        QueryType::I2,
        &[EntityId(0), EntityId(1)],
        &[RelationId(0), RelationId(1)],
    )
    .unwrap();
    let program = compile(&ast).unwrap();
    let full_out = run_step_program(&base, &[&program], LogicKind::Product).unwrap();
    let mut blind = base.clone();
    blind.config.ablation.logic_blind = true;
    let blind_out = run_step_program(&blind, &[&program], LogicKind::Product).unwrap();
    assert!(full_out[0].target.max_abs_diff(&blind_out[0].target) > 1e-6);
}

#[test]
fn dropout_perturbs_training_forward_only() {
    let mut p = random_model(37);
    p.config.dropout = 0.5;
    let input = qualified_input();

    // eval path (no rng): dropout inactive, deterministic
    let a = project(&p, &input).unwrap();
    let b = project(&p, &input).unwrap();
    assert_eq!(a, b);

    // training path with a mask rng: differs from eval output
    let mut fwd = Forward::new(&p, Some(ChaCha8Rng::seed_from_u64(1)));
    let slots = build_input_slots(&mut fwd, &input);
    let (out, _) = fwd.projection(&slots, 2);
    let dropped = FuzzyVec::new(fwd.tape.value(out).data.clone()).unwrap();
    assert!(dropped.max_abs_diff(&a) > 1e-9);
}

#[test]
fn edge_bias_sharing_across_layers_is_configurable() {
    let mut config = EncoderConfig {
        dim: 4,
        layers: 3,
        heads: 1,
        ffn_dim: 8,
        ..EncoderConfig::default()
    };
    config.share_edge_bias = true;
    let p = ModelParams::init(config, 5, 3, 0).unwrap();
    assert_eq!(p.edge_biases.len(), 1);
    let input = EncoderInput {
        slots: vec![InputSlot::Entity(EntityId(0)), InputSlot::Mask],
        relations: vec![RelationId(0)],
    };
    project(&p, &input).unwrap();
}
