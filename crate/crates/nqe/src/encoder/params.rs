//! Learnable parameters: fuzzy embedding logits, per-role attention
//! projections, per-edge-type bias vectors, feed-forward blocks, and the
//! output head. Entity and relation embeddings are sigmoids of unconstrained
//! logits, which keeps them strictly inside (0,1)^d while leaving gradients
//! unconstrained.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::NUM_EDGE_TYPES;
use crate::autodiff::Tensor;
use crate::error::{NqeError, Result};
use crate::logic::LogicKind;

/// Ablation switches for the encoder and trainer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// Keep role projections, zero and freeze edge-type biases.
    pub node_h_only: bool,
    /// Keep edge-type biases, share one role projection for all positions.
    pub edge_h_only: bool,
    /// Replace conjunction/disjunction with the arithmetic mean.
    pub logic_blind: bool,
    /// Train with single-type batches executed query by query.
    pub unparalleled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Embedding width d.
    pub dim: usize,
    /// Encoder layers K.
    pub layers: usize,
    /// Attention heads h (d must be divisible by h).
    pub heads: usize,
    /// Feed-forward hidden width.
    pub ffn_dim: usize,
    pub logic: LogicKind,
    /// Share edge-type biases across layers instead of per layer.
    pub share_edge_bias: bool,
    /// Dropout rate on attention weights and the FFN hidden layer.
    pub dropout: f64,
    pub ablation: Ablations,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 32,
            layers: 1,
            heads: 1,
            ffn_dim: 64,
            logic: LogicKind::Product,
            share_edge_bias: false,
            dropout: 0.0,
            ablation: Ablations::default(),
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.layers == 0 || self.heads == 0 || self.ffn_dim == 0 {
            return Err(NqeError::Config("model dimensions must be positive".into()));
        }
        if self.dim % self.heads != 0 {
            return Err(NqeError::Config(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NqeError::Config("dropout must be in [0,1)".into()));
        }
        if self.ablation.node_h_only && self.ablation.edge_h_only {
            return Err(NqeError::Config(
                "node_h_only and edge_h_only are mutually exclusive".into(),
            ));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub wq_e: Tensor,
    pub wk_e: Tensor,
    pub wv_e: Tensor,
    pub wq_r: Tensor,
    pub wk_r: Tensor,
    pub wv_r: Tensor,
}

/// Per-edge-type bias vectors, one row per edge type, shared across heads.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeBias {
    pub q: Tensor,
    pub k: Tensor,
    pub v: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub heads: Vec<HeadParams>,
    pub ffn_w1: Tensor,
    pub ffn_b1: Tensor,
    pub ffn_w2: Tensor,
    pub ffn_b2: Tensor,
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: EncoderConfig,
    pub num_entities: usize,
    pub num_relations: usize,
    pub entity_logits: Tensor,
    pub relation_logits: Tensor,
    pub mask_token: Tensor,
    pub layers: Vec<LayerParams>,
    /// One entry per layer, or a single shared entry.
    pub edge_biases: Vec<EdgeBias>,
    pub head_w1: Tensor,
    pub head_b1: Tensor,
    pub head_w2: Tensor,
    pub head_b2: Tensor,
    pub head_ln_gain: Tensor,
    pub head_ln_bias: Tensor,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(rows, cols, data)
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * std
        })
        .collect();
    Tensor::new(rows, cols, data)
}

impl ModelParams {
    pub fn init(
        config: EncoderConfig,
        num_entities: usize,
        num_relations: usize,
        seed: u64,
    ) -> Result<ModelParams> {
        config.validate()?;
        if num_entities == 0 || num_relations == 0 {
            return Err(NqeError::Config(
                "model needs at least one entity and one relation".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim;
        let dh = config.head_dim();

        let entity_logits = gaussian(&mut rng, num_entities, d, 1.0);
        let relation_logits = gaussian(&mut rng, num_relations, d, 1.0);
        let mask_token = gaussian(&mut rng, d, 1, 1.0);

        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let heads = (0..config.heads)
                .map(|_| HeadParams {
                    wq_e: xavier(&mut rng, dh, d),
                    wk_e: xavier(&mut rng, dh, d),
                    wv_e: xavier(&mut rng, dh, d),
                    wq_r: xavier(&mut rng, dh, d),
                    wk_r: xavier(&mut rng, dh, d),
                    wv_r: xavier(&mut rng, dh, d),
                })
                .collect();
            layers.push(LayerParams {
                heads,
                ffn_w1: xavier(&mut rng, config.ffn_dim, d),
                ffn_b1: Tensor::zeros(config.ffn_dim, 1),
                ffn_w2: xavier(&mut rng, d, config.ffn_dim),
                ffn_b2: Tensor::zeros(d, 1),
                ln1_gain: Tensor::new(d, 1, vec![1.0; d]),
                ln1_bias: Tensor::zeros(d, 1),
                ln2_gain: Tensor::new(d, 1, vec![1.0; d]),
                ln2_bias: Tensor::zeros(d, 1),
            });
        }

        let bias_count = if config.share_edge_bias { 1 } else { config.layers };
        let edge_biases = (0..bias_count)
            .map(|_| EdgeBias {
                q: gaussian(&mut rng, NUM_EDGE_TYPES, dh, 0.1),
                k: gaussian(&mut rng, NUM_EDGE_TYPES, dh, 0.1),
                v: gaussian(&mut rng, NUM_EDGE_TYPES, dh, 0.1),
            })
            .collect();

        Ok(ModelParams {
            num_entities,
            num_relations,
            entity_logits,
            relation_logits,
            mask_token,
            layers,
            edge_biases,
            head_w1: xavier(&mut rng, d, d),
            head_b1: Tensor::zeros(d, 1),
            head_w2: xavier(&mut rng, d, d),
            head_b2: Tensor::zeros(d, 1),
            head_ln_gain: Tensor::new(d, 1, vec![1.0; d]),
            head_ln_bias: Tensor::zeros(d, 1),
            config,
        })
    }

    /// Edge bias block used by layer `k`.
    pub fn edge_bias_for_layer(&self, k: usize) -> &EdgeBias {
        if self.config.share_edge_bias {
            &self.edge_biases[0]
        } else {
            &self.edge_biases[k]
        }
    }

    /// All tensors in a fixed declaration order with stable names.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("entity_logits".into(), &self.entity_logits),
            ("relation_logits".into(), &self.relation_logits),
            ("mask_token".into(), &self.mask_token),
        ];
        for (k, layer) in self.layers.iter().enumerate() {
            for (h, head) in layer.heads.iter().enumerate() {
                out.push((format!("layer{k}.head{h}.wq_e"), &head.wq_e));
                out.push((format!("layer{k}.head{h}.wk_e"), &head.wk_e));
                out.push((format!("layer{k}.head{h}.wv_e"), &head.wv_e));
                out.push((format!("layer{k}.head{h}.wq_r"), &head.wq_r));
                out.push((format!("layer{k}.head{h}.wk_r"), &head.wk_r));
                out.push((format!("layer{k}.head{h}.wv_r"), &head.wv_r));
            }
            out.push((format!("layer{k}.ffn_w1"), &layer.ffn_w1));
            out.push((format!("layer{k}.ffn_b1"), &layer.ffn_b1));
            out.push((format!("layer{k}.ffn_w2"), &layer.ffn_w2));
            out.push((format!("layer{k}.ffn_b2"), &layer.ffn_b2));
            out.push((format!("layer{k}.ln1_gain"), &layer.ln1_gain));
            out.push((format!("layer{k}.ln1_bias"), &layer.ln1_bias));
            out.push((format!("layer{k}.ln2_gain"), &layer.ln2_gain));
            out.push((format!("layer{k}.ln2_bias"), &layer.ln2_bias));
        }
        for (b, bias) in self.edge_biases.iter().enumerate() {
            out.push((format!("edge{b}.q"), &bias.q));
            out.push((format!("edge{b}.k"), &bias.k));
            out.push((format!("edge{b}.v"), &bias.v));
        }
        out.push(("head_w1".into(), &self.head_w1));
        out.push(("head_b1".into(), &self.head_b1));
        out.push(("head_w2".into(), &self.head_w2));
        out.push(("head_b2".into(), &self.head_b2));
        out.push(("head_ln_gain".into(), &self.head_ln_gain));
        out.push(("head_ln_bias".into(), &self.head_ln_bias));
        out
    }

    /// Mutable view of the same tensors in the same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![
            &mut self.entity_logits,
            &mut self.relation_logits,
            &mut self.mask_token,
        ];
        for layer in &mut self.layers {
            for head in &mut layer.heads {
                out.push(&mut head.wq_e);
                out.push(&mut head.wk_e);
                out.push(&mut head.wv_e);
                out.push(&mut head.wq_r);
                out.push(&mut head.wk_r);
                out.push(&mut head.wv_r);
            }
            out.push(&mut layer.ffn_w1);
            out.push(&mut layer.ffn_b1);
            out.push(&mut layer.ffn_w2);
            out.push(&mut layer.ffn_b2);
            out.push(&mut layer.ln1_gain);
            out.push(&mut layer.ln1_bias);
            out.push(&mut layer.ln2_gain);
            out.push(&mut layer.ln2_bias);
        }
        for bias in &mut self.edge_biases {
            out.push(&mut bias.q);
            out.push(&mut bias.k);
            out.push(&mut bias.v);
        }
        out.push(&mut self.head_w1);
        out.push(&mut self.head_b1);
        out.push(&mut self.head_w2);
        out.push(&mut self.head_b2);
        out.push(&mut self.head_ln_gain);
        out.push(&mut self.head_ln_bias);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data.len()).sum()
    }
}

/// Gradients aligned with [`ModelParams::tensors`] order.
#[derive(Debug, Clone)]
pub struct GradStore(pub Vec<Tensor>);

impl GradStore {
    pub fn zeros_like(params: &ModelParams) -> GradStore {
        GradStore(
            params
                .tensors()
                .iter()
                .map(|(_, t)| Tensor::zeros(t.rows, t.cols))
                .collect(),
        )
    }
}
