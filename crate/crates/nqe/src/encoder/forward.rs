//! Tape construction for the dual-heterogeneous attention encoder and the
//! fuzzy-logic execution of step programs.
//!
//! Attention logits add role-projected queries/keys and per-edge-type bias
//! vectors, normalize with a softmax over the sequence, and mix role-projected
//! values carrying the matching edge bias. Each layer finishes with residual +
//! layer norm around attention and a GELU feed-forward block; the masked
//! position then passes through the output head (two-layer MLP, layer norm,
//! sigmoid) so results always land strictly inside (0,1)^d.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::edge::{edge_type, SlotRole};
use super::params::ModelParams;
use crate::autodiff::{layer_norm, Tape, Tensor, Var};
use crate::logic::LogicKind;
use crate::query::{LogicOp, SpecSlot, Step, StepProgram};
use crate::store::{EntityId, RelationId};

pub const LN_EPS: f64 = 1e-5;

/// Incrementally builds one tape over a whole batch, sharing the sigmoided
/// embedding tables and cached lookups between queries.
pub struct Forward<'p> {
    pub tape: Tape,
    params: &'p ModelParams,
    param_vars: Vec<Var>,
    /// sigmoid(entity_logits), shared by inputs and the similarity head
    pub entity_table: Var,
    relation_table: Var,
    mask_var: Var,
    entity_cache: HashMap<u32, Var>,
    relation_cache: HashMap<u32, Var>,
    bias_row_cache: HashMap<(usize, u8, usize), Var>,
    dropout_rng: Option<ChaCha8Rng>,
}

/// Indices into the parameter leaf list, mirroring `ModelParams::tensors`.
struct ParamIndex {
    entity_logits: usize,
    relation_logits: usize,
    mask_token: usize,
    layer_base: usize,
    per_layer: usize,
    per_head: usize,
    edge_base: usize,
    head_base: usize,
}

impl ParamIndex {
    fn new(p: &ModelParams) -> ParamIndex {
        let per_head = 6;
        let per_layer = p.config.heads * per_head + 8;
        let layer_base = 3;
        let edge_base = layer_base + p.config.layers * per_layer;
        let head_base = edge_base + p.edge_biases.len() * 3;
        ParamIndex {
            entity_logits: 0,
            relation_logits: 1,
            mask_token: 2,
            layer_base,
            per_layer,
            per_head,
            edge_base,
            head_base,
        }
    }

    fn head(&self, layer: usize, head: usize, which: usize) -> usize {
        self.layer_base + layer * self.per_layer + head * self.per_head + which
    }

    fn layer_tail(&self, layer: usize, heads: usize, which: usize) -> usize {
        self.layer_base + layer * self.per_layer + heads * self.per_head + which
    }

    fn edge(&self, block: usize, which: usize) -> usize {
        self.edge_base + block * 3 + which
    }
}

impl<'p> Forward<'p> {
    pub fn new(params: &'p ModelParams, dropout_rng: Option<ChaCha8Rng>) -> Forward<'p> {
        let mut tape = Tape::new();
        let param_vars: Vec<Var> = params
            .tensors()
            .into_iter()
            .map(|(_, t)| tape.leaf(t.clone()))
            .collect();
        let idx = ParamIndex::new(params);
        let entity_table = tape.sigmoid(param_vars[idx.entity_logits]);
        let relation_table = tape.sigmoid(param_vars[idx.relation_logits]);
        let mask_var = param_vars[idx.mask_token];
        Forward {
            tape,
            params,
            param_vars,
            entity_table,
            relation_table,
            mask_var,
            entity_cache: HashMap::new(),
            relation_cache: HashMap::new(),
            bias_row_cache: HashMap::new(),
            dropout_rng,
        }
    }

    pub fn param_vars(&self) -> &[Var] {
        &self.param_vars
    }

    fn index(&self) -> ParamIndex {
        ParamIndex::new(self.params)
    }

    pub fn entity_vec(&mut self, id: EntityId) -> Var {
        if let Some(&v) = self.entity_cache.get(&id.0) {
            return v;
        }
        let v = self.tape.row_as_col(self.entity_table, id.0 as usize);
        self.entity_cache.insert(id.0, v);
        v
    }

    pub fn relation_vec(&mut self, id: RelationId) -> Var {
        if let Some(&v) = self.relation_cache.get(&id.0) {
            return v;
        }
        let v = self.tape.row_as_col(self.relation_table, id.0 as usize);
        self.relation_cache.insert(id.0, v);
        v
    }

    pub fn mask_vec(&self) -> Var {
        self.mask_var
    }

    fn edge_bias_row(&mut self, layer: usize, which: u8, etype: usize) -> Var {
        let block = if self.params.config.share_edge_bias { 0 } else { layer };
        if let Some(&v) = self.bias_row_cache.get(&(block, which, etype)) {
            return v;
        }
        let idx = self.index();
        let table = self.param_vars[idx.edge(block, which as usize)];
        let v = self.tape.row_as_col(table, etype);
        self.bias_row_cache.insert((block, which, etype), v);
        v
    }

    fn dropout(&mut self, x: Var) -> Var {
        let p = self.params.config.dropout;
        if p <= 0.0 {
            return x;
        }
        let Some(rng) = self.dropout_rng.as_mut() else {
            return x;
        };
        let t = self.tape.value(x);
        let (rows, cols) = (t.rows, t.cols);
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..rows * cols)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = self.tape.constant(Tensor::new(rows, cols, mask));
        self.tape.mul(x, mask)
    }

    /// One full encoder pass over an alternating sequence of slot vectors;
    /// returns the output embedding at `mask_seq_idx` plus every attention
    /// row (softmax outputs, one per layer/head/position).
    pub fn projection(&mut self, slots: &[Var], mask_seq_idx: usize) -> (Var, Vec<Var>) {
        let seq_len = slots.len();
        debug_assert!(seq_len % 2 == 1 && seq_len >= 3);
        let edge_h_only = self.params.config.ablation.edge_h_only;
        let node_h_only = self.params.config.ablation.node_h_only;
        let num_layers = self.params.config.layers;
        let num_heads = self.params.config.heads;
        let dh = self.params.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let idx = self.index();
        let mut attention_rows = Vec::new();

        // which: 0..3 = entity q/k/v, 3..6 = relation q/k/v
        let head_param = |layer: usize, head: usize, pos: usize, which: usize| -> usize {
            let role_offset = if !edge_h_only && SlotRole::of(pos) == SlotRole::Relation {
                3
            } else {
                0 // single shared role projection under the EdgeH-only ablation
            };
            idx.head(layer, head, role_offset + which)
        };

        let mut xs: Vec<Var> = slots.to_vec();
        for layer in 0..num_layers {
            let mut attended: Vec<Var> = Vec::with_capacity(seq_len);
            for i in 0..seq_len {
                let mut head_outs = Vec::with_capacity(num_heads);
                for head in 0..num_heads {
                    let wq = self.param_vars[head_param(layer, head, i, 0)];
                    let u_i = self.tape.matmul(wq, xs[i]);
                    let mut logits = Vec::with_capacity(seq_len);
                    for j in 0..seq_len {
                        let etype = edge_type(i, j) as usize;
                        let wk = self.param_vars[head_param(layer, head, j, 1)];
                        let k_j = self.tape.matmul(wk, xs[j]);
                        let (q_ij, k_ij) = if node_h_only {
                            (u_i, k_j)
                        } else {
                            let bq = self.edge_bias_row(layer, 0, etype);
                            let bk = self.edge_bias_row(layer, 1, etype);
                            (self.tape.add(u_i, bq), self.tape.add(k_j, bk))
                        };
                        let m = self.tape.dot(q_ij, k_ij);
                        logits.push(self.tape.scale(m, scale));
                    }
                    let m_i = self.tape.concat_rows(&logits);
                    let alpha = self.tape.softmax(m_i);
                    attention_rows.push(alpha);
                    let alpha = self.dropout(alpha);

                    let mut value_cols = Vec::with_capacity(seq_len);
                    for j in 0..seq_len {
                        let etype = edge_type(i, j) as usize;
                        let wv = self.param_vars[head_param(layer, head, j, 2)];
                        let v_j = self.tape.matmul(wv, xs[j]);
                        let v_ij = if node_h_only {
                            v_j
                        } else {
                            let bv = self.edge_bias_row(layer, 2, etype);
                            self.tape.add(v_j, bv)
                        };
                        value_cols.push(v_ij);
                    }
                    let values = self.tape.concat_cols(&value_cols);
                    head_outs.push(self.tape.matmul(values, alpha));
                }
                let attn_i = if head_outs.len() == 1 {
                    head_outs[0]
                } else {
                    self.tape.concat_rows(&head_outs)
                };
                attended.push(attn_i);
            }

            let heads = num_heads;
            let ffn_w1 = self.param_vars[idx.layer_tail(layer, heads, 0)];
            let ffn_b1 = self.param_vars[idx.layer_tail(layer, heads, 1)];
            let ffn_w2 = self.param_vars[idx.layer_tail(layer, heads, 2)];
            let ffn_b2 = self.param_vars[idx.layer_tail(layer, heads, 3)];
            let ln1_gain = self.param_vars[idx.layer_tail(layer, heads, 4)];
            let ln1_bias = self.param_vars[idx.layer_tail(layer, heads, 5)];
            let ln2_gain = self.param_vars[idx.layer_tail(layer, heads, 6)];
            let ln2_bias = self.param_vars[idx.layer_tail(layer, heads, 7)];

            let mut next = Vec::with_capacity(seq_len);
            for i in 0..seq_len {
                let res = self.tape.add(xs[i], attended[i]);
                let normed = layer_norm(&mut self.tape, res, ln1_gain, ln1_bias, LN_EPS);
                let h1 = self.tape.matmul(ffn_w1, normed);
                let h1 = self.tape.add(h1, ffn_b1);
                let act = self.tape.gelu(h1);
                let act = self.dropout(act);
                let h2 = self.tape.matmul(ffn_w2, act);
                let ffn = self.tape.add(h2, ffn_b2);
                let res2 = self.tape.add(normed, ffn);
                next.push(layer_norm(&mut self.tape, res2, ln2_gain, ln2_bias, LN_EPS));
            }
            xs = next;
        }

        // output head on the masked position
        let x_mask = xs[mask_seq_idx];
        let head_w1 = self.param_vars[idx.head_base];
        let head_b1 = self.param_vars[idx.head_base + 1];
        let head_w2 = self.param_vars[idx.head_base + 2];
        let head_b2 = self.param_vars[idx.head_base + 3];
        let head_ln_gain = self.param_vars[idx.head_base + 4];
        let head_ln_bias = self.param_vars[idx.head_base + 5];
        let h1 = self.tape.matmul(head_w1, x_mask);
        let h1 = self.tape.add(h1, head_b1);
        let g = self.tape.gelu(h1);
        let h2 = self.tape.matmul(head_w2, g);
        let h2 = self.tape.add(h2, head_b2);
        let ln = layer_norm(&mut self.tape, h2, head_ln_gain, head_ln_bias, LN_EPS);
        (self.tape.sigmoid(ln), attention_rows)
    }

    /// Projection forward for a step-program spec, register values supplied
    /// as tape nodes.
    pub fn projection_from_spec(
        &mut self,
        spec: &crate::query::ProjectionSpec,
        registers: &[Option<Var>],
    ) -> Var {
        let arity = spec.arity();
        let mut slots = Vec::with_capacity(2 * arity - 1);
        for p in 1..=arity {
            if p > 1 {
                slots.push(self.relation_vec(spec.relations[p - 2]));
            }
            let slot = match spec.slots[p - 1] {
                SpecSlot::Anchor(e) => self.entity_vec(e),
                SpecSlot::Register(r) => {
                    registers[r.0 as usize].expect("register read before write")
                }
                SpecSlot::Mask => self.mask_vec(),
            };
            slots.push(slot);
        }
        let mask_seq_idx = 2 * (spec.mask_pos - 1);
        let (out, _) = self.projection(&slots, mask_seq_idx);
        out
    }

    /// Fuzzy logic over tape nodes in the configured t-norm family.
    pub fn logic_op(&mut self, op: LogicOp, inputs: &[Var], kind: LogicKind) -> Var {
        if self.params.config.ablation.logic_blind && matches!(op, LogicOp::And | LogicOp::Or) {
            let mut acc = inputs[0];
            for &v in &inputs[1..] {
                acc = self.tape.add(acc, v);
            }
            return self.tape.scale(acc, 1.0 / inputs.len() as f64);
        }
        match op {
            LogicOp::Not => {
                debug_assert_eq!(inputs.len(), 1);
                self.tape.one_minus(inputs[0])
            }
            LogicOp::And => match kind {
                LogicKind::Product => {
                    let mut acc = inputs[0];
                    for &v in &inputs[1..] {
                        acc = self.tape.mul(acc, v);
                    }
                    acc
                }
                LogicKind::Godel => {
                    let mut acc = inputs[0];
                    for &v in &inputs[1..] {
                        acc = self.tape.min(acc, v);
                    }
                    acc
                }
                LogicKind::Lukasiewicz => {
                    let mut acc = inputs[0];
                    for &v in &inputs[1..] {
                        let s = self.tape.add(acc, v);
                        let s = self.tape.add_const(s, -1.0);
                        acc = self.tape.relu(s);
                    }
                    acc
                }
            },
            LogicOp::Or => match kind {
                LogicKind::Product => {
                    let mut acc = self.tape.one_minus(inputs[0]);
                    for &v in &inputs[1..] {
                        let nv = self.tape.one_minus(v);
                        acc = self.tape.mul(acc, nv);
                    }
                    self.tape.one_minus(acc)
                }
                LogicKind::Godel => {
                    let mut acc = inputs[0];
                    for &v in &inputs[1..] {
                        acc = self.tape.max(acc, v);
                    }
                    acc
                }
                LogicKind::Lukasiewicz => {
                    let mut acc = inputs[0];
                    for &v in &inputs[1..] {
                        let s = self.tape.add(acc, v);
                        acc = self.tape.min_const(s, 1.0);
                    }
                    acc
                }
            },
        }
    }

    /// Execute one step for one query's register file.
    pub fn execute_step(&mut self, step: &Step, registers: &mut [Option<Var>], kind: LogicKind) {
        let proj_out = step
            .proj
            .as_ref()
            .map(|spec| self.projection_from_spec(spec, registers));
        let value = match (&step.logic, proj_out) {
            (None, Some(p)) => p,
            (Some(logic), proj) => {
                let inputs: Vec<Var> = if logic.inputs.is_empty() {
                    vec![proj.expect("fused logic step without projection")]
                } else {
                    logic
                        .inputs
                        .iter()
                        .map(|r| registers[r.0 as usize].expect("register read before write"))
                        .collect()
                };
                self.logic_op(logic.op, &inputs, kind)
            }
            (None, None) => unreachable!("step with neither projection nor logic"),
        };
        registers[step.out.0 as usize] = Some(value);
    }

    /// Execute a batch of step programs step-major: step t of every program
    /// runs before step t+1 of any program, with projection steps grouped by
    /// arity and missing steps padded as pass-throughs.
    pub fn run_programs(
        &mut self,
        programs: &[&StepProgram],
        kind: LogicKind,
    ) -> Vec<(Vec<Var>, Var)> {
        let max_steps = programs.iter().map(|p| p.steps.len()).max().unwrap_or(0);
        let mut register_files: Vec<Vec<Option<Var>>> = programs
            .iter()
            .map(|p| vec![None; p.num_registers])
            .collect();

        for t in 0..max_steps {
            // projection-bearing steps first, grouped by arity
            let mut by_arity: Vec<(usize, usize)> = Vec::new();
            let mut logic_only: Vec<usize> = Vec::new();
            for (qi, prog) in programs.iter().enumerate() {
                let Some(step) = prog.steps.get(t) else {
                    continue; // padded no-op: registers flow through untouched
                };
                match &step.proj {
                    Some(spec) => by_arity.push((spec.arity(), qi)),
                    None => logic_only.push(qi),
                }
            }
            by_arity.sort_unstable();
            for (_, qi) in by_arity {
                let step = &programs[qi].steps[t];
                self.execute_step(step, &mut register_files[qi], kind);
            }
            for qi in logic_only {
                let step = &programs[qi].steps[t];
                self.execute_step(step, &mut register_files[qi], kind);
            }
        }

        programs
            .iter()
            .zip(register_files)
            .map(|(prog, file)| {
                let registers: Vec<Var> = file
                    .into_iter()
                    .map(|v| v.expect("program left a register unwritten"))
                    .collect();
                let target = registers[prog.target.0 as usize];
                (registers, target)
            })
            .collect()
    }

    /// Similarity logits `q . W_e^T` against the shared entity table.
    pub fn similarity_logits(&mut self, q: Var) -> Var {
        self.tape.matmul(self.entity_table, q)
    }

    /// Label-smoothed negative cross-entropy against the target entity.
    pub fn smoothed_loss(&mut self, logits: Var, target: EntityId, epsilon: f64) -> Var {
        let n = self.params.num_entities;
        let mut label = vec![epsilon / (n as f64 - 1.0); n];
        label[target.0 as usize] = 1.0 - epsilon;
        let y = self.tape.constant(Tensor::col(&label));
        let log_probs = self.tape.log_softmax(logits);
        let ll = self.tape.dot(y, log_probs);
        self.tape.scale(ll, -1.0)
    }
}
