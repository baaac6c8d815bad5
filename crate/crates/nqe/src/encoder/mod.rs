//! The learnable query-embedding core: fuzzy-space embeddings, the
//! dual-heterogeneous attention projection operator, the shared-embedding
//! similarity head, label-smoothed cross-entropy, and batched step-program
//! execution with exact reverse-mode gradients.

mod edge;
mod forward;
mod params;

pub use edge::{edge_type, EdgeType, SlotKind, SlotRole, NUM_EDGE_TYPES};
pub use forward::{Forward, LN_EPS};
pub use params::{Ablations, EncoderConfig, GradStore, HeadParams, LayerParams, ModelParams};

use crate::autodiff::{Tensor, Var};
use crate::error::{NqeError, Result};
use crate::logic::{FuzzyVec, LogicKind};
use crate::query::StepProgram;
use crate::store::{EntityId, RelationId};

/// One entity slot of an encoder input sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSlot {
    Entity(EntityId),
    /// An intermediate variable query embedding, entering where an entity
    /// embedding would.
    Query(FuzzyVec),
    Mask,
}

/// Input to one n-ary projection: entity slots in position order plus the
/// main relation and qualifier attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderInput {
    pub slots: Vec<InputSlot>,
    pub relations: Vec<RelationId>,
}

impl EncoderInput {
    pub fn arity(&self) -> usize {
        self.slots.len()
    }

    fn validate(&self, params: &ModelParams) -> Result<usize> {
        if self.arity() < 2 {
            return Err(NqeError::Arity(format!(
                "projection input arity {} < 2",
                self.arity()
            )));
        }
        if self.relations.len() + 1 != self.slots.len() {
            return Err(NqeError::Shape(format!(
                "{} relations do not fit {} entity slots",
                self.relations.len(),
                self.slots.len()
            )));
        }
        let masks: Vec<usize> = self
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, InputSlot::Mask))
            .map(|(i, _)| i + 1)
            .collect();
        if masks.len() != 1 {
            return Err(NqeError::Shape(format!(
                "input must contain exactly one mask, found {}",
                masks.len()
            )));
        }
        for slot in &self.slots {
            match slot {
                InputSlot::Entity(e) if e.0 as usize >= params.num_entities => {
                    return Err(NqeError::Shape(format!("entity id {} out of range", e.0)));
                }
                InputSlot::Query(q) if q.len() != params.config.dim => {
                    return Err(NqeError::Shape(format!(
                        "query embedding width {} != model dim {}",
                        q.len(),
                        params.config.dim
                    )));
                }
                _ => {}
            }
        }
        for r in &self.relations {
            if r.0 as usize >= params.num_relations {
                return Err(NqeError::Shape(format!("relation id {} out of range", r.0)));
            }
        }
        Ok(masks[0])
    }
}

fn build_input_slots(fwd: &mut Forward, input: &EncoderInput) -> Vec<Var> {
    let arity = input.arity();
    let mut slots = Vec::with_capacity(2 * arity - 1);
    for p in 1..=arity {
        if p > 1 {
            slots.push(fwd.relation_vec(input.relations[p - 2]));
        }
        let v = match &input.slots[p - 1] {
            InputSlot::Entity(e) => fwd.entity_vec(*e),
            InputSlot::Query(q) => fwd.tape.constant(Tensor::col(q.values())),
            InputSlot::Mask => fwd.mask_vec(),
        };
        slots.push(v);
    }
    slots
}

/// N-ary projection: encode the masked sequence and read out the fuzzy
/// embedding of the missing position.
pub fn project(params: &ModelParams, input: &EncoderInput) -> Result<FuzzyVec> {
    Ok(project_with_attention(params, input)?.0)
}

/// Same as [`project`], additionally returning every attention row (softmax
/// outputs per layer, head, and query position).
pub fn project_with_attention(
    params: &ModelParams,
    input: &EncoderInput,
) -> Result<(FuzzyVec, Vec<Vec<f64>>)> {
    let mask_pos = input.validate(params)?;
    let mut fwd = Forward::new(params, None);
    let slots = build_input_slots(&mut fwd, input);
    let (out, attn) = fwd.projection(&slots, 2 * (mask_pos - 1));
    let values = fwd.tape.value(out).data.clone();
    let rows = attn
        .into_iter()
        .map(|v| fwd.tape.value(v).data.clone())
        .collect();
    Ok((FuzzyVec::new(values)?, rows))
}

/// Similarity probabilities of a query embedding against every entity
/// (softmax over `q . W_e^T` with the shared sigmoided entity table).
pub fn similarity(params: &ModelParams, q: &FuzzyVec) -> Result<Vec<f64>> {
    if q.len() != params.config.dim {
        return Err(NqeError::Shape(format!(
            "query width {} != model dim {}",
            q.len(),
            params.config.dim
        )));
    }
    let mut fwd = Forward::new(params, None);
    let qv = fwd.tape.constant(Tensor::col(q.values()));
    let logits = fwd.similarity_logits(qv);
    let probs = fwd.tape.softmax(logits);
    Ok(fwd.tape.value(probs).data.clone())
}

/// Label-smoothed negative cross-entropy against a probability vector:
/// `-sum_t y_t ln(s_t)` with `y_target = 1 - eps`, others `eps/(|E|-1)`.
pub fn loss(scores: &[f64], target: EntityId, epsilon: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&epsilon) || epsilon == 0.0 {
        return Err(NqeError::Config(format!(
            "label smoothing rate {epsilon} outside (0,1)"
        )));
    }
    let n = scores.len();
    if n < 2 {
        return Err(NqeError::Shape("loss needs at least two entities".into()));
    }
    if (target.0 as usize) >= n {
        return Err(NqeError::Shape(format!(
            "target entity {} out of range {n}",
            target.0
        )));
    }
    let off = epsilon / (n as f64 - 1.0);
    let mut total = 0.0;
    for (i, s) in scores.iter().enumerate() {
        let y = if i == target.0 as usize { 1.0 - epsilon } else { off };
        total -= y * s.ln();
    }
    Ok(total)
}

/// Per-query result of a step-program run: every register's fuzzy value in
/// register order, plus the target.
#[derive(Debug, Clone)]
pub struct StepOutputs {
    pub registers: Vec<FuzzyVec>,
    pub target: FuzzyVec,
}

/// Execute a batch of step programs (mixed query types welcome) and return
/// each query's register file and target embedding.
pub fn run_step_program(
    params: &ModelParams,
    programs: &[&StepProgram],
    logic: LogicKind,
) -> Result<Vec<StepOutputs>> {
    for p in programs {
        p.validate()?;
    }
    let mut fwd = Forward::new(params, None);
    let results = fwd.run_programs(programs, logic);
    results
        .into_iter()
        .map(|(registers, target)| {
            let registers = registers
                .into_iter()
                .map(|v| FuzzyVec::new(fwd.tape.value(v).data.clone()))
                .collect::<Result<Vec<_>>>()?;
            let target = FuzzyVec::new(fwd.tape.value(target).data.clone())?;
            Ok(StepOutputs { registers, target })
        })
        .collect()
}

/// Mean label-smoothed loss of a batch and its exact gradients with respect
/// to every parameter.
pub fn gradients(
    params: &ModelParams,
    programs: &[&StepProgram],
    targets: &[EntityId],
    epsilon: f64,
    logic: LogicKind,
) -> Result<(f64, GradStore)> {
    if programs.len() != targets.len() || programs.is_empty() {
        return Err(NqeError::Shape(format!(
            "{} programs vs {} targets",
            programs.len(),
            targets.len()
        )));
    }
    if !(0.0..1.0).contains(&epsilon) || epsilon == 0.0 {
        return Err(NqeError::Config(format!(
            "label smoothing rate {epsilon} outside (0,1)"
        )));
    }
    for p in programs {
        p.validate()?;
    }
    let mut fwd = Forward::new(params, None);
    let results = fwd.run_programs(programs, logic);
    let mut per_query = Vec::with_capacity(programs.len());
    for ((_, target_var), target_entity) in results.into_iter().zip(targets) {
        let logits = fwd.similarity_logits(target_var);
        per_query.push(fwd.smoothed_loss(logits, *target_entity, epsilon));
    }
    let total = fwd.tape.concat_rows(&per_query);
    let sum = fwd.tape.sum_all(total);
    let mean = fwd.tape.scale(sum, 1.0 / programs.len() as f64);

    let grads = fwd.tape.backward(mean);
    let store = GradStore(
        fwd.param_vars()
            .iter()
            .zip(params.tensors())
            .map(|(var, (_, t))| match grads.get(*var) {
                Some(g) => g.clone(),
                None => Tensor::zeros(t.rows, t.cols),
            })
            .collect(),
    );
    Ok((fwd.tape.value(mean).item(), store))
}

#[cfg(test)]
mod tests;
