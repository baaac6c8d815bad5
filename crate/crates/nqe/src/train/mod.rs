//! Training over mixed-type query batches and filtered-ranking evaluation.
//!
//! Every (query, answer) pair is one training example with a label-smoothed
//! single-target cross-entropy. Mixed query types share batches through the
//! step-program executor; the `unparalleled` ablation instead groups batches
//! by type and runs them query by query. Training is single-threaded and
//! bitwise deterministic for a fixed config and seed.

mod adam;
mod eval;

pub use adam::Adam;
pub use eval::{
    evaluate, query_metrics, rank_filtered, rank_unfiltered, EvalReport, RankTargets, TypeMetrics,
};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{gradients, EncoderConfig, GradStore, ModelParams};
use crate::error::{NqeError, Result};
use crate::query::{compile, QueryType, StepProgram};
use crate::sampler::GroundedQuery;
use crate::store::{EntityId, HyperGraph};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: EncoderConfig,
    /// Label smoothing rate, strictly inside (0,1).
    pub epsilon: f64,
    pub learning_rate: f64,
    pub optimizer: String,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Query types to train on; empty means all sixteen.
    pub train_types: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: EncoderConfig::default(),
            epsilon: 0.1,
            learning_rate: 3e-3,
            optimizer: "adam".into(),
            batch_size: 128,
            epochs: 30,
            seed: 0,
            train_types: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(NqeError::Config(format!(
                "label smoothing rate {} outside (0,1)",
                self.epsilon
            )));
        }
        if self.learning_rate <= 0.0 {
            return Err(NqeError::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(NqeError::Config(
                "batch size and epochs must be positive".into(),
            ));
        }
        if self.optimizer != "adam" {
            return Err(NqeError::Config(format!(
                "unknown optimizer `{}`",
                self.optimizer
            )));
        }
        for t in &self.train_types {
            t.parse::<QueryType>()?;
        }
        Ok(())
    }

    pub fn parsed_types(&self) -> Result<Vec<QueryType>> {
        if self.train_types.is_empty() {
            return Ok(QueryType::ALL.to_vec());
        }
        self.train_types.iter().map(|t| t.parse()).collect()
    }
}

/// Result of a training run.
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<(usize, f64)>,
    pub rng_seed: u64,
    pub rng_word_pos: u128,
}

/// Train a fresh model on grounded queries. One example per (query, answer)
/// pair; answers come from the easy set (train queries have no hard
/// answers). Aborts with a numerical error if the loss stops being finite.
pub fn train(
    g: &HyperGraph,
    dataset: &[GroundedQuery],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let keep: Vec<QueryType> = config.parsed_types()?;
    let queries: Vec<&GroundedQuery> = dataset
        .iter()
        .filter(|q| keep.contains(&q.query_type))
        .collect();
    if queries.is_empty() {
        return Err(NqeError::Config(
            "dataset holds no queries of the configured train types".into(),
        ));
    }

    let programs: Vec<StepProgram> = queries
        .iter()
        .map(|q| compile(&q.ast))
        .collect::<Result<Vec<_>>>()?;
    // one example per (query, answer) pair
    let mut examples: Vec<(usize, EntityId)> = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        for answer in q.easy.iter().chain(q.hard.iter()) {
            examples.push((qi, answer));
        }
    }
    if examples.is_empty() {
        return Err(NqeError::Config("no training examples".into()));
    }

    let mut params = ModelParams::init(
        config.model.clone(),
        g.num_entities(),
        g.num_relations(),
        config.seed,
    )?;
    let mut adam = Adam::new(&params, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let logic = config.model.logic;
    let unparalleled = config.model.ablation.unparalleled;
    let mut loss_curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        examples.shuffle(&mut rng);
        let batches: Vec<Vec<(usize, EntityId)>> = if unparalleled {
            single_type_batches(&examples, &queries, config.batch_size)
        } else {
            examples
                .chunks(config.batch_size)
                .map(|c| c.to_vec())
                .collect()
        };

        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in &batches {
            let batch_programs: Vec<&StepProgram> =
                batch.iter().map(|(qi, _)| &programs[*qi]).collect();
            let batch_targets: Vec<EntityId> = batch.iter().map(|(_, e)| *e).collect();

            let (loss, grads) = if unparalleled {
                // per-query execution, gradients averaged by hand
                let mut total = GradStore::zeros_like(&params);
                let mut loss_sum = 0.0;
                for (program, target) in batch_programs.iter().zip(&batch_targets) {
                    let (l, g) = gradients(
                        &params,
                        &[program],
                        std::slice::from_ref(target),
                        config.epsilon,
                        logic,
                    )?;
                    loss_sum += l;
                    for (acc, delta) in total.0.iter_mut().zip(&g.0) {
                        for (a, d) in acc.data.iter_mut().zip(&delta.data) {
                            *a += d;
                        }
                    }
                }
                let inv = 1.0 / batch.len() as f64;
                for t in &mut total.0 {
                    for x in &mut t.data {
                        *x *= inv;
                    }
                }
                (loss_sum * inv, total)
            } else {
                gradients(&params, &batch_programs, &batch_targets, config.epsilon, logic)?
            };

            if !loss.is_finite() {
                return Err(NqeError::Numerical(format!(
                    "non-finite loss {loss} in epoch {epoch} after {seen} examples"
                )));
            }
            adam.step(&mut params, &grads);
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
        }
        loss_curve.push((epoch, epoch_loss / seen as f64));
    }

    Ok(TrainOutcome {
        params,
        loss_curve,
        rng_seed: config.seed,
        rng_word_pos: rng.get_word_pos(),
    })
}

/// Group shuffled examples into single-type batches, preserving the shuffled
/// order within each type.
fn single_type_batches(
    examples: &[(usize, EntityId)],
    queries: &[&GroundedQuery],
    batch_size: usize,
) -> Vec<Vec<(usize, EntityId)>> {
    let mut by_type: Vec<(QueryType, Vec<(usize, EntityId)>)> = Vec::new();
    for &(qi, e) in examples {
        let t = queries[qi].query_type;
        match by_type.iter_mut().find(|(bt, _)| *bt == t) {
            Some((_, bucket)) => bucket.push((qi, e)),
            None => by_type.push((t, vec![(qi, e)])),
        }
    }
    by_type
        .into_iter()
        .flat_map(|(_, bucket)| {
            bucket
                .chunks(batch_size)
                .map(|c| c.to_vec())
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Write a loss curve as `epoch,loss` CSV.
pub fn write_loss_curve(path: impl AsRef<std::path::Path>, curve: &[(usize, f64)]) -> Result<()> {
    use std::io::Write;
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| NqeError::io(path, e))?;
    writeln!(f, "epoch,loss").map_err(|e| NqeError::io(path, e))?;
    for (epoch, loss) in curve {
        writeln!(f, "{epoch},{loss}").map_err(|e| NqeError::io(path, e))?;
    }
    Ok(())
}
