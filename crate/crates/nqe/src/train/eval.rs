//! Filtered-ranking evaluation: MRR and Hits@K over hard answers, macro
//! averages over the EPFO and negation type groups.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{run_step_program, similarity, ModelParams};
use crate::error::{NqeError, Result};
use crate::executor::AnswerSet;
use crate::logic::LogicKind;
use crate::query::{compile, QueryType, StepProgram};
use crate::sampler::GroundedQuery;
use crate::store::EntityId;

/// Rank of `candidate` among all entities after removing the other members
/// of `known_answers` from the ordering; ties average their ranks, so ranks
/// may be fractional.
pub fn rank_filtered(
    scores: &[f64],
    candidate: EntityId,
    known_answers: &AnswerSet,
) -> Result<f64> {
    if !known_answers.contains(candidate) {
        return Err(NqeError::InvalidQuery(format!(
            "candidate {} is not a known answer",
            candidate.0
        )));
    }
    let cand_score = *scores
        .get(candidate.0 as usize)
        .ok_or_else(|| NqeError::Shape(format!("candidate {} out of range", candidate.0)))?;
    let mut higher = 0usize;
    let mut tied = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        let e = EntityId(i as u32);
        if e == candidate || known_answers.contains(e) {
            continue;
        }
        if s > cand_score {
            higher += 1;
        } else if s == cand_score {
            tied += 1;
        }
    }
    // candidate plus `tied` entities share positions higher+1 ..= higher+tied+1
    Ok(higher as f64 + (tied as f64 + 2.0) / 2.0)
}

/// Unfiltered variant (only the candidate itself is removed from the
/// competitor set); used to check that filtering never hurts.
pub fn rank_unfiltered(scores: &[f64], candidate: EntityId) -> Result<f64> {
    let only: AnswerSet = std::iter::once(candidate).collect();
    rank_filtered(scores, candidate, &only)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct TypeMetrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    /// Number of evaluated queries.
    pub count: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub per_type: BTreeMap<String, TypeMetrics>,
    /// Macro average MRR over the eleven EPFO types present.
    pub avg_p: Option<f64>,
    /// Macro average MRR over the five negation types present.
    pub avg_n: Option<f64>,
    pub warnings: Vec<String>,
}

/// One query's [MRR, Hits@1, Hits@3, Hits@10] over its ranked answers:
/// `MRR(q) = (1/|v|) sum 1/rank(v_i)`, Hits analogous.
pub fn query_metrics(
    scores: &[f64],
    ranked: &[EntityId],
    known: &AnswerSet,
) -> Result<[f64; 4]> {
    let mut acc = [0.0f64; 4];
    for answer in ranked {
        let rank = rank_filtered(scores, *answer, known)?;
        acc[0] += 1.0 / rank;
        acc[1] += if rank <= 1.0 { 1.0 } else { 0.0 };
        acc[2] += if rank <= 3.0 { 1.0 } else { 0.0 };
        acc[3] += if rank <= 10.0 { 1.0 } else { 0.0 };
    }
    let n = ranked.len() as f64;
    acc.iter_mut().for_each(|x| *x /= n);
    Ok(acc)
}

/// Which answers to rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankTargets {
    /// Hard answers only; queries without hard answers are skipped.
    #[default]
    HardOnly,
    /// Hard answers when present, else easy answers (train-split capacity
    /// checks, where hard sets are empty by construction).
    EasyWhenNoHard,
}

/// Evaluate a model on grounded queries with filtered ranking.
pub fn evaluate(
    params: &ModelParams,
    dataset: &[GroundedQuery],
    logic: LogicKind,
    targets: RankTargets,
) -> Result<EvalReport> {
    let compiled: Vec<StepProgram> = dataset
        .iter()
        .map(|q| compile(&q.ast))
        .collect::<Result<Vec<_>>>()?;

    // (query MRR, hits@1, hits@3, hits@10) per query, order-preserving
    let per_query: Vec<Result<Option<(QueryType, [f64; 4])>>> = dataset
        .par_iter()
        .zip(compiled.par_iter())
        .map(|(q, program)| {
            let ranked: Vec<EntityId> = match targets {
                RankTargets::HardOnly => q.hard.iter().collect(),
                RankTargets::EasyWhenNoHard => {
                    if q.hard.is_empty() {
                        q.easy.iter().collect()
                    } else {
                        q.hard.iter().collect()
                    }
                }
            };
            if ranked.is_empty() {
                return Ok(None);
            }
            let outputs = run_step_program(params, &[program], logic)?;
            let scores = similarity(params, &outputs[0].target)?;
            let known: AnswerSet = q.easy.iter().chain(q.hard.iter()).collect();
            Ok(Some((q.query_type, query_metrics(&scores, &ranked, &known)?)))
        })
        .collect();

    let mut sums: BTreeMap<QueryType, ([f64; 4], usize)> = BTreeMap::new();
    for result in per_query {
        if let Some((qtype, acc)) = result? {
            let entry = sums.entry(qtype).or_default();
            for (s, a) in entry.0.iter_mut().zip(acc) {
                *s += a;
            }
            entry.1 += 1;
        }
    }

    let mut report = EvalReport::default();
    for (qtype, (sum, count)) in &sums {
        let n = *count as f64;
        report.per_type.insert(
            qtype.tag().to_string(),
            TypeMetrics {
                mrr: sum[0] / n,
                hits1: sum[1] / n,
                hits3: sum[2] / n,
                hits10: sum[3] / n,
                count: *count,
            },
        );
    }

    let macro_avg = |types: &[QueryType]| -> Option<f64> {
        let present: Vec<f64> = types
            .iter()
            .filter_map(|t| report.per_type.get(t.tag()).map(|m| m.mrr))
            .collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    };
    let avg_p = macro_avg(&QueryType::EPFO);
    let avg_n = macro_avg(&QueryType::NEGATION);
    report.avg_p = avg_p;
    report.avg_n = avg_n;
    for t in QueryType::ALL {
        if !report.per_type.contains_key(t.tag()) {
            report
                .warnings
                .push(format!("type {t} absent from dataset; omitted from averages"));
        }
    }
    Ok(report)
}
