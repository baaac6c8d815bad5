//! Grounded query sampling.
//!
//! Queries are instantiated by backward walks from a uniformly sampled
//! answer fact, so every sampled query has a non-empty answer set by
//! construction. Easy answers are those derivable from the train scope
//! alone; hard answers additionally require the valid/test facts of the
//! query's split. Sampling is rejection-based with a bounded retry budget:
//! valid/test queries must have hard answers, total answers are capped, and
//! negation queries must have a negated branch that actually excludes a
//! would-be hard answer.

mod dataset;
mod synth;

pub use dataset::{generate_dataset, read_queries, write_queries, DatasetCounts, DatasetManifest};
pub use synth::{synthetic_block_graph, SyntheticConfig};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{NqeError, Result};
use crate::executor::{execute, AnswerSet};
use crate::query::{EntitySlot, QueryAst, QueryType};
use crate::store::{EntityId, HyperGraph, NAryFact, Scope, Split};

const RETRY_BUDGET: usize = 128;
const ANSWER_CAP: usize = 1000;

/// A sampled query instance with its ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedQuery {
    pub query_type: QueryType,
    pub ast: QueryAst,
    pub easy: AnswerSet,
    pub hard: AnswerSet,
    pub seed: u64,
}

/// Stable seed mixing (splitmix64 finalizer), used to derive per-item seeds.
pub(crate) fn mix(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    x
}

fn scopes_for(split: Split) -> (Scope, Scope) {
    match split {
        Split::Train => (Scope::TRAIN, Scope::TRAIN),
        Split::Valid => (Scope::TRAIN_VALID, Scope::TRAIN_VALID),
        Split::Test => (Scope::ALL, Scope::ALL),
    }
}

/// Sample one grounded query of the given type for a split.
pub fn sample_query(
    qtype: QueryType,
    g: &HyperGraph,
    split: Split,
    rng_seed: u64,
) -> Result<GroundedQuery> {
    let (walk_scope, eval_scope) = scopes_for(split);
    if g.facts(split).is_empty() {
        return Err(NqeError::Sampling {
            query_type: qtype.tag().to_string(),
            msg: format!("no facts in split {split}"),
        });
    }
    if matches!(qtype, QueryType::Cp2 | QueryType::Cp3) {
        let any = walk_scope
            .splits()
            .any(|s| g.facts(s).iter().any(|f| f.arity() >= 3));
        if !any {
            return Err(NqeError::Arity(format!(
                "no facts of arity >= 3 available for {qtype}"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..RETRY_BUDGET {
        let mut walker = Walker {
            g,
            walk_scope,
            answer_split: split,
            rng: &mut rng,
        };
        let Some(ast) = walker.ground(qtype) else {
            continue;
        };
        debug_assert!(qtype.matches(&ast), "{qtype} walk produced a foreign shape");

        let full = execute(&ast, g, eval_scope)?;
        if full.is_empty() || full.len() > ANSWER_CAP {
            continue;
        }
        let easy = execute(&ast, g, Scope::TRAIN)?;
        let hard: AnswerSet = full.iter().filter(|e| !easy.contains(*e)).collect();
        if split == Split::Train {
            if easy.is_empty() {
                continue;
            }
        } else if hard.is_empty() {
            continue;
        }
        if qtype.has_negation() && !negation_is_live(&ast, g, eval_scope, &full)? {
            continue;
        }
        return Ok(GroundedQuery {
            query_type: qtype,
            ast,
            easy,
            hard,
            seed: rng_seed,
        });
    }
    Err(NqeError::Sampling {
        query_type: qtype.tag().to_string(),
        msg: format!("retry budget {RETRY_BUDGET} exhausted"),
    })
}

/// The negated branch must actually filter: dropping it has to surface at
/// least one would-be answer that the full query excludes. This rejects
/// trivially-satisfied negation (a negated set disjoint from the rest).
fn negation_is_live(
    ast: &QueryAst,
    g: &HyperGraph,
    eval_scope: Scope,
    full: &AnswerSet,
) -> Result<bool> {
    let dropped = drop_negated_branches(ast)
        .ok_or_else(|| NqeError::InvalidQuery("negation type without a Not branch".into()))?;
    let drop_eval = execute(&dropped, g, eval_scope)?;
    let filters = drop_eval.iter().any(|e| !full.contains(e));
    Ok(filters)
}

/// Remove negated conjuncts; used to test that negation actually filters.
pub fn drop_negated_branches(ast: &QueryAst) -> Option<QueryAst> {
    match ast {
        QueryAst::And(cs) => {
            let kept: Vec<QueryAst> = cs
                .iter()
                .filter(|c| !matches!(c, QueryAst::Not(_)))
                .cloned()
                .collect();
            if kept.len() == cs.len() {
                return None;
            }
            match kept.len() {
                0 => None,
                1 => Some(kept.into_iter().next().unwrap()),
                _ => Some(QueryAst::And(kept)),
            }
        }
        QueryAst::Projection(p) => {
            // negation nested under a var slot (the inp shape)
            let mut changed = false;
            let slots = p
                .slots
                .iter()
                .map(|s| match s {
                    EntitySlot::Var(child) => match drop_negated_branches(child) {
                        Some(new_child) => {
                            changed = true;
                            EntitySlot::Var(Box::new(new_child))
                        }
                        None => EntitySlot::Var(child.clone()),
                    },
                    other => other.clone(),
                })
                .collect();
            changed.then(|| QueryAst::projection(slots, p.relations.clone(), p.target_pos))
        }
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Backward walks
// ---------------------------------------------------------------------------

/// Positional regime for a hop's variable and target slots.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Regime {
    /// Any entity position (the one-hop entity-prediction task).
    Any,
    /// Main-triple positions only (subject/object), the standard shapes.
    Main,
    /// Qualifier-value positions only (the chained-qualifier shapes).
    Qual,
}

struct Walker<'g, 'r> {
    g: &'g HyperGraph,
    walk_scope: Scope,
    answer_split: Split,
    rng: &'r mut ChaCha8Rng,
}

impl Walker<'_, '_> {
    fn ground(&mut self, qtype: QueryType) -> Option<QueryAst> {
        match qtype {
            QueryType::P1 => self.chain(1, Regime::Any),
            QueryType::P2 => self.chain(2, Regime::Main),
            QueryType::P3 => self.chain(3, Regime::Main),
            QueryType::Cp2 => self.chain(2, Regime::Qual),
            QueryType::Cp3 => self.chain(3, Regime::Qual),
            QueryType::I2 => self.intersection(2, 0),
            QueryType::I3 => self.intersection(3, 0),
            QueryType::In2 => self.intersection(2, 1),
            QueryType::In3 => self.intersection(3, 1),
            QueryType::Pi => {
                let (fact, pos) = self.answer_occurrence(Regime::Main)?;
                let target = fact.entity_at(pos).unwrap();
                let chain = self.chain_to(target, 2, Regime::Main)?;
                let leaf = self.branch_1p(target)?;
                Some(QueryAst::And(vec![chain, leaf]))
            }
            QueryType::Ip => self.hop_over(|w, v1| {
                let a = w.branch_1p(v1)?;
                let b = w.branch_1p(v1)?;
                Some(QueryAst::And(vec![a, b]))
            }),
            QueryType::U2 => {
                let (fact, pos) = self.answer_occurrence(Regime::Main)?;
                let a = proj_from_fact(&fact, pos, None);
                let b = self.random_1p()?;
                Some(QueryAst::Or(vec![a, b]))
            }
            QueryType::Up => self.hop_over(|w, v1| {
                let a = w.branch_1p(v1)?;
                let b = w.random_1p()?;
                Some(QueryAst::Or(vec![a, b]))
            }),
            QueryType::Inp => self.hop_over(|w, v1| {
                let pos_branch = w.branch_1p(v1)?;
                let neg = w.negated_branch(&pos_branch, v1)?;
                Some(QueryAst::And(vec![pos_branch, neg]))
            }),
            QueryType::Pin => {
                let (fact, pos) = self.answer_occurrence(Regime::Main)?;
                let target = fact.entity_at(pos).unwrap();
                let chain = self.chain_to(target, 2, Regime::Main)?;
                let neg = self.negated_branch(&chain, target)?;
                Some(QueryAst::And(vec![chain, neg]))
            }
            QueryType::Pni => {
                let (fact, pos) = self.answer_occurrence(Regime::Main)?;
                let target = fact.entity_at(pos).unwrap();
                let leaf = proj_from_fact(&fact, pos, None);
                // negated chain built to exclude a different would-be answer
                let other = self.other_answer(&leaf, target);
                let chain_seed = other.unwrap_or_else(|| self.random_entity());
                let chain = self.chain_to(chain_seed, 2, Regime::Main)?;
                Some(QueryAst::And(vec![QueryAst::Not(Box::new(chain)), leaf]))
            }
        }
    }

    /// Linear chain of `len` hops built backward from an answer occurrence.
    fn chain(&mut self, len: usize, regime: Regime) -> Option<QueryAst> {
        let (fact, pos) = self.answer_occurrence(regime)?;
        self.extend_chain(fact, pos, len - 1, regime)
    }

    /// Chain whose final hop produces `value` at its target position.
    fn chain_to(&mut self, value: EntityId, len: usize, regime: Regime) -> Option<QueryAst> {
        let (fact, pos) = self.occurrence_of(value, regime)?;
        self.extend_chain(fact, pos, len - 1, regime)
    }

    fn extend_chain(
        &mut self,
        final_fact: NAryFact,
        final_pos: usize,
        hops_below: usize,
        regime: Regime,
    ) -> Option<QueryAst> {
        if hops_below == 0 {
            return Some(proj_from_fact(&final_fact, final_pos, None));
        }
        let inner_regime = if regime == Regime::Any {
            Regime::Main
        } else {
            regime
        };
        let var_pos = self.pick_var_position(&final_fact, final_pos, regime)?;
        let mut below = vec![(final_fact.clone(), final_pos, var_pos)];
        let mut cur_value = final_fact.entity_at(var_pos).unwrap();
        for _ in 0..hops_below - 1 {
            let (fact, pos) = self.occurrence_of(cur_value, inner_regime)?;
            let vpos = self.pick_var_position(&fact, pos, inner_regime)?;
            cur_value = fact.entity_at(vpos).unwrap();
            below.push((fact, pos, vpos));
        }
        let (leaf_fact, leaf_pos) = self.occurrence_of(cur_value, inner_regime)?;
        let mut ast = proj_from_fact(&leaf_fact, leaf_pos, None);
        for (fact, pos, vpos) in below.into_iter().rev() {
            ast = proj_from_fact(&fact, pos, Some((vpos, ast)));
        }
        Some(ast)
    }

    /// Intersection of 1p branches sharing an answer, plus `negated` negated
    /// branches chosen to exclude a sibling answer.
    fn intersection(&mut self, children: usize, negated: usize) -> Option<QueryAst> {
        let (fact, pos) = self.answer_occurrence(Regime::Main)?;
        let target = fact.entity_at(pos).unwrap();
        let mut branches = vec![proj_from_fact(&fact, pos, None)];
        for _ in 1..children - negated {
            branches.push(self.branch_1p(target)?);
        }
        for _ in 0..negated {
            let positive = if branches.len() == 1 {
                branches[0].clone()
            } else {
                QueryAst::And(branches.clone())
            };
            branches.push(self.negated_branch(&positive, target)?);
        }
        Some(QueryAst::And(branches))
    }

    /// Final main-position hop over an inner subquery produced by `inner`,
    /// which receives the variable value threading into the hop.
    fn hop_over(
        &mut self,
        inner: impl FnOnce(&mut Self, EntityId) -> Option<QueryAst>,
    ) -> Option<QueryAst> {
        let (fact, pos) = self.answer_occurrence(Regime::Main)?;
        let var_pos = self.pick_var_position(&fact, pos, Regime::Main)?;
        let v1 = fact.entity_at(var_pos).unwrap();
        let sub = inner(self, v1)?;
        Some(proj_from_fact(&fact, pos, Some((var_pos, sub))))
    }

    /// 1p branch whose answers contain `value`.
    fn branch_1p(&mut self, value: EntityId) -> Option<QueryAst> {
        let (fact, pos) = self.occurrence_of(value, Regime::Main)?;
        Some(proj_from_fact(&fact, pos, None))
    }

    /// Negated 1p branch targeting an answer of `positive` other than
    /// `protect`, preferring a branch whose answers spare `protect` so the
    /// negation filters without emptying the result.
    fn negated_branch(&mut self, positive: &QueryAst, protect: EntityId) -> Option<QueryAst> {
        for _ in 0..6 {
            let seed = self
                .other_answer(positive, protect)
                .unwrap_or_else(|| self.random_entity());
            let Some(branch) = self.branch_1p(seed) else {
                continue;
            };
            let spares_protect = execute(&branch, self.g, self.walk_scope)
                .map(|answers| !answers.contains(protect))
                .unwrap_or(false);
            if spares_protect {
                return Some(QueryAst::Not(Box::new(branch)));
            }
        }
        let branch = self.random_1p()?;
        Some(QueryAst::Not(Box::new(branch)))
    }

    fn other_answer(&mut self, ast: &QueryAst, exclude: EntityId) -> Option<EntityId> {
        let answers = execute(ast, self.g, self.walk_scope).ok()?;
        let others: Vec<EntityId> = answers.iter().filter(|e| *e != exclude).collect();
        others.choose(self.rng).copied()
    }

    fn random_entity(&mut self) -> EntityId {
        EntityId(self.rng.gen_range(0..self.g.num_entities() as u32))
    }

    /// Uniform fact from the answer split matching the regime, with a target
    /// position drawn under that regime.
    fn answer_occurrence(&mut self, regime: Regime) -> Option<(NAryFact, usize)> {
        let facts = self.g.facts(self.answer_split);
        for _ in 0..64 {
            let fact = facts.choose(self.rng)?;
            if let Some(pos) = self.pick_target_position(fact, regime) {
                return Some((fact.clone(), pos));
            }
        }
        // fallback scan when the regime is sparse in this split
        let eligible: Vec<&NAryFact> = facts
            .iter()
            .filter(|f| match regime {
                Regime::Qual => f.arity() >= 3,
                _ => true,
            })
            .collect();
        let fact = (*eligible.choose(self.rng)?).clone();
        let pos = self.pick_target_position(&fact, regime)?;
        Some((fact, pos))
    }

    /// Uniform occurrence of `value` in the walk scope obeying the regime:
    /// main chains need it on the main triple, qualifier chains anywhere on
    /// a fact of arity >= 3.
    fn occurrence_of(&mut self, value: EntityId, regime: Regime) -> Option<(NAryFact, usize)> {
        let mut candidates: Vec<(Split, u32, u8)> = Vec::new();
        for split in self.walk_scope.splits() {
            for &(idx, pos) in self.g.occurrences(split, value) {
                let fact = &self.g.facts(split)[idx as usize];
                let ok = match regime {
                    Regime::Any => true,
                    Regime::Main => pos <= 2,
                    Regime::Qual => fact.arity() >= 3,
                };
                if ok {
                    candidates.push((split, idx, pos));
                }
            }
        }
        let &(split, idx, pos) = candidates.choose(self.rng)?;
        Some((self.g.facts(split)[idx as usize].clone(), pos as usize))
    }

    fn pick_target_position(&mut self, fact: &NAryFact, regime: Regime) -> Option<usize> {
        match regime {
            Regime::Any => Some(self.rng.gen_range(1..=fact.arity())),
            Regime::Main => Some(self.rng.gen_range(1..=2)),
            Regime::Qual => {
                if fact.arity() < 3 {
                    None
                } else {
                    Some(self.rng.gen_range(1..=fact.arity()))
                }
            }
        }
    }

    /// Entity position hosting the incoming variable, distinct from the
    /// target position. Qualifier chains thread the variable through a
    /// qualifier-value position.
    fn pick_var_position(
        &mut self,
        fact: &NAryFact,
        target_pos: usize,
        regime: Regime,
    ) -> Option<usize> {
        match regime {
            Regime::Main | Regime::Any => {
                let pos = 3 - target_pos.min(2);
                (pos != target_pos).then_some(pos)
            }
            Regime::Qual => {
                let options: Vec<usize> =
                    (3..=fact.arity()).filter(|&p| p != target_pos).collect();
                options.choose(self.rng).copied()
            }
        }
    }

    /// 1p over a uniformly random fact in the walk scope.
    fn random_1p(&mut self) -> Option<QueryAst> {
        let splits: Vec<Split> = self.walk_scope.splits().collect();
        for _ in 0..32 {
            let split = *splits.choose(self.rng)?;
            if let Some(fact) = self.g.facts(split).choose(self.rng) {
                let pos = self.rng.gen_range(1..=2);
                return Some(proj_from_fact(fact, pos, None));
            }
        }
        None
    }
}

/// Projection AST from a concrete fact: the target position becomes the
/// hole, an optional position hosts a nested variable, and every other
/// entity becomes an anchor.
fn proj_from_fact(fact: &NAryFact, target_pos: usize, var: Option<(usize, QueryAst)>) -> QueryAst {
    let (var_pos, mut var_child) = match var {
        Some((p, c)) => (Some(p), Some(c)),
        None => (None, None),
    };
    let slots = (1..=fact.arity())
        .map(|p| {
            if p == target_pos {
                EntitySlot::Target
            } else if Some(p) == var_pos {
                EntitySlot::Var(Box::new(var_child.take().unwrap()))
            } else {
                EntitySlot::Anchor(fact.entity_at(p).unwrap())
            }
        })
        .collect();
    let mut relations = vec![fact.relation];
    relations.extend(fact.qualifiers.iter().map(|&(a, _)| a));
    QueryAst::projection(slots, relations, target_pos)
}


/// Test-support hook: run one grounding attempt without the accept checks.
#[doc(hidden)]
pub fn debug_ground(
    qtype: QueryType,
    g: &HyperGraph,
    split: Split,
    seed: u64,
) -> Option<QueryAst> {
    let (walk_scope, _) = scopes_for(split);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut walker = Walker {
        g,
        walk_scope,
        answer_split: split,
        rng: &mut rng,
    };
    walker.ground(qtype)
}
