//! Exact set-semantics evaluation of query ASTs.
//!
//! `execute` is the ground-truth labeler: projection unions pattern matches
//! over the Cartesian product of its input sets, conjunction intersects,
//! disjunction unions, and negation complements against the full entity set.
//! `brute_force_execute` recomputes the same answers by enumerating entity
//! assignments and testing raw fact membership, with no pattern index and no
//! set algebra; it exists solely as an independent oracle for tests.

use std::collections::{BTreeSet, HashSet};

use crate::error::{NqeError, Result};
use crate::query::{EntitySlot, Projection, QueryAst};
use crate::store::{sequence_of, EntityId, HyperGraph, NAryFact, Scope, SeqElem};

/// Set of entities answering a query.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnswerSet(pub BTreeSet<EntityId>);

impl AnswerSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, e: EntityId) -> bool {
        self.0.contains(&e)
    }

    pub fn iter(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<EntityId> for AnswerSet {
    fn from_iter<T: IntoIterator<Item = EntityId>>(iter: T) -> Self {
        AnswerSet(iter.into_iter().collect())
    }
}

/// Evaluate a query AST over the facts visible in `scope`.
pub fn execute(ast: &QueryAst, g: &HyperGraph, scope: Scope) -> Result<AnswerSet> {
    ast.validate()?;
    Ok(AnswerSet(eval(ast, g, scope)?))
}

fn eval(ast: &QueryAst, g: &HyperGraph, scope: Scope) -> Result<BTreeSet<EntityId>> {
    match ast {
        QueryAst::Projection(p) => eval_projection(p, g, scope),
        QueryAst::And(cs) => {
            let mut sets = cs
                .iter()
                .map(|c| eval(c, g, scope))
                .collect::<Result<Vec<_>>>()?;
            let mut acc = sets.pop().unwrap();
            for s in sets {
                acc = acc.intersection(&s).copied().collect();
            }
            Ok(acc)
        }
        QueryAst::Or(cs) => {
            let mut acc = BTreeSet::new();
            for c in cs {
                acc.extend(eval(c, g, scope)?);
            }
            Ok(acc)
        }
        QueryAst::Not(c) => {
            let child = eval(c, g, scope)?;
            Ok(g.all_entities().filter(|e| !child.contains(e)).collect())
        }
    }
}

fn eval_projection(p: &Projection, g: &HyperGraph, scope: Scope) -> Result<BTreeSet<EntityId>> {
    let mut var_positions = Vec::new();
    let mut var_sets: Vec<Vec<EntityId>> = Vec::new();
    for (pos, child) in p.var_slots() {
        let set = eval(child, g, scope)?;
        if set.is_empty() {
            return Ok(BTreeSet::new());
        }
        var_positions.push(pos);
        var_sets.push(set.into_iter().collect());
    }

    let template = projection_template(p);
    let mut out = BTreeSet::new();
    let mut combo = vec![EntityId(0); var_sets.len()];
    product_union(
        g,
        scope,
        &template,
        p.target_pos,
        &var_positions,
        &var_sets,
        0,
        &mut combo,
        &mut out,
    )?;
    Ok(out)
}

/// Fact skeleton with anchors filled in and placeholders elsewhere.
fn projection_template(p: &Projection) -> NAryFact {
    let entity = |slot: &EntitySlot| match slot {
        EntitySlot::Anchor(e) => *e,
        _ => EntityId(0),
    };
    let mut fact = NAryFact::triple(entity(&p.slots[0]), p.relations[0], entity(&p.slots[1]));
    for (i, slot) in p.slots.iter().enumerate().skip(2) {
        fact.qualifiers.push((p.relations[i - 1], entity(slot)));
    }
    fact
}

#[allow(clippy::too_many_arguments)]
fn product_union(
    g: &HyperGraph,
    scope: Scope,
    template: &NAryFact,
    target_pos: usize,
    var_positions: &[usize],
    var_sets: &[Vec<EntityId>],
    depth: usize,
    combo: &mut [EntityId],
    out: &mut BTreeSet<EntityId>,
) -> Result<()> {
    if depth == var_sets.len() {
        let mut fact = template.clone();
        for (pos, e) in var_positions.iter().zip(combo.iter()) {
            fact = fact.with_entity_at(*pos, *e);
        }
        out.extend(g.match_pattern(scope, &fact, target_pos)?);
        return Ok(());
    }
    for i in 0..var_sets[depth].len() {
        combo[depth] = var_sets[depth][i];
        product_union(
            g,
            scope,
            template,
            target_pos,
            var_positions,
            var_sets,
            depth + 1,
            combo,
            out,
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

const MAX_BRUTE_VARS: usize = 3;
const MAX_BRUTE_ENTITIES: usize = 200;

/// Independent oracle: enumerate assignments of entities to the target and
/// to every bound variable, testing each completed fact for membership in
/// the scoped fact list.
pub fn brute_force_execute(ast: &QueryAst, g: &HyperGraph, scope: Scope) -> Result<AnswerSet> {
    ast.validate()?;
    if ast.num_bound_vars() > MAX_BRUTE_VARS {
        return Err(NqeError::GuardExceeded(format!(
            "{} bound variables (limit {MAX_BRUTE_VARS})",
            ast.num_bound_vars()
        )));
    }
    if g.num_entities() > MAX_BRUTE_ENTITIES {
        return Err(NqeError::GuardExceeded(format!(
            "{} entities (limit {MAX_BRUTE_ENTITIES})",
            g.num_entities()
        )));
    }

    // raw membership table; deliberately not the pattern index
    let mut members: HashSet<Vec<u32>> = HashSet::new();
    for split in scope.splits() {
        for fact in g.facts(split) {
            members.insert(raw_ids(&fact.canonical()));
        }
    }

    let n = g.num_entities();
    let truth = sat_table(ast, n, &members);
    Ok((0..n as u32)
        .map(EntityId)
        .filter(|e| truth[e.0 as usize])
        .collect())
}

fn raw_ids(fact: &NAryFact) -> Vec<u32> {
    sequence_of(fact)
        .into_iter()
        .map(|e| match e {
            SeqElem::Entity(EntityId(id)) => id,
            SeqElem::Relation(crate::store::RelationId(id)) => id,
        })
        .collect()
}

/// Truth table of "entity e satisfies this subquery" for every entity.
fn sat_table(ast: &QueryAst, n: usize, members: &HashSet<Vec<u32>>) -> Vec<bool> {
    match ast {
        QueryAst::Projection(p) => {
            let child_tables: Vec<(usize, Vec<bool>)> = p
                .var_slots()
                .map(|(pos, child)| (pos, sat_table(child, n, members)))
                .collect();
            let mut out = vec![false; n];
            let mut assignment: Vec<(usize, u32)> =
                child_tables.iter().map(|(pos, _)| (*pos, 0)).collect();
            enumerate_assignments(p, n, members, &child_tables, 0, &mut assignment, &mut out);
            out
        }
        QueryAst::And(cs) => {
            let mut acc = vec![true; n];
            for c in cs {
                let t = sat_table(c, n, members);
                acc.iter_mut().zip(t).for_each(|(a, b)| *a &= b);
            }
            acc
        }
        QueryAst::Or(cs) => {
            let mut acc = vec![false; n];
            for c in cs {
                let t = sat_table(c, n, members);
                acc.iter_mut().zip(t).for_each(|(a, b)| *a |= b);
            }
            acc
        }
        QueryAst::Not(c) => sat_table(c, n, members).into_iter().map(|b| !b).collect(),
    }
}

fn enumerate_assignments(
    p: &Projection,
    n: usize,
    members: &HashSet<Vec<u32>>,
    child_tables: &[(usize, Vec<bool>)],
    depth: usize,
    assignment: &mut Vec<(usize, u32)>,
    out: &mut [bool],
) {
    if depth == child_tables.len() {
        for v in 0..n as u32 {
            if out[v as usize] {
                continue;
            }
            let fact = complete_fact(p, assignment, v);
            if members.contains(&raw_ids(&fact.canonical())) {
                out[v as usize] = true;
            }
        }
        return;
    }
    let (pos, table) = &child_tables[depth];
    for u in 0..n as u32 {
        if !table[u as usize] {
            continue;
        }
        assignment[depth] = (*pos, u);
        enumerate_assignments(p, n, members, child_tables, depth + 1, assignment, out);
    }
}

fn complete_fact(p: &Projection, assignment: &[(usize, u32)], target: u32) -> NAryFact {
    let entity = |pos: usize| -> EntityId {
        if pos == p.target_pos {
            return EntityId(target);
        }
        if let Some((_, u)) = assignment.iter().find(|(apos, _)| *apos == pos) {
            return EntityId(*u);
        }
        match &p.slots[pos - 1] {
            EntitySlot::Anchor(e) => *e,
            _ => unreachable!("slot {pos} must be anchor, target, or assigned var"),
        }
    };
    let mut fact = NAryFact::triple(entity(1), p.relations[0], entity(2));
    for pos in 3..=p.arity() {
        fact.qualifiers.push((p.relations[pos - 2], entity(pos)));
    }
    fact
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{canonical_ast, parse, QueryType};
    use crate::store::{RelationId, Split};
    use proptest::prelude::*;

    fn graph_from(facts: &[(&str, &str, &str, &[(&str, &str)])], split: Split) -> HyperGraph {
        let mut g = HyperGraph::new();
        for (s, r, o, quals) in facts {
            let s = EntityId(g.entities.intern(s));
            let r = RelationId(g.relations.intern(r));
            let o = EntityId(g.entities.intern(o));
            let mut fact = NAryFact::triple(s, r, o);
            for (a, v) in *quals {
                let a = RelationId(g.relations.intern(a));
                let v = EntityId(g.entities.intern(v));
                fact.qualifiers.push((a, v));
            }
            g.insert_fact(split, fact);
        }
        g
    }

    fn answers(g: &HyperGraph, set: &AnswerSet) -> Vec<String> {
        set.iter().map(|e| g.entity_label(e).to_string()).collect()
    }

    #[test]
    fn one_hop_on_single_fact() {
        let g = graph_from(&[("A", "r", "B", &[])], Split::Train);
        let ast = parse("(P 2 (f A r ?))", &g).unwrap();
        let out = execute(&ast, &g, Scope::TRAIN).unwrap();
        assert_eq!(answers(&g, &out), vec!["B"]);
    }

    #[test]
    fn intersection_by_hand() {
        let g = graph_from(
            &[
                ("A", "r", "B", &[]),
                ("A", "r", "C", &[]),
                ("D", "r2", "B", &[]),
            ],
            Split::Train,
        );
        let ast = parse("(and (P 2 (f A r ?)) (P 2 (f D r2 ?)))", &g).unwrap();
        let out = execute(&ast, &g, Scope::TRAIN).unwrap();
        assert_eq!(answers(&g, &out), vec!["B"]);
    }

    #[test]
    fn negated_intersection_complements_over_all_entities() {
        let g = graph_from(
            &[
                ("A", "r", "B", &[]),
                ("A", "r", "C", &[]),
                ("D", "r2", "B", &[]),
            ],
            Split::Train,
        );
        let ast = parse("(and (P 2 (f A r ?)) (not (P 2 (f D r2 ?))))", &g).unwrap();
        let out = execute(&ast, &g, Scope::TRAIN).unwrap();
        assert_eq!(answers(&g, &out), vec!["C"]);
    }

    #[test]
    fn empty_inputs_propagate() {
        let g = graph_from(&[("A", "r", "B", &[]), ("B", "r2", "C", &[])], Split::Train);
        // inner hop over r2 from A matches nothing
        let ast = parse("(P 2 (f (var (P 2 (f A r2 ?))) r ?))", &g).unwrap();
        let out = execute(&ast, &g, Scope::TRAIN).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn brute_force_matches_on_1p() {
        let g = graph_from(
            &[("A", "r", "B", &[]), ("A", "r", "C", &[("a1", "D")])],
            Split::Train,
        );
        let ast = parse("(P 2 (f A r ?))", &g).unwrap();
        assert_eq!(
            execute(&ast, &g, Scope::TRAIN).unwrap(),
            brute_force_execute(&ast, &g, Scope::TRAIN).unwrap()
        );
    }

    #[test]
    fn pni_with_empty_positive_branch_is_empty() {
        let g = graph_from(
            &[
                ("A", "r", "B", &[]),
                ("B", "r", "C", &[]),
                ("X", "r2", "X", &[]),
            ],
            Split::Train,
        );
        let ast = parse(
            "(and (not (P 2 (f (var (P 2 (f A r ?))) r ?))) (P 2 (f A r2 ?)))",
            &g,
        )
        .unwrap();
        let out = execute(&ast, &g, Scope::TRAIN).unwrap();
        assert!(out.is_empty());
        assert_eq!(out, brute_force_execute(&ast, &g, Scope::TRAIN).unwrap());
    }

    #[test]
    fn guards_reject_oversized_inputs() {
        let mut g = HyperGraph::new();
        for i in 0..201 {
            g.entities.intern(&format!("e{i}"));
        }
        g.relations.intern("r");
        g.insert_fact(
            Split::Train,
            NAryFact::triple(EntityId(0), RelationId(0), EntityId(1)),
        );
        let ast = canonical_ast(QueryType::P1, &[EntityId(0)], &[RelationId(0)]).unwrap();
        assert!(matches!(
            brute_force_execute(&ast, &g, Scope::TRAIN),
            Err(NqeError::GuardExceeded(_))
        ));
    }

    // -- randomized equivalence ----------------------------------------

    #[derive(Debug, Clone)]
    struct RandomGraph {
        g: HyperGraph,
    }

    fn arb_graph(
        entities: u32,
        relations: u32,
        max_facts: usize,
    ) -> impl Strategy<Value = RandomGraph> {
        prop::collection::vec(
            (
                0..entities,
                0..relations,
                0..entities,
                prop::collection::vec((0..relations, 0..entities), 0..3),
                0..3usize,
            ),
            1..max_facts,
        )
        .prop_map(move |rows| {
            let mut g = HyperGraph::new();
            for i in 0..entities {
                g.entities.intern(&format!("e{i}"));
            }
            for i in 0..relations {
                g.relations.intern(&format!("r{i}"));
            }
            for (s, r, o, quals, split) in rows {
                let mut fact = NAryFact::triple(EntityId(s), RelationId(r), EntityId(o));
                fact.qualifiers = quals
                    .into_iter()
                    .map(|(a, v)| (RelationId(a), EntityId(v)))
                    .collect();
                g.insert_fact(Split::ALL[split], fact);
            }
            RandomGraph { g }
        })
    }

    fn random_instance(t: QueryType, g: &HyperGraph, picks: &[u32]) -> QueryAst {
        let (na, nr) = t.canonical_counts();
        let ne = g.num_entities() as u32;
        let nrel = g.num_relations() as u32;
        let anchors: Vec<EntityId> = (0..na)
            .map(|i| EntityId(picks[i % picks.len()] % ne))
            .collect();
        let relations: Vec<RelationId> = (0..nr)
            .map(|i| RelationId(picks[(na + i) % picks.len()] % nrel))
            .collect();
        canonical_ast(t, &anchors, &relations).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Index-driven execution equals assignment enumeration for every
        /// query type on random graphs, including empty answer sets.
        #[test]
        fn execute_equals_brute_force(
            rg in arb_graph(18, 4, 60),
            picks in prop::collection::vec(0u32..1000, 12),
        ) {
            for t in QueryType::ALL {
                let ast = random_instance(t, &rg.g, &picks);
                let fast = execute(&ast, &rg.g, Scope::ALL).unwrap();
                let slow = brute_force_execute(&ast, &rg.g, Scope::ALL).unwrap();
                prop_assert_eq!(fast, slow, "type {}", t);
            }
        }

        /// Negation-free answers grow monotonically with scope.
        #[test]
        fn monotone_in_scope(
            rg in arb_graph(15, 3, 50),
            picks in prop::collection::vec(0u32..1000, 12),
        ) {
            for t in QueryType::EPFO {
                let ast = random_instance(t, &rg.g, &picks);
                let train = execute(&ast, &rg.g, Scope::TRAIN).unwrap();
                let all = execute(&ast, &rg.g, Scope::ALL).unwrap();
                prop_assert!(train.0.is_subset(&all.0), "type {}", t);
            }
        }

        /// De Morgan at set level.
        #[test]
        fn de_morgan(
            rg in arb_graph(15, 3, 50),
            picks in prop::collection::vec(0u32..1000, 8),
        ) {
            let a = random_instance(QueryType::P1, &rg.g, &picks[..4]);
            let b = random_instance(QueryType::P2, &rg.g, &picks[4..]);
            let not_and = QueryAst::Not(Box::new(QueryAst::And(vec![a.clone(), b.clone()])));
            let or_nots = QueryAst::Or(vec![
                QueryAst::Not(Box::new(a)),
                QueryAst::Not(Box::new(b)),
            ]);
            let lhs = execute(&not_and, &rg.g, Scope::ALL).unwrap();
            let rhs = execute(&or_nots, &rg.g, Scope::ALL).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
