//! Canonical AST shapes for the 16 query types.
//!
//! The 14 standard types instantiate the usual chain / intersection / union /
//! negation topologies with binary facts and variable slots on the main
//! triple. The two chained-qualifier types (2cp, 3cp) are chains of
//! projections over facts of arity >= 3 whose hops produce their output at a
//! qualifier-value position (p >= 3), threading each hop's variable into the
//! next hop's object slot.

use super::ast::{EntitySlot, Projection, QueryAst, QueryType};
use crate::error::{NqeError, Result};
use crate::store::{EntityId, RelationId};

impl QueryType {
    /// (anchor count, relation count) of the canonical shape.
    pub fn canonical_counts(self) -> (usize, usize) {
        match self {
            QueryType::P1 => (1, 1),
            QueryType::P2 => (1, 2),
            QueryType::P3 => (1, 3),
            QueryType::I2 | QueryType::U2 | QueryType::In2 => (2, 2),
            QueryType::I3 | QueryType::In3 => (3, 3),
            QueryType::Pi
            | QueryType::Ip
            | QueryType::Up
            | QueryType::Inp
            | QueryType::Pin
            | QueryType::Pni => (2, 3),
            QueryType::Cp2 => (3, 4),
            QueryType::Cp3 => (4, 6),
        }
    }
}

fn hop_1p(anchor: EntityId, rel: RelationId) -> QueryAst {
    QueryAst::projection(
        vec![EntitySlot::Anchor(anchor), EntitySlot::Target],
        vec![rel],
        2,
    )
}

fn hop_from(input: QueryAst, rel: RelationId) -> QueryAst {
    QueryAst::projection(
        vec![EntitySlot::Var(Box::new(input)), EntitySlot::Target],
        vec![rel],
        2,
    )
}

/// Leaf hop `(s, r, o, {(a, ?)})` producing its output at the qualifier
/// value (position 3).
fn qual_leaf(s: EntityId, o: EntityId, rel: RelationId, attr: RelationId) -> QueryAst {
    QueryAst::projection(
        vec![
            EntitySlot::Anchor(s),
            EntitySlot::Anchor(o),
            EntitySlot::Target,
        ],
        vec![rel, attr],
        3,
    )
}

/// Chain hop `(s, r, ?, {(a, V)})`: the incoming variable threads through
/// the qualifier-value position, the output is the object.
fn qual_chain_hop(s: EntityId, input: QueryAst, rel: RelationId, attr: RelationId) -> QueryAst {
    QueryAst::projection(
        vec![
            EntitySlot::Anchor(s),
            EntitySlot::Target,
            EntitySlot::Var(Box::new(input)),
        ],
        vec![rel, attr],
        2,
    )
}

/// Instantiate the canonical shape of a query type.
pub fn canonical_ast(
    qtype: QueryType,
    anchors: &[EntityId],
    relations: &[RelationId],
) -> Result<QueryAst> {
    let (na, nr) = qtype.canonical_counts();
    if anchors.len() != na || relations.len() != nr {
        return Err(NqeError::InvalidQuery(format!(
            "{qtype} expects {na} anchors and {nr} relations, got {} and {}",
            anchors.len(),
            relations.len()
        )));
    }
    let a = anchors;
    let r = relations;
    let ast = match qtype {
        QueryType::P1 => hop_1p(a[0], r[0]),
        QueryType::P2 => hop_from(hop_1p(a[0], r[0]), r[1]),
        QueryType::P3 => hop_from(hop_from(hop_1p(a[0], r[0]), r[1]), r[2]),
        QueryType::I2 => QueryAst::And(vec![hop_1p(a[0], r[0]), hop_1p(a[1], r[1])]),
        QueryType::I3 => QueryAst::And(vec![
            hop_1p(a[0], r[0]),
            hop_1p(a[1], r[1]),
            hop_1p(a[2], r[2]),
        ]),
        QueryType::Pi => QueryAst::And(vec![
            hop_from(hop_1p(a[0], r[0]), r[1]),
            hop_1p(a[1], r[2]),
        ]),
        QueryType::Ip => hop_from(
            QueryAst::And(vec![hop_1p(a[0], r[0]), hop_1p(a[1], r[1])]),
            r[2],
        ),
        QueryType::U2 => QueryAst::Or(vec![hop_1p(a[0], r[0]), hop_1p(a[1], r[1])]),
        QueryType::Up => hop_from(
            QueryAst::Or(vec![hop_1p(a[0], r[0]), hop_1p(a[1], r[1])]),
            r[2],
        ),
        QueryType::Cp2 => {
            let hop1 = qual_leaf(a[0], a[1], r[0], r[1]);
            qual_chain_hop(a[2], hop1, r[2], r[3])
        }
        QueryType::Cp3 => {
            let hop1 = qual_leaf(a[0], a[1], r[0], r[1]);
            let hop2 = qual_chain_hop(a[2], hop1, r[2], r[3]);
            qual_chain_hop(a[3], hop2, r[4], r[5])
        }
        QueryType::In2 => QueryAst::And(vec![
            hop_1p(a[0], r[0]),
            QueryAst::Not(Box::new(hop_1p(a[1], r[1]))),
        ]),
        QueryType::In3 => QueryAst::And(vec![
            hop_1p(a[0], r[0]),
            hop_1p(a[1], r[1]),
            QueryAst::Not(Box::new(hop_1p(a[2], r[2]))),
        ]),
        QueryType::Inp => hop_from(
            QueryAst::And(vec![
                hop_1p(a[0], r[0]),
                QueryAst::Not(Box::new(hop_1p(a[1], r[1]))),
            ]),
            r[2],
        ),
        QueryType::Pin => QueryAst::And(vec![
            hop_from(hop_1p(a[0], r[0]), r[1]),
            QueryAst::Not(Box::new(hop_1p(a[1], r[2]))),
        ]),
        QueryType::Pni => QueryAst::And(vec![
            QueryAst::Not(Box::new(hop_from(hop_1p(a[0], r[0]), r[1]))),
            hop_1p(a[1], r[2]),
        ]),
    };
    debug_assert!(ast.validate().is_ok());
    Ok(ast)
}

// ---------------------------------------------------------------------------
// Shape recognition
// ---------------------------------------------------------------------------

/// Variable slots (var or target) of a projection sit on the main triple.
fn main_positions(p: &Projection) -> bool {
    p.target_pos <= 2 && p.var_slots().all(|(pos, _)| pos <= 2)
}

/// 1p literal: a projection without nested variables.
fn is_leaf(ast: &QueryAst, main_only: bool) -> bool {
    match ast {
        QueryAst::Projection(p) => {
            p.var_slots().count() == 0 && (!main_only || main_positions(p))
        }
        _ => false,
    }
}

/// Linear chain of exactly `len` projections; returns the hops from leaf to
/// root when the topology matches.
fn as_chain(ast: &QueryAst, len: usize) -> Option<Vec<&Projection>> {
    let mut hops = Vec::new();
    let mut cur = ast;
    loop {
        match cur {
            QueryAst::Projection(p) => {
                hops.push(p);
                let vars: Vec<&QueryAst> = p.var_slots().map(|(_, c)| c).collect();
                match vars.as_slice() {
                    [] => break,
                    [child] => cur = child,
                    _ => return None,
                }
            }
            _ => return None,
        }
    }
    if hops.len() == len {
        hops.reverse();
        Some(hops)
    } else {
        None
    }
}

fn is_main_chain(ast: &QueryAst, len: usize) -> bool {
    as_chain(ast, len).is_some_and(|hops| hops.iter().all(|p| main_positions(p)))
}

/// Qualifier-threading chain: every hop fact has arity >= 3 and at least one
/// hop's variable or target sits at a qualifier-value position.
fn is_qual_chain(ast: &QueryAst, len: usize) -> bool {
    as_chain(ast, len).is_some_and(|hops| {
        hops.iter().all(|p| p.arity() >= 3)
            && hops.iter().any(|p| {
                p.target_pos >= 3 || p.var_slots().any(|(pos, _)| pos >= 3)
            })
    })
}

fn split_negated(children: &[QueryAst]) -> (Vec<&QueryAst>, Vec<&QueryAst>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for c in children {
        match c {
            QueryAst::Not(inner) => neg.push(inner.as_ref()),
            other => pos.push(other),
        }
    }
    (pos, neg)
}

impl QueryType {
    /// Whether an AST instantiates this type's shape (topology plus the
    /// positional regime distinguishing plain chains from qualifier chains).
    pub fn matches(self, ast: &QueryAst) -> bool {
        match self {
            QueryType::P1 => is_leaf(ast, false),
            QueryType::P2 => is_main_chain(ast, 2),
            QueryType::P3 => is_main_chain(ast, 3),
            QueryType::Cp2 => is_qual_chain(ast, 2),
            QueryType::Cp3 => is_qual_chain(ast, 3),
            QueryType::I2 => match ast {
                QueryAst::And(cs) => cs.len() == 2 && cs.iter().all(|c| is_leaf(c, true)),
                _ => false,
            },
            QueryType::I3 => match ast {
                QueryAst::And(cs) => cs.len() == 3 && cs.iter().all(|c| is_leaf(c, true)),
                _ => false,
            },
            QueryType::U2 => match ast {
                QueryAst::Or(cs) => cs.len() == 2 && cs.iter().all(|c| is_leaf(c, true)),
                _ => false,
            },
            QueryType::Pi => match ast {
                QueryAst::And(cs) => {
                    cs.len() == 2
                        && cs.iter().any(|c| is_main_chain(c, 2))
                        && cs.iter().any(|c| is_leaf(c, true))
                }
                _ => false,
            },
            QueryType::Ip => final_hop_over(ast, |inner| {
                matches!(inner, QueryAst::And(cs)
                    if cs.len() == 2 && cs.iter().all(|c| is_leaf(c, true)))
            }),
            QueryType::Up => final_hop_over(ast, |inner| {
                matches!(inner, QueryAst::Or(cs)
                    if cs.len() == 2 && cs.iter().all(|c| is_leaf(c, true)))
            }),
            QueryType::In2 => match ast {
                QueryAst::And(cs) if cs.len() == 2 => {
                    let (pos, neg) = split_negated(cs);
                    pos.len() == 1
                        && neg.len() == 1
                        && is_leaf(pos[0], true)
                        && is_leaf(neg[0], true)
                }
                _ => false,
            },
            QueryType::In3 => match ast {
                QueryAst::And(cs) if cs.len() == 3 => {
                    let (pos, neg) = split_negated(cs);
                    pos.len() == 2
                        && neg.len() == 1
                        && pos.iter().all(|c| is_leaf(c, true))
                        && is_leaf(neg[0], true)
                }
                _ => false,
            },
            QueryType::Inp => final_hop_over(ast, |inner| match inner {
                QueryAst::And(cs) if cs.len() == 2 => {
                    let (pos, neg) = split_negated(cs);
                    pos.len() == 1
                        && neg.len() == 1
                        && is_leaf(pos[0], true)
                        && is_leaf(neg[0], true)
                }
                _ => false,
            }),
            QueryType::Pin => match ast {
                QueryAst::And(cs) if cs.len() == 2 => {
                    let (pos, neg) = split_negated(cs);
                    pos.len() == 1
                        && neg.len() == 1
                        && is_main_chain(pos[0], 2)
                        && is_leaf(neg[0], true)
                }
                _ => false,
            },
            QueryType::Pni => match ast {
                QueryAst::And(cs) if cs.len() == 2 => {
                    let (pos, neg) = split_negated(cs);
                    pos.len() == 1
                        && neg.len() == 1
                        && is_leaf(pos[0], true)
                        && is_main_chain(neg[0], 2)
                }
                _ => false,
            },
        }
    }
}

/// Root projection with exactly one var slot (on the main triple) whose
/// child satisfies `inner`.
fn final_hop_over(ast: &QueryAst, inner: impl Fn(&QueryAst) -> bool) -> bool {
    match ast {
        QueryAst::Projection(p) => {
            if !main_positions(p) {
                return false;
            }
            let vars: Vec<&QueryAst> = p.var_slots().map(|(_, c)| c).collect();
            vars.len() == 1 && inner(vars[0])
        }
        _ => false,
    }
}
