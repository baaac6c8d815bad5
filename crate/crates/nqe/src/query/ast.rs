//! Query AST: n-ary projections composed with and/or/not.
//!
//! A projection node is one query literal over an n-ary fact skeleton:
//! entity slots (anchor, nested variable, or the produced target) alternating
//! with relations. The produced entity sits at `target_pos` (1 = subject,
//! 2 = object, p >= 3 = value of qualifier p-2). Trees are acyclic by
//! construction, so a variable can never feed its own projection.

use serde_json::{json, Value};

use crate::error::{NqeError, Result};
use crate::store::{EntityId, HyperGraph, RelationId};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryAst {
    Projection(Projection),
    And(Vec<QueryAst>),
    Or(Vec<QueryAst>),
    Not(Box<QueryAst>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Projection {
    /// Entity slots in position order: subject, object, qualifier values.
    pub slots: Vec<EntitySlot>,
    /// Main relation followed by qualifier attributes.
    pub relations: Vec<RelationId>,
    /// 1-based entity position produced by this projection.
    pub target_pos: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EntitySlot {
    Anchor(EntityId),
    Var(Box<QueryAst>),
    Target,
}

impl Projection {
    pub fn arity(&self) -> usize {
        self.slots.len()
    }

    /// Slots holding nested variable queries, with their 1-based positions.
    pub fn var_slots(&self) -> impl Iterator<Item = (usize, &QueryAst)> {
        self.slots.iter().enumerate().filter_map(|(i, s)| match s {
            EntitySlot::Var(child) => Some((i + 1, child.as_ref())),
            _ => None,
        })
    }
}

impl QueryAst {
    pub fn projection(
        slots: Vec<EntitySlot>,
        relations: Vec<RelationId>,
        target_pos: usize,
    ) -> QueryAst {
        QueryAst::Projection(Projection {
            slots,
            relations,
            target_pos,
        })
    }

    /// Structural validation: slot/relation shape, exactly one target per
    /// skeleton at `target_pos`, and logic node arities.
    pub fn validate(&self) -> Result<()> {
        match self {
            QueryAst::Projection(p) => {
                if p.arity() < 2 {
                    return Err(NqeError::InvalidQuery(format!(
                        "projection arity {} < 2",
                        p.arity()
                    )));
                }
                if p.relations.len() + 1 != p.slots.len() {
                    return Err(NqeError::InvalidQuery(format!(
                        "{} relations do not fit {} entity slots",
                        p.relations.len(),
                        p.slots.len()
                    )));
                }
                let targets: Vec<usize> = p
                    .slots
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| matches!(s, EntitySlot::Target))
                    .map(|(i, _)| i + 1)
                    .collect();
                if targets.len() != 1 {
                    return Err(NqeError::InvalidQuery(format!(
                        "projection skeleton has {} targets, expected exactly one",
                        targets.len()
                    )));
                }
                if targets[0] != p.target_pos {
                    return Err(NqeError::InvalidQuery(format!(
                        "target position {} does not match `?` at entity position {}",
                        p.target_pos, targets[0]
                    )));
                }
                for (_, child) in p.var_slots() {
                    child.validate()?;
                }
                Ok(())
            }
            QueryAst::And(children) | QueryAst::Or(children) => {
                if children.len() < 2 {
                    return Err(NqeError::InvalidQuery(
                        "and/or need at least two operands".into(),
                    ));
                }
                children.iter().try_for_each(QueryAst::validate)
            }
            QueryAst::Not(child) => child.validate(),
        }
    }

    /// Anchor entities in depth-first order (variable children before a
    /// projection's own slots contribute theirs first).
    pub fn anchors(&self) -> Vec<EntityId> {
        let mut out = Vec::new();
        self.walk_anchors(&mut out);
        out
    }

    fn walk_anchors(&self, out: &mut Vec<EntityId>) {
        match self {
            QueryAst::Projection(p) => {
                for slot in &p.slots {
                    if let EntitySlot::Var(child) = slot {
                        child.walk_anchors(out);
                    }
                }
                for slot in &p.slots {
                    if let EntitySlot::Anchor(e) = slot {
                        out.push(*e);
                    }
                }
            }
            QueryAst::And(cs) | QueryAst::Or(cs) => cs.iter().for_each(|c| c.walk_anchors(out)),
            QueryAst::Not(c) => c.walk_anchors(out),
        }
    }

    /// Relations in the same depth-first order as [`QueryAst::anchors`].
    pub fn relation_ids(&self) -> Vec<RelationId> {
        let mut out = Vec::new();
        self.walk_relations(&mut out);
        out
    }

    fn walk_relations(&self, out: &mut Vec<RelationId>) {
        match self {
            QueryAst::Projection(p) => {
                for slot in &p.slots {
                    if let EntitySlot::Var(child) = slot {
                        child.walk_relations(out);
                    }
                }
                out.extend(p.relations.iter().copied());
            }
            QueryAst::And(cs) | QueryAst::Or(cs) => {
                cs.iter().for_each(|c| c.walk_relations(out))
            }
            QueryAst::Not(c) => c.walk_relations(out),
        }
    }

    /// Operator nodes: projections plus logic nodes.
    pub fn num_operator_nodes(&self) -> usize {
        match self {
            QueryAst::Projection(p) => {
                1 + p.var_slots().map(|(_, c)| c.num_operator_nodes()).sum::<usize>()
            }
            QueryAst::And(cs) | QueryAst::Or(cs) => {
                1 + cs.iter().map(QueryAst::num_operator_nodes).sum::<usize>()
            }
            QueryAst::Not(c) => 1 + c.num_operator_nodes(),
        }
    }

    /// Number of existentially bound variables (one per `var` slot).
    pub fn num_bound_vars(&self) -> usize {
        match self {
            QueryAst::Projection(p) => p
                .var_slots()
                .map(|(_, c)| 1 + c.num_bound_vars())
                .sum::<usize>(),
            QueryAst::And(cs) | QueryAst::Or(cs) => {
                cs.iter().map(QueryAst::num_bound_vars).sum()
            }
            QueryAst::Not(c) => c.num_bound_vars(),
        }
    }

    // -- serialization --------------------------------------------------

    /// Canonical s-expression form; reparses to an identical AST.
    pub fn to_sexpr(&self, g: &HyperGraph) -> String {
        let mut s = String::new();
        self.write_sexpr(g, &mut s);
        s
    }

    fn write_sexpr(&self, g: &HyperGraph, out: &mut String) {
        match self {
            QueryAst::Projection(p) => {
                out.push_str(&format!("(P {} (f ", p.target_pos));
                for (i, slot) in p.slots.iter().enumerate() {
                    if i > 0 {
                        out.push_str(&format!(
                            "{} ",
                            quote_label(g.relation_label(p.relations[i - 1]))
                        ));
                    }
                    match slot {
                        EntitySlot::Anchor(e) => {
                            out.push_str(&quote_label(g.entity_label(*e)))
                        }
                        EntitySlot::Target => out.push('?'),
                        EntitySlot::Var(child) => {
                            out.push_str("(var ");
                            child.write_sexpr(g, out);
                            out.push(')');
                        }
                    }
                    if i + 1 < p.slots.len() {
                        out.push(' ');
                    }
                }
                out.push_str("))");
            }
            QueryAst::And(cs) | QueryAst::Or(cs) => {
                out.push_str(if matches!(self, QueryAst::And(_)) {
                    "(and"
                } else {
                    "(or"
                });
                for c in cs {
                    out.push(' ');
                    c.write_sexpr(g, out);
                }
                out.push(')');
            }
            QueryAst::Not(c) => {
                out.push_str("(not ");
                c.write_sexpr(g, out);
                out.push(')');
            }
        }
    }

    pub fn to_json(&self, g: &HyperGraph) -> Value {
        match self {
            QueryAst::Projection(p) => {
                let slots: Vec<Value> = p
                    .slots
                    .iter()
                    .map(|s| match s {
                        EntitySlot::Anchor(e) => json!({ "anchor": g.entity_label(*e) }),
                        EntitySlot::Target => json!("target"),
                        EntitySlot::Var(c) => json!({ "var": c.to_json(g) }),
                    })
                    .collect();
                let relations: Vec<&str> = p
                    .relations
                    .iter()
                    .map(|r| g.relation_label(*r))
                    .collect();
                json!({
                    "op": "proj",
                    "target": p.target_pos,
                    "slots": slots,
                    "relations": relations,
                })
            }
            QueryAst::And(cs) => json!({
                "op": "and",
                "args": cs.iter().map(|c| c.to_json(g)).collect::<Vec<_>>(),
            }),
            QueryAst::Or(cs) => json!({
                "op": "or",
                "args": cs.iter().map(|c| c.to_json(g)).collect::<Vec<_>>(),
            }),
            QueryAst::Not(c) => json!({ "op": "not", "arg": c.to_json(g) }),
        }
    }

    pub fn from_json(v: &Value, g: &HyperGraph) -> Result<QueryAst> {
        let bad = |msg: &str| NqeError::InvalidQuery(format!("query json: {msg}"));
        let obj = v.as_object().ok_or_else(|| bad("expected object"))?;
        let op = obj
            .get("op")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing op"))?;
        let ast = match op {
            "proj" => {
                let target = obj
                    .get("target")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| bad("missing target"))? as usize;
                let relations = obj
                    .get("relations")
                    .and_then(Value::as_array)
                    .ok_or_else(|| bad("missing relations"))?
                    .iter()
                    .map(|r| {
                        g.relation(r.as_str().ok_or_else(|| bad("relation not a string"))?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let slots = obj
                    .get("slots")
                    .and_then(Value::as_array)
                    .ok_or_else(|| bad("missing slots"))?
                    .iter()
                    .map(|s| -> Result<EntitySlot> {
                        if s.as_str() == Some("target") {
                            Ok(EntitySlot::Target)
                        } else if let Some(label) = s.get("anchor").and_then(Value::as_str) {
                            Ok(EntitySlot::Anchor(g.entity(label)?))
                        } else if let Some(child) = s.get("var") {
                            Ok(EntitySlot::Var(Box::new(QueryAst::from_json(child, g)?)))
                        } else {
                            Err(bad("unrecognized slot"))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                QueryAst::projection(slots, relations, target)
            }
            "and" | "or" => {
                let args = obj
                    .get("args")
                    .and_then(Value::as_array)
                    .ok_or_else(|| bad("missing args"))?
                    .iter()
                    .map(|c| QueryAst::from_json(c, g))
                    .collect::<Result<Vec<_>>>()?;
                if op == "and" {
                    QueryAst::And(args)
                } else {
                    QueryAst::Or(args)
                }
            }
            "not" => QueryAst::Not(Box::new(QueryAst::from_json(
                obj.get("arg").ok_or_else(|| bad("missing arg"))?,
                g,
            )?)),
            other => return Err(bad(&format!("unknown op `{other}`"))),
        };
        ast.validate()?;
        Ok(ast)
    }
}

pub(crate) fn quote_label(label: &str) -> String {
    let needs_quotes = label.is_empty()
        || label == "?"
        || label
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | '"'));
    if needs_quotes {
        let escaped: String = label
            .chars()
            .flat_map(|c| match c {
                '"' | '\\' => vec!['\\', c],
                _ => vec![c],
            })
            .collect();
        format!("\"{escaped}\"")
    } else {
        label.to_string()
    }
}

/// The 16 query type tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[allow(non_camel_case_types)]
pub enum QueryType {
    P1,
    P2,
    P3,
    I2,
    I3,
    Pi,
    Ip,
    U2,
    Up,
    Cp2,
    Cp3,
    In2,
    In3,
    Inp,
    Pin,
    Pni,
}

impl QueryType {
    pub const ALL: [QueryType; 16] = [
        QueryType::P1,
        QueryType::P2,
        QueryType::P3,
        QueryType::I2,
        QueryType::I3,
        QueryType::Pi,
        QueryType::Ip,
        QueryType::U2,
        QueryType::Up,
        QueryType::Cp2,
        QueryType::Cp3,
        QueryType::In2,
        QueryType::In3,
        QueryType::Inp,
        QueryType::Pin,
        QueryType::Pni,
    ];

    /// Existential-positive types (the AVG_p group).
    pub const EPFO: [QueryType; 11] = [
        QueryType::P1,
        QueryType::P2,
        QueryType::P3,
        QueryType::I2,
        QueryType::I3,
        QueryType::Pi,
        QueryType::Ip,
        QueryType::U2,
        QueryType::Up,
        QueryType::Cp2,
        QueryType::Cp3,
    ];

    /// Types with negation (the AVG_n group).
    pub const NEGATION: [QueryType; 5] = [
        QueryType::In2,
        QueryType::In3,
        QueryType::Inp,
        QueryType::Pin,
        QueryType::Pni,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            QueryType::P1 => "1p",
            QueryType::P2 => "2p",
            QueryType::P3 => "3p",
            QueryType::I2 => "2i",
            QueryType::I3 => "3i",
            QueryType::Pi => "pi",
            QueryType::Ip => "ip",
            QueryType::U2 => "2u",
            QueryType::Up => "up",
            QueryType::Cp2 => "2cp",
            QueryType::Cp3 => "3cp",
            QueryType::In2 => "2in",
            QueryType::In3 => "3in",
            QueryType::Inp => "inp",
            QueryType::Pin => "pin",
            QueryType::Pni => "pni",
        }
    }

    pub fn has_negation(self) -> bool {
        QueryType::NEGATION.contains(&self)
    }
}

impl std::str::FromStr for QueryType {
    type Err = NqeError;
    fn from_str(s: &str) -> Result<Self> {
        QueryType::ALL
            .into_iter()
            .find(|t| t.tag() == s)
            .ok_or_else(|| NqeError::Config(format!("unknown query type `{s}`")))
    }
}

impl std::fmt::Display for QueryType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}
