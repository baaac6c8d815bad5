//! In-memory hyper-relational knowledge graph.
//!
//! A graph holds interned entity/relation symbols and per-split fact lists
//! (train/valid/test). Facts are immutable once loaded; a pattern index
//! answers "fact with one missing entity position" lookups in O(1), which is
//! the hot operation for both the symbolic executor and the query sampler.

mod load;
mod snapshot;

pub use load::LoadStats;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NqeError, Result};

/// Sentinel id marking the hole in a pattern key.
const HOLE: u32 = u32::MAX;

// ---------------------------------------------------------------------------
// Identifiers and symbol tables
// ---------------------------------------------------------------------------

/// Dense entity identifier; labels live in the graph's symbol table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

/// Dense relation identifier (main relations and qualifier attributes share
/// the same space).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

/// Bijective label <-> dense id mapping.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl SymbolTable {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Intern a label, returning its id (existing or freshly assigned).
    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        id
    }

    /// Resolve a label without interning.
    pub fn get(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: u32) -> &str {
        &self.labels[id as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

// ---------------------------------------------------------------------------
// Facts
// ---------------------------------------------------------------------------

/// One hyper-relational fact: a main triple plus qualifier pairs.
///
/// Arity `n = 2 + #qualifiers`; the fact covers `n` entities and `n-1`
/// relations. Qualifiers keep file order; canonical keys sort them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NAryFact {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub qualifiers: Vec<(RelationId, EntityId)>,
}

impl NAryFact {
    pub fn triple(subject: EntityId, relation: RelationId, object: EntityId) -> Self {
        NAryFact {
            subject,
            relation,
            object,
            qualifiers: Vec::new(),
        }
    }

    /// Number of entities in the fact (>= 2).
    pub fn arity(&self) -> usize {
        2 + self.qualifiers.len()
    }

    /// Entity at 1-based position `p` (1 = subject, 2 = object, p >= 3 =
    /// qualifier value `p-2`).
    pub fn entity_at(&self, p: usize) -> Option<EntityId> {
        match p {
            1 => Some(self.subject),
            2 => Some(self.object),
            _ if p >= 3 && p <= self.arity() => Some(self.qualifiers[p - 3].1),
            _ => None,
        }
    }

    /// Replace the entity at 1-based position `p`.
    pub fn with_entity_at(&self, p: usize, e: EntityId) -> NAryFact {
        let mut f = self.clone();
        match p {
            1 => f.subject = e,
            2 => f.object = e,
            _ => f.qualifiers[p - 3].1 = e,
        }
        f
    }

    /// Copy with qualifiers sorted by (attribute id, value id).
    pub fn canonical(&self) -> NAryFact {
        let mut f = self.clone();
        f.qualifiers.sort_by_key(|&(a, v)| (a.0, v.0));
        f
    }

    fn canonical_key(&self) -> Box<[u32]> {
        sequence_ids(&self.canonical()).into_boxed_slice()
    }

    /// Canonical pattern key: qualifiers sorted with the holed value treated
    /// as the largest id, then the sequence with a sentinel at the hole.
    fn pattern_key(&self, hole_pos: usize) -> Box<[u32]> {
        let mut quals: Vec<(u32, u32)> = self
            .qualifiers
            .iter()
            .enumerate()
            .map(|(k, &(a, v))| (a.0, if hole_pos == k + 3 { HOLE } else { v.0 }))
            .collect();
        quals.sort_unstable();
        let mut seq = Vec::with_capacity(2 * self.arity() - 1);
        seq.push(if hole_pos == 1 { HOLE } else { self.subject.0 });
        seq.push(self.relation.0);
        seq.push(if hole_pos == 2 { HOLE } else { self.object.0 });
        for (a, v) in quals {
            seq.push(a);
            seq.push(v);
        }
        seq.into_boxed_slice()
    }
}

/// Alternating sequence `[e1, r1, e2, r2, e3, ..., r(n-1), en]` of length
/// `2n-1`: entities at odd 1-based positions, relations at even ones.
pub fn sequence_of(f: &NAryFact) -> Vec<SeqElem> {
    let mut seq = Vec::with_capacity(2 * f.arity() - 1);
    seq.push(SeqElem::Entity(f.subject));
    seq.push(SeqElem::Relation(f.relation));
    seq.push(SeqElem::Entity(f.object));
    for &(a, v) in &f.qualifiers {
        seq.push(SeqElem::Relation(a));
        seq.push(SeqElem::Entity(v));
    }
    seq
}

/// Inverse of [`sequence_of`].
pub fn fact_from_sequence(seq: &[SeqElem]) -> Result<NAryFact> {
    if seq.len() < 3 || seq.len() % 2 == 0 {
        return Err(NqeError::Arity(format!(
            "sequence length {} is not of the form 2n-1 with n >= 2",
            seq.len()
        )));
    }
    let ent = |i: usize| -> Result<EntityId> {
        match seq[i] {
            SeqElem::Entity(e) => Ok(e),
            SeqElem::Relation(_) => Err(NqeError::Arity(format!(
                "expected entity at sequence index {i}"
            ))),
        }
    };
    let rel = |i: usize| -> Result<RelationId> {
        match seq[i] {
            SeqElem::Relation(r) => Ok(r),
            SeqElem::Entity(_) => Err(NqeError::Arity(format!(
                "expected relation at sequence index {i}"
            ))),
        }
    };
    let mut fact = NAryFact::triple(ent(0)?, rel(1)?, ent(2)?);
    let mut i = 3;
    while i < seq.len() {
        fact.qualifiers.push((rel(i)?, ent(i + 1)?));
        i += 2;
    }
    Ok(fact)
}

/// One element of the alternating sequence form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqElem {
    Entity(EntityId),
    Relation(RelationId),
}

fn sequence_ids(f: &NAryFact) -> Vec<u32> {
    sequence_of(f)
        .iter()
        .map(|e| match e {
            SeqElem::Entity(EntityId(id)) => *id,
            SeqElem::Relation(RelationId(id)) => *id,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn index(self) -> usize {
        match self {
            Split::Train => 0,
            Split::Valid => 1,
            Split::Test => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = NqeError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(NqeError::Config(format!("unknown split `{s}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A set of splits, used to scope fact lookups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope(u8);

impl Scope {
    pub const TRAIN: Scope = Scope(1);
    pub const TRAIN_VALID: Scope = Scope(3);
    pub const ALL: Scope = Scope(7);

    pub fn of(splits: &[Split]) -> Scope {
        Scope(splits.iter().fold(0, |b, s| b | (1 << s.index())))
    }

    pub fn contains(self, split: Split) -> bool {
        self.0 & (1 << split.index()) != 0
    }

    pub fn splits(self) -> impl Iterator<Item = Split> {
        Split::ALL.into_iter().filter(move |s| self.contains(*s))
    }
}

impl std::str::FromStr for Scope {
    type Err = NqeError;
    fn from_str(s: &str) -> Result<Self> {
        let mut scope = Scope(0);
        for part in s.split(',') {
            let split: Split = part.trim().parse()?;
            scope.0 |= 1 << split.index();
        }
        if scope.0 == 0 {
            return Err(NqeError::Config("empty scope".into()));
        }
        Ok(scope)
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.splits().map(|s| s.name()).collect();
        f.write_str(&names.join(","))
    }
}

// ---------------------------------------------------------------------------
// The graph
// ---------------------------------------------------------------------------

/// Immutable-after-load hyper-relational knowledge graph.
#[derive(Clone)]
pub struct HyperGraph {
    pub entities: SymbolTable,
    pub relations: SymbolTable,
    facts: [Vec<NAryFact>; 3],
    dedup: [std::collections::HashSet<Box<[u32]>>; 3],
    pattern_index: [HashMap<Box<[u32]>, Vec<EntityId>>; 3],
    /// Per split: entity id -> list of (fact index, 1-based entity position).
    occurrences: [Vec<Vec<(u32, u8)>>; 3],
}

impl Default for HyperGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for HyperGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HyperGraph")
            .field("entities", &self.entities.len())
            .field("relations", &self.relations.len())
            .field("train", &self.facts[0])
            .field("valid", &self.facts[1])
            .field("test", &self.facts[2])
            .finish()
    }
}

impl HyperGraph {
    pub fn new() -> Self {
        HyperGraph {
            entities: SymbolTable::default(),
            relations: SymbolTable::default(),
            facts: Default::default(),
            dedup: Default::default(),
            pattern_index: Default::default(),
            occurrences: Default::default(),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn facts(&self, split: Split) -> &[NAryFact] {
        &self.facts[split.index()]
    }

    pub fn num_facts(&self, scope: Scope) -> usize {
        scope.splits().map(|s| self.facts(s).len()).sum()
    }

    /// Resolve an entity label, erroring on unknown labels (query-time ids
    /// are never invented silently).
    pub fn entity(&self, label: &str) -> Result<EntityId> {
        self.entities
            .get(label)
            .map(EntityId)
            .ok_or_else(|| NqeError::UnknownLabel {
                kind: "entity",
                label: label.to_string(),
            })
    }

    pub fn relation(&self, label: &str) -> Result<RelationId> {
        self.relations
            .get(label)
            .map(RelationId)
            .ok_or_else(|| NqeError::UnknownLabel {
                kind: "relation",
                label: label.to_string(),
            })
    }

    pub fn entity_label(&self, id: EntityId) -> &str {
        self.entities.label(id.0)
    }

    pub fn relation_label(&self, id: RelationId) -> &str {
        self.relations.label(id.0)
    }

    /// Insert one fact into a split. Returns false for duplicates (by
    /// canonical key, qualifiers treated as a set).
    pub fn insert_fact(&mut self, split: Split, fact: NAryFact) -> bool {
        let key = fact.canonical_key();
        let si = split.index();
        if !self.dedup[si].insert(key) {
            return false;
        }
        let fact_idx = self.facts[si].len() as u32;
        for p in 1..=fact.arity() {
            let key = fact.pattern_key(p);
            let e = fact.entity_at(p).unwrap();
            let bucket = self.pattern_index[si].entry(key).or_default();
            if !bucket.contains(&e) {
                bucket.push(e);
            }
            let occ = &mut self.occurrences[si];
            if occ.len() <= e.0 as usize {
                occ.resize(e.0 as usize + 1, Vec::new());
            }
            occ[e.0 as usize].push((fact_idx, p as u8));
        }
        self.facts[si].push(fact);
        true
    }

    /// All entities of the graph.
    pub fn all_entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entities.len() as u32).map(EntityId)
    }

    /// Entities that substituted at 1-based position `hole_pos` of `fact`
    /// complete it to a fact stored in `scope`.
    pub fn match_pattern(
        &self,
        scope: Scope,
        fact: &NAryFact,
        hole_pos: usize,
    ) -> Result<BTreeSet<EntityId>> {
        if hole_pos == 0 || hole_pos > fact.arity() {
            return Err(NqeError::Pattern(format!(
                "hole position {hole_pos} out of range for arity {}",
                fact.arity()
            )));
        }
        let key = fact.pattern_key(hole_pos);
        let mut out = BTreeSet::new();
        for split in scope.splits() {
            if let Some(bucket) = self.pattern_index[split.index()].get(&key) {
                out.extend(bucket.iter().copied());
            }
        }
        Ok(out)
    }

    /// Sequence-level pattern entry point: exactly one hole, at an entity
    /// position.
    pub fn match_sequence_pattern(
        &self,
        scope: Scope,
        pattern: &[PatternSlot],
    ) -> Result<BTreeSet<EntityId>> {
        let holes: Vec<usize> = pattern
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, PatternSlot::Hole))
            .map(|(i, _)| i)
            .collect();
        if holes.len() != 1 {
            return Err(NqeError::Pattern(format!(
                "pattern must contain exactly one hole, found {}",
                holes.len()
            )));
        }
        if holes[0] % 2 == 1 {
            return Err(NqeError::Pattern(
                "hole at a relation position".to_string(),
            ));
        }
        let seq: Vec<SeqElem> = pattern
            .iter()
            .map(|s| match s {
                PatternSlot::Entity(e) => SeqElem::Entity(*e),
                PatternSlot::Relation(r) => SeqElem::Relation(*r),
                PatternSlot::Hole => SeqElem::Entity(EntityId(HOLE)),
            })
            .collect();
        let fact = fact_from_sequence(&seq)?;
        let hole_pos = holes[0] / 2 + 1;
        self.match_pattern(scope, &fact, hole_pos)
    }

    /// Occurrences of an entity in a split: (fact index, 1-based entity
    /// position) pairs.
    pub fn occurrences(&self, split: Split, e: EntityId) -> &[(u32, u8)] {
        self.occurrences[split.index()]
            .get(e.0 as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// SHA-256 over the canonical serialization (symbols plus per-split fact
    /// sequences); identifies a graph in dataset manifests.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for label in self.entities.labels() {
            h.update((label.len() as u32).to_le_bytes());
            h.update(label.as_bytes());
        }
        h.update([0xff]);
        for label in self.relations.labels() {
            h.update((label.len() as u32).to_le_bytes());
            h.update(label.as_bytes());
        }
        for split in Split::ALL {
            h.update([0xfe]);
            for fact in self.facts(split) {
                let seq = sequence_ids(fact);
                h.update((seq.len() as u32).to_le_bytes());
                for id in seq {
                    h.update(id.to_le_bytes());
                }
            }
        }
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Slot of a sequence-level pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternSlot {
    Entity(EntityId),
    Relation(RelationId),
    Hole,
}

#[cfg(test)]
mod tests;
