//! Edge heterogeneity: the 14 edge kinds between positions of an
//! alternating fact sequence (self plus 13 role-pair types, with attribute/
//! value pairs split by same- vs different-qualifier membership). Edge types
//! are symmetric and depend only on slot roles, never absolute positions.

/// Role of a sequence position (0-based index into `[s, r, o, a1, v1, ...]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Subject,
    MainRelation,
    Object,
    /// Attribute of qualifier `k`.
    Attribute(usize),
    /// Value of qualifier `k`.
    Value(usize),
}

impl SlotKind {
    pub fn of(seq_idx: usize) -> SlotKind {
        match seq_idx {
            0 => SlotKind::Subject,
            1 => SlotKind::MainRelation,
            2 => SlotKind::Object,
            i if i % 2 == 1 => SlotKind::Attribute((i - 3) / 2),
            i => SlotKind::Value((i - 4) / 2),
        }
    }
}

/// Node heterogeneity: entity or relation role of a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotRole {
    Entity,
    Relation,
}

impl SlotRole {
    pub fn of(seq_idx: usize) -> SlotRole {
        if seq_idx % 2 == 0 {
            SlotRole::Entity
        } else {
            SlotRole::Relation
        }
    }
}

pub const NUM_EDGE_TYPES: usize = 14;

/// The 14 edge kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum EdgeType {
    SelfLoop = 0,
    SubjRel = 1,
    SubjObj = 2,
    RelObj = 3,
    SubjAttr = 4,
    SubjVal = 5,
    RelAttr = 6,
    RelVal = 7,
    ObjAttr = 8,
    ObjVal = 9,
    AttrAttr = 10,
    ValVal = 11,
    AttrValSame = 12,
    AttrValDiff = 13,
}

/// Edge type between two sequence positions; symmetric in (i, j).
pub fn edge_type(i: usize, j: usize) -> EdgeType {
    use SlotKind::*;
    if i == j {
        return EdgeType::SelfLoop;
    }
    match (SlotKind::of(i), SlotKind::of(j)) {
        (Subject, MainRelation) | (MainRelation, Subject) => EdgeType::SubjRel,
        (Subject, Object) | (Object, Subject) => EdgeType::SubjObj,
        (MainRelation, Object) | (Object, MainRelation) => EdgeType::RelObj,
        (Subject, Attribute(_)) | (Attribute(_), Subject) => EdgeType::SubjAttr,
        (Subject, Value(_)) | (Value(_), Subject) => EdgeType::SubjVal,
        (MainRelation, Attribute(_)) | (Attribute(_), MainRelation) => EdgeType::RelAttr,
        (MainRelation, Value(_)) | (Value(_), MainRelation) => EdgeType::RelVal,
        (Object, Attribute(_)) | (Attribute(_), Object) => EdgeType::ObjAttr,
        (Object, Value(_)) | (Value(_), Object) => EdgeType::ObjVal,
        (Attribute(_), Attribute(_)) => EdgeType::AttrAttr,
        (Value(_), Value(_)) => EdgeType::ValVal,
        (Attribute(a), Value(v)) | (Value(v), Attribute(a)) => {
            if a == v {
                EdgeType::AttrValSame
            } else {
                EdgeType::AttrValDiff
            }
        }
        (Subject, Subject) | (MainRelation, MainRelation) | (Object, Object) => {
            unreachable!("duplicate main-triple roles in one sequence")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triple_sequence_uses_main_edge_types() {
        assert_eq!(edge_type(0, 0), EdgeType::SelfLoop);
        assert_eq!(edge_type(0, 1), EdgeType::SubjRel);
        assert_eq!(edge_type(0, 2), EdgeType::SubjObj);
        assert_eq!(edge_type(1, 2), EdgeType::RelObj);
    }

    #[test]
    fn qualifier_pairs_distinguish_same_and_different() {
        // sequence [s, r, o, a1, v1, a2, v2]
        assert_eq!(edge_type(3, 4), EdgeType::AttrValSame);
        assert_eq!(edge_type(3, 6), EdgeType::AttrValDiff);
        assert_eq!(edge_type(5, 4), EdgeType::AttrValDiff);
        assert_eq!(edge_type(3, 5), EdgeType::AttrAttr);
        assert_eq!(edge_type(4, 6), EdgeType::ValVal);
        assert_eq!(edge_type(0, 3), EdgeType::SubjAttr);
        assert_eq!(edge_type(0, 4), EdgeType::SubjVal);
        assert_eq!(edge_type(1, 3), EdgeType::RelAttr);
        assert_eq!(edge_type(1, 4), EdgeType::RelVal);
        assert_eq!(edge_type(2, 3), EdgeType::ObjAttr);
        assert_eq!(edge_type(2, 4), EdgeType::ObjVal);
    }

    #[test]
    fn edge_types_are_symmetric() {
        let len = 9; // arity 5
        for i in 0..len {
            for j in 0..len {
                assert_eq!(edge_type(i, j), edge_type(j, i), "({i},{j})");
            }
        }
    }

    #[test]
    fn all_fourteen_kinds_appear_by_arity_four() {
        let len = 7;
        let mut seen = [false; NUM_EDGE_TYPES];
        for i in 0..len {
            for j in 0..len {
                seen[edge_type(i, j) as usize] = true;
            }
        }
        assert!(seen.iter().all(|s| *s), "missing edge kinds: {seen:?}");
    }
}
