//! Fact file loaders: JSON Lines and tab-separated dumps.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HyperGraph, NAryFact, EntityId, RelationId, Split};
use crate::error::{NqeError, Result};

/// Counts reported by a load: interning and dedup activity plus the
/// oddities we accept (duplicates, reflexive qualifiers).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LoadStats {
    pub lines: usize,
    pub new_entities: usize,
    pub new_relations: usize,
    pub new_facts: usize,
    pub duplicates: usize,
    pub reflexive_qualifiers: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FactLine {
    s: String,
    r: String,
    o: String,
    #[serde(default)]
    quals: Vec<(String, String)>,
}

/// Which on-disk facts format to expect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactsFormat {
    /// `{"s": .., "r": .., "o": .., "quals": [[a, v], ...]}` per line.
    JsonLines,
    /// `s<TAB>r<TAB>o<TAB>a1<TAB>v1<TAB>...` per line.
    Tsv,
    /// Sniff from the first non-empty line (`{` means JSON).
    Auto,
}

impl std::str::FromStr for FactsFormat {
    type Err = NqeError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(FactsFormat::JsonLines),
            "tsv" => Ok(FactsFormat::Tsv),
            "auto" => Ok(FactsFormat::Auto),
            _ => Err(NqeError::Config(format!("unknown facts format `{s}`"))),
        }
    }
}

impl HyperGraph {
    /// Load facts from a file into a split. Blank lines are skipped;
    /// malformed lines abort with their line number; duplicate facts are
    /// skipped and counted.
    pub fn load_facts(
        &mut self,
        path: impl AsRef<Path>,
        split: Split,
        format: FactsFormat,
    ) -> Result<LoadStats> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| NqeError::io(path, e))?;
        let reader = BufReader::new(file);
        let mut stats = LoadStats::default();
        let ents_before = self.entities.len();
        let rels_before = self.relations.len();
        let mut format = format;

        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| NqeError::io(path, e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if format == FactsFormat::Auto {
                format = if trimmed.starts_with('{') {
                    FactsFormat::JsonLines
                } else {
                    FactsFormat::Tsv
                };
            }
            stats.lines += 1;
            let fact = match format {
                FactsFormat::JsonLines => self.parse_json_line(trimmed),
                FactsFormat::Tsv => self.parse_tsv_line(trimmed),
                FactsFormat::Auto => unreachable!(),
            }
            .map_err(|msg| NqeError::MalformedLine {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg,
            })?;
            if fact.qualifiers.iter().any(|&(_, v)| v == fact.subject) {
                stats.reflexive_qualifiers += 1;
            }
            if self.insert_fact(split, fact) {
                stats.new_facts += 1;
            } else {
                stats.duplicates += 1;
            }
        }
        stats.new_entities = self.entities.len() - ents_before;
        stats.new_relations = self.relations.len() - rels_before;
        Ok(stats)
    }

    fn parse_json_line(&mut self, line: &str) -> std::result::Result<NAryFact, String> {
        let parsed: FactLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let subject = EntityId(self.entities.intern(&parsed.s));
        let relation = RelationId(self.relations.intern(&parsed.r));
        let object = EntityId(self.entities.intern(&parsed.o));
        let qualifiers = parsed
            .quals
            .iter()
            .map(|(a, v)| {
                (
                    RelationId(self.relations.intern(a)),
                    EntityId(self.entities.intern(v)),
                )
            })
            .collect();
        Ok(NAryFact {
            subject,
            relation,
            object,
            qualifiers,
        })
    }

    fn parse_tsv_line(&mut self, line: &str) -> std::result::Result<NAryFact, String> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(format!(
                "expected at least 3 tab-separated fields, found {}",
                fields.len()
            ));
        }
        if fields.len() % 2 == 0 {
            return Err(format!(
                "expected an odd field count (s r o + attribute/value pairs), found {}",
                fields.len()
            ));
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err("empty field".to_string());
        }
        let subject = EntityId(self.entities.intern(fields[0]));
        let relation = RelationId(self.relations.intern(fields[1]));
        let object = EntityId(self.entities.intern(fields[2]));
        let qualifiers = fields[3..]
            .chunks(2)
            .map(|pair| {
                (
                    RelationId(self.relations.intern(pair[0])),
                    EntityId(self.entities.intern(pair[1])),
                )
            })
            .collect();
        Ok(NAryFact {
            subject,
            relation,
            object,
            qualifiers,
        })
    }
}
