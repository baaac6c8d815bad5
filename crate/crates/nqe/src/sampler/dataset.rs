//! Dataset generation: per-item derived seeds, JSON-lines output per split,
//! and a manifest tying the files to the source graph.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{mix, sample_query, GroundedQuery};
use crate::error::{NqeError, Result};
use crate::executor::AnswerSet;
use crate::query::{QueryAst, QueryType};
use crate::store::{HyperGraph, Split};

/// Requested query counts per (split, type).
#[derive(Debug, Clone, Default)]
pub struct DatasetCounts(pub BTreeMap<(Split, QueryType), usize>);

impl DatasetCounts {
    pub fn set(&mut self, split: Split, qtype: QueryType, count: usize) {
        self.0.insert((split, qtype), count);
    }

    pub fn same_for_all_splits(per_type: &[(QueryType, usize)]) -> Self {
        let mut counts = DatasetCounts::default();
        for split in Split::ALL {
            for &(t, c) in per_type {
                counts.set(split, t, c);
            }
        }
        counts
    }

    /// Parse a spec like `1p=100,2i=50` (all splits) or `train/1p=100`
    /// (one split); `all=N` expands to every type.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut counts = DatasetCounts::default();
        for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
            let part = part.trim();
            let (lhs, count) = part.split_once('=').ok_or_else(|| {
                NqeError::Config(format!("count spec `{part}` is not `type=count`"))
            })?;
            let count: usize = count
                .parse()
                .map_err(|_| NqeError::Config(format!("bad count in `{part}`")))?;
            let (splits, type_text): (Vec<Split>, &str) = match lhs.split_once('/') {
                Some((split, t)) => (vec![split.parse()?], t),
                None => (Split::ALL.to_vec(), lhs),
            };
            let types: Vec<QueryType> = if type_text == "all" {
                QueryType::ALL.to_vec()
            } else {
                vec![type_text.parse()?]
            };
            for split in splits {
                for t in &types {
                    counts.set(split, *t, count);
                }
            }
        }
        Ok(counts)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq, Eq)]
pub struct TypeCount {
    pub requested: usize,
    pub generated: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq, Eq)]
pub struct SplitManifest {
    pub file: String,
    pub types: BTreeMap<String, TypeCount>,
}

/// One JSON document describing a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct DatasetManifest {
    pub seed: u64,
    pub graph_digest: String,
    pub splits: BTreeMap<String, SplitManifest>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| NqeError::io(path, e))?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| NqeError::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn total_failed(&self) -> usize {
        self.splits
            .values()
            .flat_map(|s| s.types.values())
            .map(|t| t.failed)
            .sum()
    }
}

/// Generate a dataset into `out_dir`: one `queries_<split>.jsonl` per split
/// plus `manifest.json`. Item seeds derive from `(seed, split, type, index)`
/// so generation order and parallelism cannot change the output. Items that
/// exhaust their retry budget are reported in the manifest and skipped;
/// structural impossibilities (a chained-qualifier type on a binary-only
/// graph) abort.
pub fn generate_dataset(
    g: &HyperGraph,
    counts: &DatasetCounts,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| NqeError::io(out_dir, e))?;

    let mut manifest = DatasetManifest {
        seed,
        graph_digest: g.digest(),
        splits: BTreeMap::new(),
    };

    for split in Split::ALL {
        let file_name = format!("queries_{split}.jsonl");
        let mut split_manifest = SplitManifest {
            file: file_name.clone(),
            types: BTreeMap::new(),
        };

        let mut items: Vec<(QueryType, usize, u64)> = Vec::new();
        for (&(s, qtype), &count) in &counts.0 {
            if s != split {
                continue;
            }
            split_manifest
                .types
                .insert(qtype.tag().to_string(), TypeCount {
                    requested: count,
                    ..TypeCount::default()
                });
            let type_idx = QueryType::ALL.iter().position(|t| *t == qtype).unwrap();
            for index in 0..count {
                let item_seed = mix(
                    mix(seed ^ 0x9e37_79b9_7f4a_7c15)
                        ^ ((split.index() as u64) << 48)
                        ^ ((type_idx as u64) << 40)
                        ^ index as u64,
                );
                items.push((qtype, index, item_seed));
            }
        }

        let results: Vec<std::result::Result<GroundedQuery, NqeError>> = items
            .par_iter()
            .map(|&(qtype, _index, item_seed)| {
                let mut last_err = None;
                for attempt in 0..4u64 {
                    match sample_query(qtype, g, split, mix(item_seed ^ attempt)) {
                        Ok(q) => return Ok(q),
                        Err(e @ NqeError::Arity(_)) => return Err(e),
                        Err(e) => last_err = Some(e),
                    }
                }
                Err(last_err.unwrap())
            })
            .collect();

        let path = out_dir.join(&file_name);
        let file = File::create(&path).map_err(|e| NqeError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for ((qtype, _, _), result) in items.iter().zip(results) {
            let entry = split_manifest.types.get_mut(qtype.tag()).unwrap();
            match result {
                Ok(q) => {
                    entry.generated += 1;
                    let line = serde_json::to_string(&grounded_to_json(&q, g)).unwrap();
                    writeln!(w, "{line}").map_err(|e| NqeError::io(&path, e))?;
                }
                Err(e @ NqeError::Arity(_)) => return Err(e),
                Err(_) => entry.failed += 1,
            }
        }
        w.flush().map_err(|e| NqeError::io(&path, e))?;
        manifest.splits.insert(split.name().to_string(), split_manifest);
    }

    let manifest_path = out_dir.join("manifest.json");
    let file = File::create(&manifest_path).map_err(|e| NqeError::io(&manifest_path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest).map_err(|e| {
        NqeError::Format {
            path: manifest_path.clone(),
            msg: e.to_string(),
        }
    })?;
    Ok(manifest)
}

fn grounded_to_json(q: &GroundedQuery, g: &HyperGraph) -> serde_json::Value {
    let labels = |set: &AnswerSet| -> Vec<&str> {
        set.iter().map(|e| g.entity_label(e)).collect()
    };
    json!({
        "type": q.query_type.tag(),
        "ast": q.ast.to_json(g),
        "anchors": q.ast.anchors().iter().map(|e| g.entity_label(*e)).collect::<Vec<_>>(),
        "relations": q.ast.relation_ids().iter().map(|r| g.relation_label(*r)).collect::<Vec<_>>(),
        "easy": labels(&q.easy),
        "hard": labels(&q.hard),
        "seed": q.seed,
    })
}

fn grounded_from_json(v: &serde_json::Value, g: &HyperGraph) -> Result<GroundedQuery> {
    let bad = |msg: &str| NqeError::InvalidQuery(format!("query record: {msg}"));
    let qtype: QueryType = v
        .get("type")
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| bad("missing type"))?
        .parse()?;
    let ast = QueryAst::from_json(v.get("ast").ok_or_else(|| bad("missing ast"))?, g)?;
    let parse_set = |key: &str| -> Result<AnswerSet> {
        v.get(key)
            .and_then(serde_json::Value::as_array)
            .ok_or_else(|| bad(&format!("missing {key}")))?
            .iter()
            .map(|e| g.entity(e.as_str().ok_or_else(|| bad("label not a string"))?))
            .collect()
    };
    Ok(GroundedQuery {
        query_type: qtype,
        ast,
        easy: parse_set("easy")?,
        hard: parse_set("hard")?,
        seed: v.get("seed").and_then(serde_json::Value::as_u64).unwrap_or(0),
    })
}

/// Write grounded queries as JSON lines.
pub fn write_queries(
    path: impl AsRef<Path>,
    queries: &[GroundedQuery],
    g: &HyperGraph,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| NqeError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for q in queries {
        let line = serde_json::to_string(&grounded_to_json(q, g)).unwrap();
        writeln!(w, "{line}").map_err(|e| NqeError::io(path, e))?;
    }
    w.flush().map_err(|e| NqeError::io(path, e))
}

/// Read grounded queries from JSON lines, resolving labels against `g`.
pub fn read_queries(path: impl AsRef<Path>, g: &HyperGraph) -> Result<Vec<GroundedQuery>> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(|e| NqeError::io(&path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| NqeError::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| NqeError::MalformedLine {
                path: path.clone(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        out.push(grounded_from_json(&v, g)?);
    }
    Ok(out)
}
