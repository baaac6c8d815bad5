//! Versioned binary snapshot of a graph (magic `NQG1`).
//!
//! Layout: magic, u32 version, symbol tables (length-prefixed UTF-8), then
//! per split a fact count followed by each fact as `arity` plus its
//! alternating id sequence, all little-endian. Snapshots are a reload cache;
//! the JSON-lines source remains authoritative.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{HyperGraph, NAryFact, EntityId, RelationId, Split};
use crate::error::{NqeError, Result};

const MAGIC: &[u8; 4] = b"NQG1";
const VERSION: u32 = 1;

impl HyperGraph {
    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| NqeError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| NqeError::io(path, e);

        w.write_all(MAGIC).map_err(io_err)?;
        w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
        for table in [&self.entities, &self.relations] {
            w.write_all(&(table.len() as u32).to_le_bytes())
                .map_err(io_err)?;
            for label in table.labels() {
                w.write_all(&(label.len() as u32).to_le_bytes())
                    .map_err(io_err)?;
                w.write_all(label.as_bytes()).map_err(io_err)?;
            }
        }
        for split in Split::ALL {
            let facts = self.facts(split);
            w.write_all(&(facts.len() as u32).to_le_bytes())
                .map_err(io_err)?;
            for fact in facts {
                w.write_all(&(fact.arity() as u32).to_le_bytes())
                    .map_err(io_err)?;
                w.write_all(&fact.subject.0.to_le_bytes()).map_err(io_err)?;
                w.write_all(&fact.relation.0.to_le_bytes()).map_err(io_err)?;
                w.write_all(&fact.object.0.to_le_bytes()).map_err(io_err)?;
                for &(a, v) in &fact.qualifiers {
                    w.write_all(&a.0.to_le_bytes()).map_err(io_err)?;
                    w.write_all(&v.0.to_le_bytes()).map_err(io_err)?;
                }
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn load_snapshot(path: impl AsRef<Path>) -> Result<HyperGraph> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| NqeError::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut g = HyperGraph::new();

        let mut magic = [0u8; 4];
        read_exact(&mut r, path, &mut magic)?;
        if &magic != MAGIC {
            return Err(NqeError::Format {
                path: path.to_path_buf(),
                msg: "bad magic, not an NQG1 store".to_string(),
            });
        }
        let version = read_u32(&mut r, path)?;
        if version != VERSION {
            return Err(NqeError::Format {
                path: path.to_path_buf(),
                msg: format!("unsupported store version {version}"),
            });
        }
        for kind in 0..2 {
            let count = read_u32(&mut r, path)? as usize;
            for _ in 0..count {
                let len = read_u32(&mut r, path)? as usize;
                let mut buf = vec![0u8; len];
                read_exact(&mut r, path, &mut buf)?;
                let label = String::from_utf8(buf).map_err(|_| NqeError::Format {
                    path: path.to_path_buf(),
                    msg: "invalid UTF-8 label".to_string(),
                })?;
                if kind == 0 {
                    g.entities.intern(&label);
                } else {
                    g.relations.intern(&label);
                }
            }
        }
        for split in Split::ALL {
            let count = read_u32(&mut r, path)? as usize;
            for _ in 0..count {
                let arity = read_u32(&mut r, path)? as usize;
                if arity < 2 {
                    return Err(NqeError::Format {
                        path: path.to_path_buf(),
                        msg: format!("fact arity {arity} < 2"),
                    });
                }
                let subject = EntityId(read_u32(&mut r, path)?);
                let relation = RelationId(read_u32(&mut r, path)?);
                let object = EntityId(read_u32(&mut r, path)?);
                let mut fact = NAryFact::triple(subject, relation, object);
                for _ in 0..arity - 2 {
                    let a = RelationId(read_u32(&mut r, path)?);
                    let v = EntityId(read_u32(&mut r, path)?);
                    fact.qualifiers.push((a, v));
                }
                g.insert_fact(split, fact);
            }
        }
        Ok(g)
    }
}

fn read_exact(r: &mut impl Read, path: &Path, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| NqeError::io(path, e))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, path, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
