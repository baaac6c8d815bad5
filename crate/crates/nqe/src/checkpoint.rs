//! Model checkpoints (magic `NQE1`): a JSON header describing config,
//! shapes, and RNG state, followed by raw little-endian f64 tensors in
//! header-declared order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, ModelParams};
use crate::error::{NqeError, Result};

const MAGIC: &[u8; 4] = b"NQE1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: EncoderConfig,
    num_entities: usize,
    num_relations: usize,
    rng_seed: u64,
    rng_word_pos: String,
    tensors: Vec<TensorMeta>,
}

/// A trained model plus the training RNG state it finished with.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub rng_seed: u64,
    pub rng_word_pos: u128,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &ModelParams,
    rng_seed: u64,
    rng_word_pos: u128,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| NqeError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| NqeError::io(path, e);

    let tensors = params.tensors();
    let header = Header {
        version: 1,
        config: params.config.clone(),
        num_entities: params.num_entities,
        num_relations: params.num_relations,
        rng_seed,
        rng_word_pos: rng_word_pos.to_string(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorMeta {
                name: name.clone(),
                rows: t.rows,
                cols: t.cols,
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&(header_json.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&header_json).map_err(io_err)?;
    for (_, t) in tensors {
        for v in &t.data {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| NqeError::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |msg: String| NqeError::Format {
        path: path.to_path_buf(),
        msg,
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| NqeError::io(path, e))?;
    if &magic != MAGIC {
        return Err(bad("bad magic, not an NQE1 checkpoint".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|e| NqeError::io(path, e))?;
    let mut header_json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut header_json)
        .map_err(|e| NqeError::io(path, e))?;
    let header: Header =
        serde_json::from_slice(&header_json).map_err(|e| bad(format!("bad header: {e}")))?;
    if header.version != 1 {
        return Err(bad(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }

    let mut params = ModelParams::init(
        header.config.clone(),
        header.num_entities,
        header.num_relations,
        0,
    )?;
    {
        let expected: Vec<(String, (usize, usize))> = params
            .tensors()
            .iter()
            .map(|(name, t)| (name.clone(), (t.rows, t.cols)))
            .collect();
        if expected.len() != header.tensors.len() {
            return Err(bad(format!(
                "tensor count {} does not match config ({})",
                header.tensors.len(),
                expected.len()
            )));
        }
        for ((name, shape), meta) in expected.iter().zip(&header.tensors) {
            if name != &meta.name || *shape != (meta.rows, meta.cols) {
                return Err(bad(format!(
                    "tensor {} ({}x{}) does not match expected {name} ({}x{})",
                    meta.name, meta.rows, meta.cols, shape.0, shape.1
                )));
            }
        }
    }
    for tensor in params.tensors_mut() {
        let mut buf = [0u8; 8];
        for v in tensor.data.iter_mut() {
            r.read_exact(&mut buf).map_err(|e| NqeError::io(path, e))?;
            *v = f64::from_le_bytes(buf);
        }
    }
    let rng_word_pos: u128 = header
        .rng_word_pos
        .parse()
        .map_err(|_| bad("bad rng word position".into()))?;
    Ok(Checkpoint {
        params,
        rng_seed: header.rng_seed,
        rng_word_pos,
    })
}
