//! JSON parameter checkpoints.
//!
//! Layout (version 1):
//!
//! ```json
//! {"format":"pamt-classifier","version":1,
//!  "tensors":[{"name":"w1","shape":[d,f],"values":[...]},
//!             {"name":"b1","shape":[f],"values":[...]},
//!             {"name":"w2","shape":[f,c],"values":[...]},
//!             {"name":"b2","shape":[c],"values":[...]}]}
//! ```
//!
//! Matrices are row-major. Values are written with shortest round-trip
//! formatting so a save/load cycle is lossless.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ClassifierParams;
use crate::error::{Error, Result};
use crate::sparse::DenseMatrix;

pub const CHECKPOINT_FORMAT: &str = "pamt-classifier";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    tensors: Vec<Tensor>,
}

pub fn save_checkpoint(p: &ClassifierParams, path: &Path) -> Result<()> {
    let (d, f, c) = (p.input_dim(), p.hidden_dim(), p.num_classes());
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        tensors: vec![
            Tensor {
                name: "w1".into(),
                shape: vec![d, f],
                values: p.w1.as_slice().to_vec(),
            },
            Tensor {
                name: "b1".into(),
                shape: vec![f],
                values: p.b1.clone(),
            },
            Tensor {
                name: "w2".into(),
                shape: vec![f, c],
                values: p.w2.as_slice().to_vec(),
            },
            Tensor {
                name: "b2".into(),
                shape: vec![c],
                values: p.b2.clone(),
            },
        ],
    };
    let text = serde_json::to_string(&ck)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ClassifierParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported checkpoint {} v{}",
            ck.format, ck.version
        )));
    }
    let mut it = ck.tensors.into_iter();
    let mut take = |name: &str, rank: usize| -> Result<Tensor> {
        let t = it
            .next()
            .filter(|t| t.name == name && t.shape.len() == rank)
            .ok_or_else(|| Error::Invalid(format!("checkpoint tensor `{name}` missing or malformed")))?;
        if t.values.len() != t.shape.iter().product::<usize>() {
            return Err(Error::dims(format!("checkpoint tensor `{name}` size")));
        }
        Ok(t)
    };
    let w1 = take("w1", 2)?;
    let b1 = take("b1", 1)?;
    let w2 = take("w2", 2)?;
    let b2 = take("b2", 1)?;
    let p = ClassifierParams {
        w1: DenseMatrix::from_vec(w1.shape[0], w1.shape[1], w1.values)?,
        b1: b1.values,
        w2: DenseMatrix::from_vec(w2.shape[0], w2.shape[1], w2.values)?,
        b2: b2.values,
    };
    p.check_shapes()?;
    Ok(p)
}
