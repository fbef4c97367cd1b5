//! Model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content                                        |
//! |-------|------------------------------------------------|
//! | 8     | magic `EXALCKPT`                               |
//! | 4     | format version (`u32`)                         |
//! | 1     | model kind: 0 linear, 1 one-hidden-layer MLP   |
//! | 1     | head kind: 0 Bernoulli, 1 categorical          |
//! | 4     | head width (`u32`)                             |
//! | 4     | input dimension (`u32`)                        |
//! | 4     | hidden width (`u32`, 0 for linear)             |
//! | 8     | parameter count (`u64`)                        |
//! | 8·k   | parameters (`f64`)                             |

use thiserror::Error;

use super::model::{AnyModel, Head, LinearSoftmaxModel, MlpModel, PerceptionModel};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EXALCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const HEADER_LEN: usize = 8 + 4 + 1 + 1 + 4 + 4 + 4 + 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated checkpoint")]
    Truncated,
    #[error("unknown {what} tag {tag}")]
    UnknownTag { what: &'static str, tag: u8 },
    #[error("parameter count does not match the declared shape")]
    ShapeMismatch,
}

pub fn save_checkpoint(model: &AnyModel) -> Vec<u8> {
    let (kind, hidden) = match model {
        AnyModel::Linear(_) => (0u8, 0u32),
        AnyModel::Mlp(m) => (1u8, m.hidden() as u32),
    };
    let (head_kind, width) = match model.head() {
        Head::Bernoulli(m) => (0u8, m as u32),
        Head::Categorical(k) => (1u8, k as u32),
    };
    let params = model.params();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(kind);
    out.push(head_kind);
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&(model.input_dim() as u32).to_le_bytes());
    out.extend_from_slice(&hidden.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<AnyModel, CheckpointError> {
    if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::Truncated);
    }
    let version = u32_at(bytes, 8);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let kind = bytes[12];
    let head = match bytes[13] {
        0 => Head::Bernoulli(u32_at(bytes, 14) as usize),
        1 => Head::Categorical(u32_at(bytes, 14) as usize),
        tag => return Err(CheckpointError::UnknownTag { what: "head", tag }),
    };
    let input_dim = u32_at(bytes, 18) as usize;
    let hidden = u32_at(bytes, 22) as usize;
    let count = u64::from_le_bytes(bytes[26..34].try_into().expect("8 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != count.checked_mul(8).ok_or(CheckpointError::ShapeMismatch)? {
        return Err(CheckpointError::Truncated);
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    match kind {
        0 => LinearSoftmaxModel::from_params(input_dim, head, params).map(AnyModel::Linear),
        1 => MlpModel::from_params(input_dim, hidden, head, params).map(AnyModel::Mlp),
        tag => return Err(CheckpointError::UnknownTag { what: "model", tag }),
    }
    .ok_or(CheckpointError::ShapeMismatch)
}
