//! Model artifact file.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                              |
//! |--------------|------------------------------------------------------|
//! | 8            | magic `CBOTMODL`                                     |
//! | 4            | format version (u32)                                 |
//! | 4            | header length H (u32)                                |
//! | H            | UTF-8 JSON header: hyperparams, vocabulary, shapes   |
//! | 8 × N        | f64 tensors: gram_table, w1, b1, w2, b2, label_table |
//! | 32           | SHA-256 of every preceding byte                      |
//!
//! Matrices are row-major. The header is written with a fixed field order, so
//! identical models produce identical files.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbeddingModel, Hyperparams, Matrix};
use crate::featurizer::Vocabulary;

pub const MAGIC: &[u8; 8] = b"CBOTMODL";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;
const PREFIX_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("model I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("not a model artifact (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model checksum mismatch (file truncated or corrupted)")]
    Checksum,
    #[error("malformed model header: {0}")]
    Header(String),
    #[error("tensor data length {found} bytes, expected {expected}")]
    TensorLength { found: usize, expected: usize },
}

#[derive(Serialize, Deserialize)]
struct Header {
    hyperparams: Hyperparams,
    vocab: Vocabulary,
    num_grams: usize,
    num_labels: usize,
}

pub fn to_bytes(model: &EmbeddingModel) -> Vec<u8> {
    let header = Header {
        hyperparams: model.hyperparams.clone(),
        vocab: model.vocab.clone(),
        num_grams: model.gram_table.rows,
        num_labels: model.label_table.rows,
    };
    let header = serde_json::to_vec(&header).expect("header serializes");

    let tensors: [&[f64]; 6] = [
        &model.gram_table.data,
        &model.w1.data,
        &model.b1,
        &model.w2.data,
        &model.b2,
        &model.label_table.data,
    ];
    let n: usize = tensors.iter().map(|t| t.len()).sum();
    let mut buf = Vec::with_capacity(PREFIX_LEN + header.len() + 8 * n + CHECKSUM_LEN);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for t in tensors {
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

pub fn from_bytes(bytes: &[u8]) -> Result<EmbeddingModel, ArtifactError> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(ArtifactError::BadMagic);
    }
    if bytes.len() < PREFIX_LEN + CHECKSUM_LEN {
        return Err(ArtifactError::Checksum);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ArtifactError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let (body, digest) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(ArtifactError::Checksum);
    }

    let header_len = u32::from_le_bytes(body[12..16].try_into().unwrap()) as usize;
    let header_end = PREFIX_LEN
        .checked_add(header_len)
        .filter(|&end| end <= body.len())
        .ok_or_else(|| ArtifactError::Header("header length exceeds file".into()))?;
    let mut header: Header =
        serde_json::from_slice(&body[PREFIX_LEN..header_end]).map_err(|e| ArtifactError::Header(e.to_string()))?;
    header.vocab.reindex();
    header.hyperparams.validate().map_err(|e| ArtifactError::Header(e.to_string()))?;
    if header.vocab.num_grams() != header.num_grams || header.vocab.num_tags() != header.num_labels {
        return Err(ArtifactError::Header("vocabulary size disagrees with tensor shapes".into()));
    }

    let (v, l) = (header.num_grams, header.num_labels);
    let (h, e) = (header.hyperparams.dim_hidden, header.hyperparams.dim_embed);
    let sizes = [v * h, h * h, h, e * h, e, l * e];
    let expected = 8 * sizes.iter().sum::<usize>();
    let raw = &body[header_end..];
    if raw.len() != expected {
        return Err(ArtifactError::TensorLength { found: raw.len(), expected });
    }
    let mut values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };

    let gram_table = Matrix { rows: v, cols: h, data: take(sizes[0]) };
    let w1 = Matrix { rows: h, cols: h, data: take(sizes[1]) };
    let b1 = take(sizes[2]);
    let w2 = Matrix { rows: e, cols: h, data: take(sizes[3]) };
    let b2 = take(sizes[4]);
    let label_table = Matrix { rows: l, cols: e, data: take(sizes[5]) };

    Ok(EmbeddingModel {
        vocab: header.vocab,
        hyperparams: header.hyperparams,
        gram_table,
        w1,
        b1,
        w2,
        b2,
        label_table,
    })
}

/// Short content hash of the serialized model, taken from its checksum trailer.
pub fn model_version(model: &EmbeddingModel) -> String {
    let bytes = to_bytes(model);
    bytes[bytes.len() - CHECKSUM_LEN..][..6].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_model(model: &EmbeddingModel, path: impl AsRef<Path>) -> Result<(), ArtifactError> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EmbeddingModel, ArtifactError> {
    from_bytes(&std::fs::read(path)?)
}
