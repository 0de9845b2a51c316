//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "ULCK" | u32 version | u64 header_len | header (UTF-8 JSON) | f32 payload | u32 CRC32(payload)
//! ```
//!
//! The header carries the model config, the vocabulary and a manifest of
//! named tensors with their shapes and byte offsets into the payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Model, ModelConfig, ModelError};
use crate::corpus::vocab::Vocab;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ULCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Refuse absurd header sizes before allocating.
const MAX_HEADER_LEN: u64 = 64 << 20;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated: {0}")]
    Truncated(&'static str),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("payload checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub vocab: Vocab,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

pub fn encode_checkpoint(model: &Model<f32>, vocab: &Vocab) -> Vec<u8> {
    let mut payload = Vec::with_capacity(model.param_count() * 4);
    let mut tensors = Vec::new();
    for (spec, p) in model.config().layout().into_iter().zip(model.params()) {
        let offset = payload.len() as u64;
        for &x in p.data() {
            payload.extend_from_slice(&x.to_le_bytes());
        }
        tensors.push(TensorEntry {
            name: spec.name,
            shape: p.shape().to_vec(),
            offset,
            len: (payload.len() as u64) - offset,
        });
    }
    let header = Header {
        config: *model.config(),
        vocab: vocab.clone(),
        tensors,
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(4 + 4 + 8 + header.len() + payload.len() + 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
    if bytes.len() < n {
        return Err(CheckpointError::Truncated(what));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn decode_checkpoint(mut bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if take(&mut bytes, 4, "magic")? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4, "version")?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes(take(&mut bytes, 8, "header length")?.try_into().unwrap());
    if header_len > MAX_HEADER_LEN || header_len > bytes.len() as u64 {
        return Err(CheckpointError::Truncated("header"));
    }
    let header: Header = serde_json::from_slice(take(&mut bytes, header_len as usize, "header")?)
        .map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;
    if bytes.len() < 4 {
        return Err(CheckpointError::Truncated("checksum"));
    }
    let (payload, crc) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc.try_into().unwrap());

    header
        .config
        .validate()
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    if header.config.vocab_size != header.vocab.len() {
        return Err(CheckpointError::Corrupt(format!(
            "config vocab_size {} disagrees with vocabulary of {} tokens",
            header.config.vocab_size,
            header.vocab.len()
        )));
    }
    // Check the tensor count and widths before materializing the layout, so
    // a forged config cannot request an enormous allocation.
    let c = &header.config;
    let n_tensors = c
        .n_heads
        .checked_mul(4)
        .and_then(|x| x.checked_add(8))
        .and_then(|x| x.checked_mul(c.n_layers))
        .and_then(|x| x.checked_add(5));
    if n_tensors != Some(header.tensors.len()) || c.ff_mult.checked_mul(c.embed_dim).is_none() {
        return Err(CheckpointError::Corrupt(
            "tensor manifest does not match the architecture".into(),
        ));
    }
    let layout = header.config.layout();
    if layout.len() != header.tensors.len() {
        return Err(CheckpointError::Corrupt(
            "tensor manifest does not match the architecture".into(),
        ));
    }
    let mut expected_offset = 0u64;
    for (spec, entry) in layout.iter().zip(&header.tensors) {
        let inconsistent = || CheckpointError::Corrupt(format!("tensor entry {:?} is inconsistent", entry.name));
        let n_bytes = spec
            .shape
            .iter()
            .try_fold(4u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(inconsistent)?;
        if entry.name != spec.name
            || entry.shape != spec.shape
            || entry.offset != expected_offset
            || entry.len != n_bytes
        {
            return Err(inconsistent());
        }
        expected_offset = expected_offset.checked_add(entry.len).ok_or_else(inconsistent)?;
    }
    if expected_offset != payload.len() as u64 {
        return Err(CheckpointError::Truncated("payload"));
    }
    let computed = crc32fast::hash(payload);
    if computed != stored {
        return Err(CheckpointError::Checksum { stored, computed });
    }

    let mut params = Vec::with_capacity(layout.len());
    for entry in &header.tensors {
        let bytes = &payload[entry.offset as usize..(entry.offset + entry.len) as usize];
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(CheckpointError::Corrupt(format!(
                "tensor {:?} holds non-finite values",
                entry.name
            )));
        }
        params.push(Tensor::new(entry.shape.clone(), data).map_err(|e| CheckpointError::Corrupt(e.to_string()))?);
    }
    let model =
        Model::from_params(header.config, params).map_err(|e: ModelError| CheckpointError::Corrupt(e.to_string()))?;
    Ok(Checkpoint {
        model,
        vocab: header.vocab,
    })
}

/// Writes atomically through a sibling temporary file.
pub fn save_checkpoint(model: &Model<f32>, vocab: &Vocab, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(model, vocab);
    let tmp = path.with_extension("ulck.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::TokenizerKind;

    fn sample() -> (Model<f32>, Vocab) {
        let vocab = Vocab::build(TokenizerKind::Word, ["a b c d e"]).unwrap();
        let cfg = ModelConfig {
            vocab_size: vocab.len(),
            embed_dim: 8,
            n_layers: 1,
            n_heads: 1,
            ff_mult: 1,
            context_len: 6,
            init_seed: 3,
        };
        (Model::init(cfg).unwrap(), vocab)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (m, v) = sample();
        let back = decode_checkpoint(&encode_checkpoint(&m, &v)).unwrap();
        assert_eq!(back.vocab, v);
        assert_eq!(back.model.config(), m.config());
        for (a, b) in back.model.params().iter().zip(m.params()) {
            let ab: Vec<u32> = a.data().iter().map(|x| x.to_bits()).collect();
            let bb: Vec<u32> = b.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn every_truncation_is_an_error() {
        let (m, v) = sample();
        let bytes = encode_checkpoint(&m, &v);
        for cut in [0, 3, 7, 15, 40, bytes.len() / 2, bytes.len() - 5, bytes.len() - 1] {
            assert!(decode_checkpoint(&bytes[..cut]).is_err(), "cut at {cut}");
        }
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let (m, v) = sample();
        let mut bytes = encode_checkpoint(&m, &v);
        let n = bytes.len();
        bytes[n - 10] ^= 0x01;
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(CheckpointError::Checksum { .. })
        ));
    }

    #[test]
    fn version_and_magic_checked() {
        let (m, v) = sample();
        let mut bytes = encode_checkpoint(&m, &v);
        bytes[4] = 9;
        assert!(matches!(
            decode_checkpoint(&bytes),
            Err(CheckpointError::UnsupportedVersion(9))
        ));
        bytes[0] = b'X';
        assert!(matches!(decode_checkpoint(&bytes), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn file_round_trip() {
        let (m, v) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ulck");
        save_checkpoint(&m, &v, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.model, m);
        assert!(matches!(
            load_checkpoint(dir.path().join("missing")),
            Err(CheckpointError::Io(_))
        ));
    }
}
