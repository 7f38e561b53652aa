//! Checkpoint container.
//!
//! ```text
//! "IAVC" | u32 version | u64 header_len | header (JSON) | entry* | u32 crc32
//! ```
//!
//! Entries use the tensor-archive encoding. The CRC covers every byte
//! before the trailer. Optimizer moments are stored as `adam.m/<name>` and
//! `adam.v/<name>` entries.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::archive::{encode_entry, Reader, MAGIC};
use crate::captioner::Vocabulary;
use crate::config::HyperConfig;
use crate::error::{Error, Result};
use crate::identity::PlayerCatalog;
use crate::params::ParameterStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub moments: Vec<(String, Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: HyperConfig,
    pub catalog: PlayerCatalog,
    pub vocab: Vocabulary,
    pub params: ParameterStore,
    pub optimizer: Option<OptimizerState>,
    /// Free-form training state (epochs completed, run config, ...).
    pub extra: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: HyperConfig,
    catalog: Vec<String>,
    vocab: Vocabulary,
    params: Vec<(String, bool)>,
    optimizer_step: Option<u64>,
    optimizer_params: Vec<String>,
    extra: serde_json::Value,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let header = Header {
        config: ck.config.clone(),
        catalog: ck.catalog.names().to_vec(),
        vocab: ck.vocab.clone(),
        params: ck.params.iter().map(|e| (e.name.clone(), e.trainable)).collect(),
        optimizer_step: ck.optimizer.as_ref().map(|o| o.step),
        optimizer_params: ck
            .optimizer
            .as_ref()
            .map(|o| o.moments.iter().map(|m| m.0.clone()).collect())
            .unwrap_or_default(),
        extra: ck.extra.clone(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for e in ck.params.iter() {
        encode_entry(&mut out, &e.name, &e.value);
    }
    if let Some(o) = &ck.optimizer {
        for (name, m, v) in &o.moments {
            encode_entry(&mut out, &format!("adam.m/{name}"), &Tensor::vector(m.clone())?);
            encode_entry(&mut out, &format!("adam.v/{name}"), &Tensor::vector(v.clone())?);
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::CorruptFile("not a checkpoint".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    if bytes.len() < 12 {
        return Err(Error::CorruptFile("missing checksum".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::CorruptFile("checksum mismatch".into()));
    }

    let mut r = Reader::new(&body[8..]);
    let header_len = r.u64()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::CorruptFile(format!("header: {e}")))?;
    let mut entries = std::collections::HashMap::new();
    while !r.is_done() {
        let (name, t) = r.entry()?;
        entries.insert(name, t);
    }
    let mut take = |name: &str| {
        entries
            .remove(name)
            .ok_or_else(|| Error::CorruptFile(format!("missing entry `{name}`")))
    };

    let mut params = ParameterStore::new();
    for (name, trainable) in &header.params {
        params.insert(name, take(name)?, *trainable)?;
    }
    let optimizer = match header.optimizer_step {
        None => None,
        Some(step) => {
            let mut moments = Vec::new();
            for name in &header.optimizer_params {
                let m = take(&format!("adam.m/{name}"))?.into_data();
                let v = take(&format!("adam.v/{name}"))?.into_data();
                moments.push((name.clone(), m, v));
            }
            Some(OptimizerState { step, moments })
        }
    };
    Ok(Checkpoint {
        config: header.config,
        catalog: PlayerCatalog::new(header.catalog)?,
        vocab: header.vocab,
        params,
        optimizer,
        extra: header.extra,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    fs::write(path, encode_checkpoint(ck)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    match fs::read(path) {
        Ok(bytes) => decode_checkpoint(&bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(Error::MissingCheckpoint(path.display().to_string()))
        }
        Err(e) => Err(e.into()),
    }
}
